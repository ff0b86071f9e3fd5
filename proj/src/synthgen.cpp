#include "pcp/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcp/errors.hpp"

namespace pcp {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write file: " + path);
    out << content;
}

} // namespace

void SynthSpec::validate() const {
    priors.validate();
    groups.validate(priors.concept_count());
    if (feature_dim == 0) throw ContractError("synth spec: feature_dim must be positive");
    if (!(noise_sigma >= 0.0)) throw ContractError("synth spec: noise_sigma must be >= 0");
    if (n_samples == 0) throw ContractError("synth spec: n_samples must be positive");
    if (class_balance.size() != priors.class_count())
        throw DimensionError("synth spec: class_balance length must equal class count");
    double total = 0.0;
    for (double p : class_balance) {
        if (!(p >= 0.0)) throw ContractError("synth spec: invalid simplex (negative mass)");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ContractError("synth spec: invalid simplex (mass sums to " +
                            std::to_string(total) + ")");
    if (!mixing.data.empty() &&
        (mixing.rows != feature_dim || mixing.cols != priors.concept_count()))
        throw DimensionError("synth spec: mixing matrix must be feature_dim x concept_count");
}

std::string SynthSpec::to_json() const {
    nlohmann::json doc;
    doc["class_names"] = priors.class_names;
    doc["concept_names"] = priors.concept_names;
    auto rows = nlohmann::json::array();
    for (std::size_t m = 0; m < priors.concept_count(); ++m) {
        auto row = nlohmann::json::array();
        for (std::size_t k = 0; k < priors.class_count(); ++k) row.push_back(priors.probs(m, k));
        rows.push_back(row);
    }
    doc["priors"] = rows;
    auto jgroups = nlohmann::json::array();
    for (const auto& g : groups.groups) {
        nlohmann::json jg;
        jg["name"] = g.name;
        auto members = nlohmann::json::array();
        for (std::size_t m : g.members) members.push_back(priors.concept_names[m]);
        jg["members"] = members;
        jgroups.push_back(jg);
    }
    doc["groups"] = jgroups;
    doc["feature_dim"] = feature_dim;
    doc["noise_sigma"] = noise_sigma;
    doc["n_samples"] = n_samples;
    doc["class_balance"] = class_balance;
    if (!mixing.data.empty()) {
        auto amat = nlohmann::json::array();
        for (std::size_t r = 0; r < mixing.rows; ++r) {
            auto row = nlohmann::json::array();
            for (std::size_t c = 0; c < mixing.cols; ++c) row.push_back(mixing(r, c));
            amat.push_back(row);
        }
        doc["mixing_matrix"] = amat;
    }
    return doc.dump(2) + "\n";
}

SynthSpec SynthSpec::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("synth spec: ") + e.what());
    }
    SynthSpec spec;
    try {
        spec.priors.class_names = doc.at("class_names").get<std::vector<std::string>>();
        spec.priors.concept_names = doc.at("concept_names").get<std::vector<std::string>>();
        const auto& rows = doc.at("priors");
        spec.priors.probs =
            Matrix(spec.priors.concept_names.size(), spec.priors.class_names.size());
        if (rows.size() != spec.priors.concept_count())
            throw ParseError("synth spec: priors row count must match concept_names");
        for (std::size_t m = 0; m < spec.priors.concept_count(); ++m) {
            if (rows[m].size() != spec.priors.class_count())
                throw ParseError("synth spec: ragged priors row");
            for (std::size_t k = 0; k < spec.priors.class_count(); ++k)
                spec.priors.probs(m, k) = rows[m][k].get<double>();
        }
        std::vector<char> grouped(spec.priors.concept_count(), 0);
        for (const auto& jg : doc.value("groups", nlohmann::json::array())) {
            ConceptGroup g;
            g.name = jg.value("name", "group_" + std::to_string(spec.groups.groups.size()));
            for (const auto& member : jg.at("members")) {
                const std::size_t idx = spec.priors.concept_index(member.get<std::string>());
                if (grouped[idx]) throw ParseError("overlapping groups in synth spec");
                grouped[idx] = 1;
                g.members.push_back(idx);
            }
            spec.groups.groups.push_back(std::move(g));
        }
        for (std::size_t m = 0; m < spec.priors.concept_count(); ++m)
            if (!grouped[m]) spec.groups.singletons.push_back(m);
        spec.feature_dim = doc.at("feature_dim").get<std::size_t>();
        spec.noise_sigma = doc.value("noise_sigma", 0.1);
        spec.n_samples = doc.at("n_samples").get<std::size_t>();
        spec.class_balance = doc.at("class_balance").get<Vec>();
        if (doc.contains("mixing_matrix")) {
            const auto& amat = doc["mixing_matrix"];
            spec.mixing = Matrix(amat.size(), amat.empty() ? 0 : amat[0].size());
            for (std::size_t r = 0; r < spec.mixing.rows; ++r) {
                if (amat[r].size() != spec.mixing.cols)
                    throw ParseError("synth spec: ragged mixing matrix");
                for (std::size_t c = 0; c < spec.mixing.cols; ++c)
                    spec.mixing(r, c) = amat[r][c].get<double>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("synth spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

SynthSpec load_synth_spec(const std::string& path) {
    return SynthSpec::from_json(read_file(path));
}

SynthDataset generate(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t num_concepts = spec.priors.concept_count();
    const std::size_t num_classes = spec.priors.class_count();

    Rng root(seed);
    Matrix mixing = spec.mixing;
    if (mixing.data.empty()) {
        Rng r = root.fork("mixing");
        mixing = Matrix(spec.feature_dim, num_concepts);
        for (double& v : mixing.data) v = r.uniform(-1.0, 1.0);
    }

    Rng draw = root.fork("data");
    std::vector<SynthSample> samples;
    samples.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        SynthSample s;
        s.y = draw.categorical(spec.class_balance);

        s.c_true.assign(num_concepts, 0.0);
        for (const auto& g : spec.groups.groups) {
            // exactly one active member per group, categorical on normalized priors
            Vec weights(g.members.size());
            double total = 0.0;
            for (std::size_t j = 0; j < g.members.size(); ++j) {
                weights[j] = spec.priors.probs(g.members[j], s.y);
                total += weights[j];
            }
            if (total <= 0.0)
                throw ContractError("synth spec: group '" + g.name +
                                    "' has zero total weight for class " +
                                    spec.priors.class_names[s.y]);
            s.c_true[g.members[draw.categorical(weights)]] = 1.0;
        }
        for (std::size_t m : spec.groups.singletons)
            s.c_true[m] = draw.bernoulli(spec.priors.probs(m, s.y)) ? 1.0 : 0.0;

        s.x = matvec(mixing, s.c_true);
        if (spec.noise_sigma > 0.0)
            for (double& v : s.x) v += draw.normal(0.0, spec.noise_sigma);
        samples.push_back(std::move(s));
    }

    // 70/15/15 stratified by class, assigned in generation order.
    SynthDataset out;
    out.concept_names = spec.priors.concept_names;
    out.class_names = spec.priors.class_names;
    std::vector<std::vector<std::size_t>> per_class(num_classes);
    for (std::size_t i = 0; i < samples.size(); ++i) per_class[samples[i].y].push_back(i);
    for (const auto& members : per_class) {
        const std::size_t n_train = members.size() * 70 / 100;
        const std::size_t n_val = members.size() * 15 / 100;
        for (std::size_t j = 0; j < members.size(); ++j) {
            auto& dst = j < n_train ? out.train : (j < n_train + n_val ? out.val : out.test);
            dst.push_back(samples[members[j]]);
        }
    }
    return out;
}

std::vector<Example> to_examples(std::span<const SynthSample> samples) {
    std::vector<Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.x, s.y});
    return out;
}

PriorTable effective_priors(std::span<const SynthSample> samples,
                            const std::vector<std::string>& concept_names,
                            const std::vector<std::string>& class_names) {
    PriorTable table;
    table.concept_names = concept_names;
    table.class_names = class_names;
    table.probs = Matrix(concept_names.size(), class_names.size());

    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& s : samples) {
        if (s.y >= class_names.size()) throw DimensionError("effective_priors: label out of range");
        if (s.c_true.size() != concept_names.size())
            throw DimensionError("effective_priors: sample lacks ground-truth concepts");
        ++counts[s.y];
        for (std::size_t m = 0; m < concept_names.size(); ++m)
            table.probs(m, s.y) += s.c_true[m];
    }
    for (std::size_t k = 0; k < class_names.size(); ++k) {
        if (counts[k] == 0)
            throw ContractError("effective_priors: empty class '" + class_names[k] + "'");
        for (std::size_t m = 0; m < concept_names.size(); ++m)
            table.probs(m, k) /= static_cast<double>(counts[k]);
    }
    table.validate();
    return table;
}

PriorTable effective_priors(const SynthDataset& dataset) {
    std::vector<SynthSample> all;
    all.reserve(dataset.train.size() + dataset.val.size() + dataset.test.size());
    all.insert(all.end(), dataset.train.begin(), dataset.train.end());
    all.insert(all.end(), dataset.val.begin(), dataset.val.end());
    all.insert(all.end(), dataset.test.begin(), dataset.test.end());
    return effective_priors(all, dataset.concept_names, dataset.class_names);
}

std::string serialize_samples_jsonl(std::span<const SynthSample> samples) {
    std::ostringstream out;
    for (const auto& s : samples) {
        nlohmann::json line;
        line["x"] = s.x;
        line["y"] = s.y;
        auto bits = nlohmann::json::array();
        for (double b : s.c_true) bits.push_back(static_cast<int>(b));
        line["c"] = bits;
        out << line.dump() << '\n';
    }
    return out.str();
}

std::vector<SynthSample> parse_samples_jsonl(const std::string& text,
                                             const std::string& origin) {
    std::vector<SynthSample> samples;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
            SynthSample s;
            s.x = doc.at("x").get<Vec>();
            s.y = doc.at("y").get<std::size_t>();
            if (doc.contains("c")) {
                for (const auto& b : doc["c"]) {
                    const double v = b.get<double>();
                    if (v != 0.0 && v != 1.0)
                        throw ParseError(origin + ":" + std::to_string(line_no) +
                                         ": concept bits must be 0 or 1");
                    s.c_true.push_back(v);
                }
            }
            samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return samples;
}

void save_dataset(const SynthDataset& dataset, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir + "/train.jsonl", serialize_samples_jsonl(dataset.train));
    write_file(dir + "/val.jsonl", serialize_samples_jsonl(dataset.val));
    write_file(dir + "/test.jsonl", serialize_samples_jsonl(dataset.test));
}

SynthDataset load_dataset_dir(const std::string& dir) {
    SynthDataset out;
    out.train = parse_samples_jsonl(read_file(dir + "/train.jsonl"), dir + "/train.jsonl");
    out.val = parse_samples_jsonl(read_file(dir + "/val.jsonl"), dir + "/val.jsonl");
    out.test = parse_samples_jsonl(read_file(dir + "/test.jsonl"), dir + "/test.jsonl");
    return out;
}

SynthSpec default_synth_spec() {
    SynthSpec spec;
    spec.priors.class_names = {"class_a", "class_b", "class_c"};
    spec.priors.concept_names = {
        "size_small",  "size_medium",  "size_large",  // group: size
        "texture_smooth", "texture_rough",            // group: texture
        "marker_alpha", "marker_beta", "marker_gamma",
        "halo_faint", "halo_dense", "core_bright", "rim_spotted"};
    const double prior_rows[12][3] = {
        {0.850, 0.075, 0.075}, // size_small
        {0.075, 0.850, 0.075}, // size_medium
        {0.075, 0.075, 0.850}, // size_large
        {0.85, 0.15, 0.78},    // texture_smooth
        {0.15, 0.85, 0.22},    // texture_rough
        {0.88, 0.10, 0.10},    // marker_alpha
        {0.10, 0.88, 0.10},    // marker_beta
        {0.10, 0.10, 0.88},    // marker_gamma
        {0.85, 0.12, 0.12},    // halo_faint
        {0.12, 0.85, 0.12},    // halo_dense
        {0.10, 0.78, 0.70},    // core_bright
        {0.80, 0.72, 0.10},    // rim_spotted
    };
    spec.priors.probs = Matrix(12, 3);
    for (std::size_t m = 0; m < 12; ++m)
        for (std::size_t k = 0; k < 3; ++k) spec.priors.probs(m, k) = prior_rows[m][k];
    spec.groups.groups.push_back({"size", {0, 1, 2}});
    spec.groups.groups.push_back({"texture", {3, 4}});
    for (std::size_t m = 5; m < 12; ++m) spec.groups.singletons.push_back(m);
    spec.feature_dim = 16;
    spec.noise_sigma = 0.1;
    spec.n_samples = 3000;
    spec.class_balance = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    spec.validate();
    return spec;
}

} // namespace pcp
