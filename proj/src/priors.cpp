#include "pcp/priors.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pcp/errors.hpp"

namespace pcp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

double parse_prob(const std::string& token, const std::string& origin, std::size_t line_no) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size() || errno == ERANGE) {
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": not a number: '" + token + "'");
    }
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_unique(const std::vector<std::string>& names, const char* what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second)
            throw ParseError(std::string("duplicate ") + what + " name: '" + n + "'");
    }
}

} // namespace

Vec PriorTable::class_column(std::size_t class_idx) const {
    Vec col(concept_count());
    for (std::size_t m = 0; m < concept_count(); ++m) col[m] = probs(m, class_idx);
    return col;
}

std::size_t PriorTable::concept_index(const std::string& name) const {
    auto it = std::find(concept_names.begin(), concept_names.end(), name);
    if (it == concept_names.end())
        throw DimensionError("unknown concept name: '" + name + "'");
    return static_cast<std::size_t>(it - concept_names.begin());
}

void PriorTable::validate() const {
    if (concept_count() < 1) throw ParseError("at least one concept required");
    if (class_count() < 2) throw ParseError("at least two classes required");
    if (probs.rows != concept_count() || probs.cols != class_count())
        throw DimensionError("prior table shape does not match names");
    check_unique(concept_names, "concept");
    check_unique(class_names, "class");
    for (std::size_t m = 0; m < probs.rows; ++m)
        for (std::size_t k = 0; k < probs.cols; ++k) {
            const double p = probs(m, k);
            if (!(p >= 0.0 && p <= 1.0))
                throw ParseError("probability out of range: P(" + concept_names[m] +
                                 " | " + class_names[k] + ") = " + std::to_string(p));
        }
}

PriorTable parse_priors_csv(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError(origin + ": empty priors file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "concept")
        throw ParseError(origin + ": header must be 'concept,<class_0>,...'");

    PriorTable table;
    table.class_names.assign(header.begin() + 1, header.end());

    std::vector<Vec> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": ragged row: expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        table.concept_names.push_back(fields[0]);
        Vec row(fields.size() - 1);
        for (std::size_t k = 1; k < fields.size(); ++k)
            row[k - 1] = parse_prob(fields[k], origin, line_no);
        rows.push_back(std::move(row));
    }

    table.probs = Matrix(rows.size(), table.class_names.size());
    for (std::size_t m = 0; m < rows.size(); ++m)
        for (std::size_t k = 0; k < table.class_names.size(); ++k)
            table.probs(m, k) = rows[m][k];

    table.validate();
    return table;
}

PriorTable load_priors(const std::string& path) {
    return parse_priors_csv(read_file(path), path);
}

std::string serialize_priors_csv(const PriorTable& table) {
    std::ostringstream out;
    out << "concept";
    for (const auto& c : table.class_names) out << ',' << c;
    out << '\n';
    out.precision(17);
    for (std::size_t m = 0; m < table.concept_count(); ++m) {
        out << table.concept_names[m];
        for (std::size_t k = 0; k < table.class_count(); ++k) out << ',' << table.probs(m, k);
        out << '\n';
    }
    return out.str();
}

void save_priors(const PriorTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write file: " + path);
    out << serialize_priors_csv(table);
}

void ConceptGroups::validate(std::size_t concept_count) const {
    std::vector<char> seen(concept_count, 0);
    for (const auto& g : groups) {
        if (g.members.size() < 2)
            throw ParseError("group '" + g.name + "' has fewer than two members");
        for (std::size_t m : g.members) {
            if (m >= concept_count) throw DimensionError("group member index out of range");
            if (seen[m]) throw ParseError("overlapping groups: concept index " +
                                          std::to_string(m) + " appears twice");
            seen[m] = 1;
        }
    }
    std::vector<char> single(concept_count, 0);
    for (std::size_t m : singletons) {
        if (m >= concept_count) throw DimensionError("singleton index out of range");
        if (seen[m] || single[m])
            throw ParseError("overlapping groups: concept index " + std::to_string(m) +
                             " is both grouped and singleton");
        single[m] = 1;
    }
    for (std::size_t m = 0; m < concept_count; ++m)
        if (!seen[m] && !single[m])
            throw ParseError("partition does not cover concept index " + std::to_string(m));
}

ConceptGroups ConceptGroups::all_singletons(std::size_t concept_count) {
    ConceptGroups g;
    g.singletons.resize(concept_count);
    for (std::size_t m = 0; m < concept_count; ++m) g.singletons[m] = m;
    return g;
}

ConceptGroups parse_groups_json(const std::string& text, const PriorTable& table,
                                const std::string& origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    ConceptGroups out;
    std::vector<char> grouped(table.concept_count(), 0);
    if (doc.contains("groups")) {
        if (!doc["groups"].is_array()) throw ParseError(origin + ": 'groups' must be an array");
        for (const auto& g : doc["groups"]) {
            ConceptGroup group;
            group.name = g.value("name", std::string("group_") +
                                             std::to_string(out.groups.size()));
            if (!g.contains("members") || !g["members"].is_array())
                throw ParseError(origin + ": group '" + group.name + "' needs a members array");
            for (const auto& member : g["members"]) {
                if (!member.is_string())
                    throw ParseError(origin + ": group members must be concept names");
                const std::size_t idx = table.concept_index(member.get<std::string>());
                if (grouped[idx])
                    throw ParseError("overlapping groups: concept '" +
                                     member.get<std::string>() + "' appears twice");
                grouped[idx] = 1;
                group.members.push_back(idx);
            }
            if (group.members.size() < 2)
                throw ParseError("group '" + group.name + "' has fewer than two members");
            out.groups.push_back(std::move(group));
        }
    }
    for (std::size_t m = 0; m < table.concept_count(); ++m)
        if (!grouped[m]) out.singletons.push_back(m);
    out.validate(table.concept_count());
    return out;
}

ConceptGroups load_groups(const std::string& path, const PriorTable& table) {
    return parse_groups_json(read_file(path), table, path);
}

std::string serialize_groups_json(const PriorTable& table, const ConceptGroups& groups) {
    nlohmann::json doc;
    doc["groups"] = nlohmann::json::array();
    for (const auto& g : groups.groups) {
        nlohmann::json jg;
        jg["name"] = g.name;
        jg["members"] = nlohmann::json::array();
        for (std::size_t m : g.members) jg["members"].push_back(table.concept_names[m]);
        doc["groups"].push_back(jg);
    }
    return doc.dump(2) + "\n";
}

SurrogateVector sample_surrogate(const PriorTable& table, std::size_t y, Rng& rng) {
    if (y >= table.class_count())
        throw DimensionError("class index " + std::to_string(y) + " out of range (L=" +
                             std::to_string(table.class_count()) + ")");
    SurrogateVector s;
    s.source_class = y;
    s.bits.resize(table.concept_count());
    for (std::size_t m = 0; m < table.concept_count(); ++m)
        s.bits[m] = rng.bernoulli(table.probs(m, y)) ? 1.0 : 0.0;
    return s;
}

} // namespace pcp
