#include "pcp/diffcheck.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pcp/errors.hpp"

namespace pcp {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({1e-12, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

Vec finite_diff(const std::function<double(const ParamSet&)>& loss_at, const ParamSet& params,
                double h) {
    if (!(h >= 1e-8 && h <= 1e-4)) throw ContractError("finite_diff: h must be in [1e-8, 1e-4]");
    ParamSet probe = params;
    Vec flat = params.flatten();
    Vec grad(flat.size(), 0.0);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double keep = flat[i];
        flat[i] = keep + h;
        probe.unflatten(flat);
        const double up = loss_at(probe);
        flat[i] = keep - h;
        probe.unflatten(flat);
        const double down = loss_at(probe);
        flat[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw ContractError("finite_diff: non-finite loss evaluation");
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

std::string GradCheckConfig::to_json() const {
    nlohmann::json doc;
    doc["feature_dim"] = feature_dim;
    doc["concept_count"] = concept_count;
    doc["class_count"] = class_count;
    doc["batch_size"] = batch_size;
    doc["hidden_widths"] = hidden_widths;
    doc["proj_width"] = proj_width;
    doc["beta"] = beta;
    doc["mu"] = mu;
    doc["lambda_kl"] = lambda_kl;
    doc["lambda_ent"] = lambda_ent;
    doc["kl_eps"] = kl_eps;
    doc["h"] = h;
    doc["threshold"] = threshold;
    doc["kink_band"] = kink_band;
    doc["significance_floor"] = significance_floor;
    doc["inject_fault"] = inject_fault;
    return doc.dump(2) + "\n";
}

GradCheckConfig GradCheckConfig::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("gradcheck config: ") + e.what());
    }
    GradCheckConfig c;
    c.feature_dim = doc.value("feature_dim", c.feature_dim);
    c.concept_count = doc.value("concept_count", c.concept_count);
    c.class_count = doc.value("class_count", c.class_count);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.hidden_widths = doc.value("hidden_widths", c.hidden_widths);
    c.proj_width = doc.value("proj_width", c.proj_width);
    c.beta = doc.value("beta", c.beta);
    c.mu = doc.value("mu", c.mu);
    c.lambda_kl = doc.value("lambda_kl", c.lambda_kl);
    c.lambda_ent = doc.value("lambda_ent", c.lambda_ent);
    c.kl_eps = doc.value("kl_eps", c.kl_eps);
    c.h = doc.value("h", c.h);
    c.threshold = doc.value("threshold", c.threshold);
    c.kink_band = doc.value("kink_band", c.kink_band);
    c.significance_floor = doc.value("significance_floor", c.significance_floor);
    c.inject_fault = doc.value("inject_fault", c.inject_fault);
    if (c.class_count < 2) throw ContractError("gradcheck: at least two classes required");
    if (c.batch_size < 2 * c.class_count)
        throw ContractError("gradcheck: batch must hold two samples per class");
    return c;
}

std::string GradReport::to_json() const {
    nlohmann::json doc;
    doc["blocks"] = nlohmann::json::array();
    for (const auto& b : blocks)
        doc["blocks"].push_back({{"name", b.name}, {"max_rel_error", b.max_rel_error}});
    doc["global_max_rel_error"] = global_max_rel_error;
    doc["significant_max_rel_error"] = significant_max_rel_error;
    doc["sub_floor_coordinates"] = sub_floor_coordinates;
    doc["skipped_kink_coordinates"] = skipped_kink_coordinates;
    doc["checked_coordinates"] = checked_coordinates;
    doc["threshold"] = threshold;
    doc["passed"] = passed;
    return doc.dump(2) + "\n";
}

namespace {

// Flat-index boundaries of each named parameter block, in flatten() order.
std::vector<std::pair<std::string, std::size_t>> block_layout(const ParamSet& params) {
    std::vector<std::pair<std::string, std::size_t>> layout;
    for (std::size_t l = 0; l < params.extractor.size(); ++l) {
        layout.emplace_back("extractor" + std::to_string(l) + ".weights",
                            params.extractor[l].weights.data.size());
        layout.emplace_back("extractor" + std::to_string(l) + ".bias",
                            params.extractor[l].bias.size());
    }
    layout.emplace_back("w1", params.w1.data.size());
    layout.emplace_back("w2", params.w2.data.size());
    layout.emplace_back("wc", params.wc.data.size());
    return layout;
}

} // namespace

GradReport grad_check(const GradCheckConfig& config, std::uint64_t seed) {
    Rng root(seed);

    // Random prior table over generated names; probabilities kept away from
    // the clamp band so the KL term stays smooth around the operating point.
    PriorTable table;
    for (std::size_t m = 0; m < config.concept_count; ++m)
        table.concept_names.push_back("c" + std::to_string(m));
    for (std::size_t k = 0; k < config.class_count; ++k)
        table.class_names.push_back("k" + std::to_string(k));
    table.probs = Matrix(config.concept_count, config.class_count);
    {
        Rng r = root.fork("priors");
        for (double& p : table.probs.data) p = r.uniform(0.1, 0.9);
    }
    table.validate();

    // One two-member group plus singletons exercises both KL paths.
    ConceptGroups groups = ConceptGroups::all_singletons(config.concept_count);
    if (config.concept_count >= 2) {
        groups = ConceptGroups{};
        groups.groups.push_back({"g0", {0, 1}});
        for (std::size_t m = 2; m < config.concept_count; ++m) groups.singletons.push_back(m);
    }

    ModelShape shape{config.feature_dim, config.hidden_widths, config.concept_count,
                     config.proj_width};
    Rng init_rng = root.fork("init");
    ParamSet params = init_params(shape, config.beta, init_rng);

    // Batch: labels round-robin so every class has >= 2 members, inputs
    // standard normal, surrogates drawn once and frozen for every loss
    // evaluation in the sweep.
    std::vector<std::size_t> labels(config.batch_size);
    for (std::size_t i = 0; i < config.batch_size; ++i) labels[i] = i % config.class_count;
    std::vector<Vec> inputs(config.batch_size, Vec(config.feature_dim, 0.0));
    {
        Rng r = root.fork("inputs");
        for (auto& x : inputs)
            for (double& v : x) v = r.normal();
    }
    std::vector<Vec> surrogates;
    {
        Rng r = root.fork("surrogate");
        for (std::size_t i = 0; i < config.batch_size; ++i)
            surrogates.push_back(sample_surrogate(table, labels[i], r).bits);
    }
    TripletPairs pairs;
    {
        Rng r = root.fork("triplet");
        pairs = sample_triplet_pairs(labels, r);
    }

    TotalLossConfig loss_config;
    loss_config.mu = config.mu;
    loss_config.lambda_kl = config.lambda_kl;
    loss_config.lambda_ent = config.lambda_ent;
    loss_config.kl_eps = config.kl_eps;

    auto evaluate = [&](const ParamSet& p) {
        std::vector<ForwardTrace> traces;
        traces.reserve(config.batch_size);
        for (std::size_t i = 0; i < config.batch_size; ++i)
            traces.push_back(forward_with_surrogate(inputs[i], surrogates[i], p));
        return total_loss(traces, labels, p, table, groups, loss_config, nullptr, &pairs);
    };

    const TotalLossResult base = evaluate(params);
    Vec analytic = base.grads.flatten();
    if (config.inject_fault && !analytic.empty()) analytic[0] = -analytic[0] - 1.0;

    ParamSet probe = params;
    Vec flat = params.flatten();
    GradReport report;
    report.threshold = config.threshold;

    const auto layout = block_layout(params);
    std::size_t flat_index = 0;
    for (const auto& [block_name, block_size] : layout) {
        BlockError be{block_name, 0.0};
        for (std::size_t j = 0; j < block_size; ++j, ++flat_index) {
            const double keep = flat[flat_index];
            flat[flat_index] = keep + config.h;
            probe.unflatten(flat);
            const TotalLossResult up = evaluate(probe);
            flat[flat_index] = keep - config.h;
            probe.unflatten(flat);
            const TotalLossResult down = evaluate(probe);
            flat[flat_index] = keep;

            const bool near_kink = up.min_abs_slack < config.kink_band ||
                                   down.min_abs_slack < config.kink_band ||
                                   base.min_abs_slack < config.kink_band ||
                                   up.hinge_active != down.hinge_active;
            if (near_kink) {
                ++report.skipped_kink_coordinates;
                continue;
            }
            const double numeric =
                (up.breakdown.total - down.breakdown.total) / (2.0 * config.h);
            const double err = relative_error(analytic[flat_index], numeric);
            be.max_rel_error = std::max(be.max_rel_error, err);
            if (std::max(std::abs(analytic[flat_index]), std::abs(numeric)) >=
                config.significance_floor)
                report.significant_max_rel_error =
                    std::max(report.significant_max_rel_error, err);
            else
                ++report.sub_floor_coordinates;
            ++report.checked_coordinates;
        }
        report.global_max_rel_error = std::max(report.global_max_rel_error, be.max_rel_error);
        report.blocks.push_back(be);
    }
    probe.unflatten(flat);

    report.passed = report.global_max_rel_error < config.threshold;
    return report;
}

} // namespace pcp
