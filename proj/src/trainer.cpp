#include "pcp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcp/errors.hpp"

namespace pcp {

namespace {

nlohmann::json breakdown_json(const LossBreakdown& b) {
    return nlohmann::json{{"trip", b.trip},           {"match", b.match},
                          {"kl", b.kl},               {"ent", b.ent},
                          {"total", b.total},         {"lambda_kl", b.lambda_kl},
                          {"lambda_ent", b.lambda_ent}};
}

LossBreakdown weighted_mean(const std::vector<std::pair<LossBreakdown, std::size_t>>& parts) {
    LossBreakdown mean;
    std::size_t total_n = 0;
    for (const auto& [b, n] : parts) {
        mean.trip += b.trip * n;
        mean.match += b.match * n;
        mean.kl += b.kl * n;
        mean.ent += b.ent * n;
        mean.lambda_kl = b.lambda_kl;
        mean.lambda_ent = b.lambda_ent;
        total_n += n;
    }
    if (total_n > 0) {
        const double inv = 1.0 / static_cast<double>(total_n);
        mean.trip *= inv;
        mean.match *= inv;
        mean.kl *= inv;
        mean.ent *= inv;
    }
    mean.total = mean.trip + mean.match + mean.lambda_kl * mean.kl + mean.lambda_ent * mean.ent;
    return mean;
}

} // namespace

void TrainConfig::validate() const {
    if (batch_size < 2) throw ContractError("train config: batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be > 0");
    if (!(mu >= 0.0)) throw ContractError("train config: mu must be >= 0");
    if (!(beta >= 0.0)) throw ContractError("train config: beta must be >= 0");
    if (!(kl_eps > 0.0 && kl_eps <= 1e-3))
        throw ContractError("train config: kl_eps must be in (0, 1e-3]");
    if (!(concept_threshold > 0.0 && concept_threshold < 1.0))
        throw ContractError("train config: concept_threshold must be in (0,1)");
}

std::string TrainConfig::to_json() const {
    nlohmann::json doc;
    doc["epochs"] = epochs;
    doc["learning_rate"] = learning_rate;
    doc["batch_size"] = batch_size;
    doc["lambda_kl"] = lambda_kl;
    doc["lambda_ent"] = lambda_ent;
    doc["mu"] = mu;
    doc["beta"] = beta;
    doc["adam_beta1"] = adam_beta1;
    doc["adam_beta2"] = adam_beta2;
    doc["adam_eps"] = adam_eps;
    doc["kl_eps"] = kl_eps;
    doc["seeds"] = seeds;
    doc["disable_kl"] = disable_kl;
    doc["disable_ent"] = disable_ent;
    doc["hidden_widths"] = hidden_widths;
    doc["proj_width"] = proj_width;
    doc["concept_threshold"] = concept_threshold;
    return doc.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("train config: ") + e.what());
    }
    TrainConfig c;
    try {
        c.epochs = doc.value("epochs", c.epochs);
        c.learning_rate = doc.value("learning_rate", c.learning_rate);
        c.batch_size = doc.value("batch_size", c.batch_size);
        c.lambda_kl = doc.value("lambda_kl", c.lambda_kl);
        c.lambda_ent = doc.value("lambda_ent", c.lambda_ent);
        c.mu = doc.value("mu", c.mu);
        c.beta = doc.value("beta", c.beta);
        c.adam_beta1 = doc.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = doc.value("adam_beta2", c.adam_beta2);
        c.adam_eps = doc.value("adam_eps", c.adam_eps);
        c.kl_eps = doc.value("kl_eps", c.kl_eps);
        c.seeds = doc.value("seeds", c.seeds);
        c.disable_kl = doc.value("disable_kl", c.disable_kl);
        c.disable_ent = doc.value("disable_ent", c.disable_ent);
        c.hidden_widths = doc.value("hidden_widths", c.hidden_widths);
        c.proj_width = doc.value("proj_width", c.proj_width);
        c.concept_threshold = doc.value("concept_threshold", c.concept_threshold);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string TrainLog::to_json() const {
    nlohmann::json doc;
    doc["seed"] = seed;
    doc["epochs"] = nlohmann::json::array();
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        doc["epochs"].push_back({{"epoch", e + 1},
                                 {"train", breakdown_json(epochs[e].train)},
                                 {"val", breakdown_json(epochs[e].val)},
                                 {"skipped_triplet_batches", epochs[e].skipped_triplet_batches}});
    }
    return doc.dump(2) + "\n";
}

AdamOptimizer::AdamOptimizer(std::size_t size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void AdamOptimizer::step(Vec& params, const Vec& grads) {
    require_dim(params.size() == m_.size() && grads.size() == m_.size(),
                "adam: parameter count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
        params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
}

TrainLog train(const TrainConfig& config, std::span<const Example> train_split,
               std::span<const Example> val_split, const PriorTable& table,
               const ConceptGroups& groups, std::uint64_t seed) {
    config.validate();
    if (train_split.empty()) throw ContractError("train: empty training split");
    {
        bool multi_class = false;
        for (const auto& ex : train_split)
            if (ex.y != train_split.front().y) {
                multi_class = true;
                break;
            }
        if (!multi_class) throw ContractError("train: training split holds a single class");
    }
    groups.validate(table.concept_count());

    const auto started = std::chrono::steady_clock::now();
    const std::size_t feature_dim = train_split.front().x.size();
    for (const auto& ex : train_split)
        require_dim(ex.x.size() == feature_dim, "train: inconsistent feature dimension");

    Rng root(seed);
    Rng init_rng = root.fork("init");
    Rng surrogate_rng = root.fork("surrogate");
    Rng triplet_rng = root.fork("triplet");
    Rng val_surrogate_rng = root.fork("val-surrogate");
    Rng val_triplet_rng = root.fork("val-triplet");
    Rng shuffle_root = root.fork("batch-shuffle");

    ModelShape shape{feature_dim, config.hidden_widths, table.concept_count(),
                     config.proj_width};
    ParamSet params = init_params(shape, config.beta, init_rng);

    TotalLossConfig loss_config;
    loss_config.mu = config.mu;
    loss_config.lambda_kl = config.disable_kl ? 0.0 : config.lambda_kl;
    loss_config.lambda_ent = config.disable_ent ? 0.0 : config.lambda_ent;
    loss_config.kl_eps = config.kl_eps;
    loss_config.skip_triplet_on_single_class = true;

    Vec flat = params.flatten();
    AdamOptimizer adam(flat.size(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                       config.adam_eps);

    TrainLog log;
    log.seed = seed;

    std::vector<std::size_t> order(train_split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle_rng = shuffle_root.fork(epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        EpochStats stats;
        std::vector<std::pair<LossBreakdown, std::size_t>> batch_breakdowns;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<ForwardTrace> traces;
            std::vector<std::size_t> labels;
            traces.reserve(end - start);
            labels.reserve(end - start);
            TotalLossResult result;
            try {
                for (std::size_t j = start; j < end; ++j) {
                    const Example& ex = train_split[order[j]];
                    const SurrogateVector s = sample_surrogate(table, ex.y, surrogate_rng);
                    traces.push_back(forward_with_surrogate(ex.x, s.bits, params));
                    labels.push_back(ex.y);
                }
                result = total_loss(traces, labels, params, table, groups, loss_config,
                                    &triplet_rng);
            } catch (const ContractError& e) {
                // Inside this block a contract violation means non-finite
                // activations, i.e. the weights have blown up.
                throw DivergenceError("train: diverged at epoch " + std::to_string(epoch) +
                                      ", batch at sample " + std::to_string(start) + ": " +
                                      e.what());
            }
            if (!std::isfinite(result.breakdown.total))
                throw DivergenceError("train: non-finite loss at epoch " +
                                      std::to_string(epoch) + ", batch at sample " +
                                      std::to_string(start));
            if (result.triplet_skipped) ++stats.skipped_triplet_batches;
            batch_breakdowns.emplace_back(result.breakdown, end - start);

            adam.step(flat, result.grads.flatten());
            params.unflatten(flat);
        }
        if (!all_finite(flat))
            throw DivergenceError("train: non-finite weights after epoch " +
                                  std::to_string(epoch));
        stats.train = weighted_mean(batch_breakdowns);

        // Validation: training-mode forward on the val split, no updates.
        if (!val_split.empty()) {
            std::vector<ForwardTrace> traces;
            std::vector<std::size_t> labels;
            traces.reserve(val_split.size());
            labels.reserve(val_split.size());
            for (const auto& ex : val_split) {
                const SurrogateVector s = sample_surrogate(table, ex.y, val_surrogate_rng);
                traces.push_back(forward_with_surrogate(ex.x, s.bits, params));
                labels.push_back(ex.y);
            }
            stats.val = total_loss(traces, labels, params, table, groups, loss_config,
                                   &val_triplet_rng)
                            .breakdown;
        }
        log.epochs.push_back(std::move(stats));
    }

    log.final_params = std::move(params);
    log.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return log;
}

namespace {

AggregateStat aggregate(const std::vector<double>& values) {
    AggregateStat s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

nlohmann::json stat_json(const AggregateStat& s) {
    return nlohmann::json{{"mean", s.mean}, {"std", s.stddev}};
}

} // namespace

std::string AggregateMetrics::to_json() const {
    nlohmann::json doc;
    doc["concept_acc"] = stat_json(concept_acc);
    doc["concept_macro_f1"] = stat_json(concept_macro_f1);
    doc["class_f1"] = stat_json(class_f1);
    doc["cbm_class_f1"] = stat_json(cbm_class_f1);
    doc["mean_attention_entropy"] = stat_json(mean_attention_entropy);
    doc["tv_mean"] = stat_json(tv_mean);
    doc["seeds"] = nlohmann::json::array();
    for (const auto& outcome : per_seed) doc["seeds"].push_back(outcome.seed);
    return doc.dump(2) + "\n";
}

AggregateMetrics run_seeds(const TrainConfig& config, const SynthDataset& dataset,
                           const PriorTable& table, const ConceptGroups& groups) {
    if (config.seeds.size() < 2) throw ContractError("at least two seeds for aggregation");

    AggregateMetrics agg;
    std::vector<double> acc, f1, class_f1, cbm_f1, entropy, tv;
    const auto train_examples = to_examples(dataset.train);
    const auto val_examples = to_examples(dataset.val);
    for (std::uint64_t seed : config.seeds) {
        SeedOutcome outcome;
        outcome.seed = seed;
        outcome.log = train(config, train_examples, val_examples, table, groups, seed);
        outcome.report = evaluate_model(outcome.log.final_params, dataset, table,
                                        config.concept_threshold, seed);
        acc.push_back(outcome.report.concept_acc);
        f1.push_back(outcome.report.concept_macro_f1);
        class_f1.push_back(outcome.report.class_f1);
        cbm_f1.push_back(outcome.report.cbm_class_f1.value_or(0.0));
        entropy.push_back(outcome.report.mean_attention_entropy);
        tv.push_back(outcome.report.tv_mean());
        agg.per_seed.push_back(std::move(outcome));
    }
    agg.concept_acc = aggregate(acc);
    agg.concept_macro_f1 = aggregate(f1);
    agg.class_f1 = aggregate(class_f1);
    agg.cbm_class_f1 = aggregate(cbm_f1);
    agg.mean_attention_entropy = aggregate(entropy);
    agg.tv_mean = aggregate(tv);
    return agg;
}

} // namespace pcp
