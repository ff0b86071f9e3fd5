#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcp/eval.hpp"
#include "pcp/losses.hpp"
#include "pcp/network.hpp"
#include "pcp/priors.hpp"
#include "pcp/synthgen.hpp"

namespace pcp {

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 5e-4;
    std::size_t batch_size = 64;
    double lambda_kl = 0.3;
    double lambda_ent = 0.01;
    double mu = 0.5;
    double beta = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double kl_eps = 1e-6;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    bool disable_kl = false;
    bool disable_ent = false;
    std::vector<std::size_t> hidden_widths = {64, 32};
    std::size_t proj_width = 0; // 0 = max(M, H/2)
    double concept_threshold = 0.5;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
    static TrainConfig load(const std::string& path);
};

struct EpochStats {
    LossBreakdown train;
    LossBreakdown val;
    std::size_t skipped_triplet_batches = 0;
};

struct TrainLog {
    std::uint64_t seed = 0;
    std::vector<EpochStats> epochs;
    ParamSet final_params;
    // Console diagnostic only; excluded from to_json() so log files stay
    // byte-identical across reruns.
    double wall_clock_seconds = 0.0;

    std::string to_json() const;
};

// Adam over a flattened parameter vector.
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t size, double lr, double beta1, double beta2, double eps);
    void step(Vec& params, const Vec& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    Vec m_, v_;
};

// Mini-batch Adam training on the composite loss. Deterministic per
// (config, data, seed): shuffling, surrogates and triplet picks all flow
// from named sub-streams of the seed. Single-class batches skip the
// triplet term and are counted in the epoch stats.
TrainLog train(const TrainConfig& config, std::span<const Example> train_split,
               std::span<const Example> val_split, const PriorTable& table,
               const ConceptGroups& groups, std::uint64_t seed);

struct SeedOutcome {
    std::uint64_t seed = 0;
    MetricsReport report;
    TrainLog log;
};

struct AggregateStat {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation
};

struct AggregateMetrics {
    AggregateStat concept_acc;
    AggregateStat concept_macro_f1;
    AggregateStat class_f1;
    AggregateStat cbm_class_f1;
    AggregateStat mean_attention_entropy;
    AggregateStat tv_mean;
    std::vector<SeedOutcome> per_seed;

    std::string to_json() const;
};

// Trains one model per config seed and aggregates evaluation metrics as
// mean and sample standard deviation. Requires >= 2 seeds.
AggregateMetrics run_seeds(const TrainConfig& config, const SynthDataset& dataset,
                           const PriorTable& table, const ConceptGroups& groups);

} // namespace pcp
