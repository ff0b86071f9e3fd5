#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcp/network.hpp"
#include "pcp/priors.hpp"
#include "pcp/synthgen.hpp"

namespace pcp {

struct ConceptMetrics {
    double acc = 0.0;      // cell-wise binary accuracy over (sample, concept) pairs
    double macro_f1 = 0.0; // unweighted mean of per-concept F1
    // Concepts with no truth positives and no predicted positives score
    // F1 = 1 by convention; counted here so callers can log it.
    std::size_t empty_convention_count = 0;
};

// Binarizes predictions at threshold (ties count as positive).
ConceptMetrics concept_metrics(std::span<const Vec> c_hats, std::span<const Vec> c_trues,
                               double threshold = 0.5);

// argmax_k <c_hat, P(.|k)>; ties resolve to the lowest class index.
std::size_t prior_match_classify(const Vec& c_hat, const PriorTable& table);

// Linear head mapping predicted concepts to class logits (CBM-style).
struct CbmHead {
    Matrix weights; // L x M
    Vec bias;       // L
};

struct CbmFitConfig {
    std::size_t iterations = 2000;
    double learning_rate = 0.5;
};

// Multinomial logistic regression by full-batch gradient descent from zero
// init; deterministic for fixed inputs.
CbmHead fit_cbm_head(std::span<const Vec> c_hats, std::span<const std::size_t> labels,
                     std::size_t class_count, const CbmFitConfig& config = {});

std::size_t cbm_classify(const CbmHead& head, const Vec& c_hat);

// Macro-averaged one-vs-rest F1 over class indices [0, class_count).
double macro_f1_multiclass(std::span<const std::size_t> predicted,
                           std::span<const std::size_t> actual, std::size_t class_count);

struct AblationDiagnostics {
    double mean_attention_entropy = 0.0;
    Vec per_class_prior_tv; // length L
};

// Diagnostics over training-mode traces: attention entropy, and per class
// the mean |empirical c_hat - prior| averaged over concepts.
AblationDiagnostics ablation_diagnostics(std::span<const ForwardTrace> traces,
                                         std::span<const std::size_t> labels,
                                         const PriorTable& table);

struct MetricsReport {
    double concept_acc = 0.0;
    double concept_macro_f1 = 0.0;
    double class_f1 = 0.0; // prior-matching classifier, macro F1
    std::optional<double> cbm_class_f1;
    double mean_attention_entropy = 0.0;
    Vec per_class_prior_tv;
    std::size_t empty_concept_conventions = 0;

    double tv_mean() const;
    std::string to_json(const std::vector<std::string>& class_names) const;
    // `dataset,seed,concept_acc,concept_f1,class_f1,entropy,tv_mean`
    std::string csv_row(const std::string& dataset, std::uint64_t seed) const;
    static std::string csv_header();
};

// Full evaluation of a trained model on a dataset with ground-truth concepts:
// inference-mode predictions for concept and classification metrics, plus
// training-mode traces (seeded surrogates) for the attention/prior diagnostics.
MetricsReport evaluate_model(const ParamSet& params, const SynthDataset& dataset,
                             const PriorTable& table, double threshold, std::uint64_t eval_seed,
                             bool fit_cbm = true);

} // namespace pcp
