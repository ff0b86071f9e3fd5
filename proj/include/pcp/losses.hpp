#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pcp/network.hpp"
#include "pcp/priors.hpp"

namespace pcp {

// The four loss terms and the lambda-weighted total for one batch.
struct LossBreakdown {
    double trip = 0.0;
    double match = 0.0;
    double kl = 0.0;
    double ent = 0.0;
    double total = 0.0;
    double lambda_kl = 0.0;
    double lambda_ent = 0.0;
};

// Gradient accumulator shaped like a ParamSet (beta excluded: it is a
// hyperparameter, not a trained weight).
struct GradSet {
    std::vector<DenseLayer> extractor;
    Matrix w1;
    Matrix w2;
    Matrix wc;

    static GradSet zeros_like(const ParamSet& params);
    Vec flatten() const;
};

// Anchor -> (positive, negative) batch indices; anchors with no same-class
// partner carry no pair and are skipped.
using TripletPairs = std::vector<std::optional<std::pair<std::size_t, std::size_t>>>;

// Uniform within-batch sampling of one positive and one negative per anchor.
// Throws ContractError when the batch holds a single class.
TripletPairs sample_triplet_pairs(std::span<const std::size_t> labels, Rng& rng);

struct TripletResult {
    double value = 0.0;
    std::vector<Vec> grad_z_prime; // one per batch element
    std::size_t used_anchors = 0;
    // Margin slack per anchor (pre-hinge); nullopt for skipped anchors.
    std::vector<std::optional<double>> slack;
};

// Hinge triplet loss on refined embeddings with explicitly chosen pairs.
TripletResult triplet_loss_from_pairs(std::span<const Vec> z_primes, const TripletPairs& pairs,
                                      double mu);

// Samples pairs from rng, then evaluates. Batch must hold >= 2 classes.
TripletResult triplet_loss(std::span<const ForwardTrace> traces,
                           std::span<const std::size_t> labels, double mu, Rng& rng);

struct MatchResult {
    double value = 0.0;
    std::vector<Vec> grad_c_hat;
};

// Cross-entropy of softmax over prior-signature similarities s_{i,k} = <c_hat_i, P(.|k)>.
MatchResult match_loss(std::span<const Vec> c_hats, std::span<const std::size_t> labels,
                       const PriorTable& table);

struct KlResult {
    double value = 0.0;
    std::vector<Vec> grad_c_hat;
};

// Group KL between class priors and batch-wise empirical mean predictions,
// averaged over classes present in the batch. Each declared group is scored
// as a categorical KL with prior and empirical masses renormalized within
// the group; singleton concepts contribute as binary groups {p, 1-p}.
// Clamping to [eps, 1] precedes the normalization, so the term is finite
// everywhere, nonnegative, and zero exactly when means match priors.
KlResult kl_loss(std::span<const Vec> c_hats, std::span<const std::size_t> labels,
                 const PriorTable& table, const ConceptGroups& groups, double eps);

struct EntropyResult {
    double value = 0.0;
    std::vector<Vec> grad_gamma;
};

// Mean Shannon entropy of the attention vectors, 0*log0 := 0.
EntropyResult entropy_loss(std::span<const Vec> gammas);

struct TotalLossConfig {
    double mu = 0.5;
    double lambda_kl = 0.3;
    double lambda_ent = 0.01;
    double kl_eps = 1e-6;
    // Single-class batches: throw (false) or contribute trip = 0 (true).
    bool skip_triplet_on_single_class = false;
};

struct TotalLossResult {
    LossBreakdown breakdown;
    GradSet grads;
    std::size_t used_anchors = 0;
    bool triplet_skipped = false;
    // Smallest |margin slack| over used anchors; +inf when none were used.
    double min_abs_slack = 0.0;
    // Per-anchor hinge activity; lets the finite-difference sweep detect
    // coordinates whose perturbation flips a hinge.
    std::vector<char> hinge_active;
};

// Composite objective with analytic gradients for every ParamSet weight.
// Gradients flow through attention, refinement and the concept head; none
// flow into the surrogate bits or the prior table. Triplet pairs may be
// pinned (for finite-difference sweeps) or sampled from rng.
TotalLossResult total_loss(std::span<const ForwardTrace> traces,
                           std::span<const std::size_t> labels, const ParamSet& params,
                           const PriorTable& table, const ConceptGroups& groups,
                           const TotalLossConfig& config, Rng* rng,
                           const TripletPairs* pinned_pairs = nullptr);

} // namespace pcp
