#include "pcp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pcp/errors.hpp"

namespace pcp {

namespace {

// Norm gradients treat a zero-length difference as having zero subgradient.
constexpr double kNormFloor = 1e-12;

double clamp_unit(double v, double eps) { return std::clamp(v, eps, 1.0); }

// Derivative of clamp_unit w.r.t. its input: 1 strictly inside, else 0.
double clamp_unit_active(double v, double eps) {
    return (v > eps && v < 1.0) ? 1.0 : 0.0;
}

std::map<std::size_t, std::vector<std::size_t>> by_class(std::span<const std::size_t> labels) {
    std::map<std::size_t, std::vector<std::size_t>> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]].push_back(i);
    return index;
}

} // namespace

GradSet GradSet::zeros_like(const ParamSet& params) {
    GradSet g;
    g.extractor.reserve(params.extractor.size());
    for (const auto& layer : params.extractor) {
        DenseLayer zero;
        zero.weights = Matrix(layer.weights.rows, layer.weights.cols);
        zero.bias = Vec(layer.bias.size(), 0.0);
        g.extractor.push_back(std::move(zero));
    }
    g.w1 = Matrix(params.w1.rows, params.w1.cols);
    g.w2 = Matrix(params.w2.rows, params.w2.cols);
    g.wc = Matrix(params.wc.rows, params.wc.cols);
    return g;
}

Vec GradSet::flatten() const {
    Vec flat;
    for (const auto& layer : extractor) {
        flat.insert(flat.end(), layer.weights.data.begin(), layer.weights.data.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    flat.insert(flat.end(), w1.data.begin(), w1.data.end());
    flat.insert(flat.end(), w2.data.begin(), w2.data.end());
    flat.insert(flat.end(), wc.data.begin(), wc.data.end());
    return flat;
}

TripletPairs sample_triplet_pairs(std::span<const std::size_t> labels, Rng& rng) {
    if (labels.size() < 2) throw ContractError("triplet loss needs a batch of at least 2");
    const auto index = by_class(labels);
    if (index.size() < 2) throw ContractError("degenerate batch for triplet: single class");

    TripletPairs pairs(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& same = index.at(labels[i]);
        if (same.size() < 2) continue; // no valid positive, anchor skipped

        // positive: uniform over same-class members excluding the anchor
        // (same is sorted by construction)
        const auto it = std::lower_bound(same.begin(), same.end(), i);
        const std::size_t anchor_rank = static_cast<std::size_t>(it - same.begin());
        const std::size_t r_pos = rng.below(same.size() - 1);
        const std::size_t pos = same[r_pos >= anchor_rank ? r_pos + 1 : r_pos];

        // negative: uniform over different-class members
        std::size_t r_neg = rng.below(labels.size() - same.size());
        std::size_t neg = 0;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] == labels[i]) continue;
            if (r_neg == 0) {
                neg = j;
                break;
            }
            --r_neg;
        }
        pairs[i] = std::make_pair(pos, neg);
    }
    return pairs;
}

TripletResult triplet_loss_from_pairs(std::span<const Vec> z_primes, const TripletPairs& pairs,
                                      double mu) {
    require_dim(z_primes.size() == pairs.size(), "triplet: pair list length mismatch");
    TripletResult res;
    res.grad_z_prime.assign(z_primes.size(), Vec(z_primes.empty() ? 0 : z_primes[0].size(), 0.0));
    res.slack.assign(z_primes.size(), std::nullopt);

    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i]) continue;
        ++res.used_anchors;
        const auto [pos, neg] = *pairs[i];
        const Vec& a = z_primes[i];
        const Vec& p = z_primes[pos];
        const Vec& n = z_primes[neg];
        const double d_ap = l2_distance(a, p);
        const double d_an = l2_distance(a, n);
        const double slack = d_ap - d_an + mu;
        res.slack[i] = slack;
        if (slack > 0.0) sum += slack;
    }
    if (res.used_anchors == 0) return res; // every anchor skipped: loss 0

    const double scale = 1.0 / static_cast<double>(res.used_anchors);
    res.value = sum * scale;

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i] || !(*res.slack[i] > 0.0)) continue; // hinge inactive or at the kink
        const auto [pos, neg] = *pairs[i];
        const Vec& a = z_primes[i];
        const Vec& p = z_primes[pos];
        const Vec& n = z_primes[neg];
        const double d_ap = l2_distance(a, p);
        const double d_an = l2_distance(a, n);
        for (std::size_t m = 0; m < a.size(); ++m) {
            if (d_ap > kNormFloor) {
                const double g = (a[m] - p[m]) / d_ap * scale;
                res.grad_z_prime[i][m] += g;
                res.grad_z_prime[pos][m] -= g;
            }
            if (d_an > kNormFloor) {
                const double g = (a[m] - n[m]) / d_an * scale;
                res.grad_z_prime[i][m] -= g;
                res.grad_z_prime[neg][m] += g;
            }
        }
    }
    return res;
}

TripletResult triplet_loss(std::span<const ForwardTrace> traces,
                           std::span<const std::size_t> labels, double mu, Rng& rng) {
    require_dim(traces.size() == labels.size(), "triplet: labels length mismatch");
    const TripletPairs pairs = sample_triplet_pairs(labels, rng);
    std::vector<Vec> z_primes;
    z_primes.reserve(traces.size());
    for (const auto& t : traces) z_primes.push_back(t.z_prime);
    return triplet_loss_from_pairs(z_primes, pairs, mu);
}

MatchResult match_loss(std::span<const Vec> c_hats, std::span<const std::size_t> labels,
                       const PriorTable& table) {
    require_dim(c_hats.size() == labels.size(), "match: labels length mismatch");
    const std::size_t n = c_hats.size();
    const std::size_t num_classes = table.class_count();
    const std::size_t num_concepts = table.concept_count();

    MatchResult res;
    res.grad_c_hat.assign(n, Vec(num_concepts, 0.0));
    const double inv_n = 1.0 / static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
        require_dim(c_hats[i].size() == num_concepts, "match: concept vector length mismatch");
        if (labels[i] >= num_classes) throw DimensionError("match: label out of range");

        Vec sims(num_classes, 0.0);
        for (std::size_t k = 0; k < num_classes; ++k)
            for (std::size_t m = 0; m < num_concepts; ++m)
                sims[k] += c_hats[i][m] * table.probs(m, k);

        const double max_s = *std::max_element(sims.begin(), sims.end());
        double total = 0.0;
        Vec soft(num_classes);
        for (std::size_t k = 0; k < num_classes; ++k) {
            soft[k] = std::exp(sims[k] - max_s);
            total += soft[k];
        }
        for (double& v : soft) v /= total;

        res.value -= std::log(soft[labels[i]]) * inv_n;
        for (std::size_t k = 0; k < num_classes; ++k) {
            const double ds = (soft[k] - (k == labels[i] ? 1.0 : 0.0)) * inv_n;
            for (std::size_t m = 0; m < num_concepts; ++m)
                res.grad_c_hat[i][m] += ds * table.probs(m, k);
        }
    }
    return res;
}

KlResult kl_loss(std::span<const Vec> c_hats, std::span<const std::size_t> labels,
                 const PriorTable& table, const ConceptGroups& groups, double eps) {
    require_dim(c_hats.size() == labels.size(), "kl: labels length mismatch");
    if (!(eps > 0.0 && eps <= 1e-3)) throw ContractError("kl: eps must be in (0, 1e-3]");
    groups.validate(table.concept_count());

    const std::size_t num_concepts = table.concept_count();
    KlResult res;
    res.grad_c_hat.assign(c_hats.size(), Vec(num_concepts, 0.0));

    const auto index = by_class(labels);
    const double class_scale = 1.0 / static_cast<double>(index.size());

    for (const auto& [y, members] : index) {
        if (y >= table.class_count()) throw DimensionError("kl: label out of range");
        const double inv_ny = 1.0 / static_cast<double>(members.size());

        Vec mean(num_concepts, 0.0);
        for (std::size_t i : members) {
            require_dim(c_hats[i].size() == num_concepts, "kl: concept vector length mismatch");
            for (std::size_t m = 0; m < num_concepts; ++m) mean[m] += c_hats[i][m] * inv_ny;
        }

        Vec grad_mean(num_concepts, 0.0); // d(class term)/d mean[m]

        // Grouped concepts: categorical KL over the group, with prior and
        // empirical masses renormalized within the group. Sigmoid outputs
        // do not sum to one across a group; without the normalization the
        // raw sum P log(P/mean) is unbounded below and its minimizer drags
        // every group mean to the clamp instead of to the prior.
        for (const auto& g : groups.groups) {
            double prior_mass = 0.0;
            double mean_mass = 0.0;
            for (std::size_t m : g.members) {
                prior_mass += clamp_unit(table.probs(m, y), eps);
                mean_mass += clamp_unit(mean[m], eps);
            }
            for (std::size_t m : g.members) {
                const double p_hat = clamp_unit(table.probs(m, y), eps) / prior_mass;
                const double q_hat = clamp_unit(mean[m], eps) / mean_mass;
                res.value += class_scale * p_hat * std::log(p_hat / q_hat);
                grad_mean[m] +=
                    (1.0 - p_hat / q_hat) / mean_mass * clamp_unit_active(mean[m], eps);
            }
        }

        // Singletons enter as binary groups {p, 1-p} vs {mean, 1-mean}.
        for (std::size_t m : groups.singletons) {
            const double prior_on = clamp_unit(table.probs(m, y), eps);
            const double mean_on = clamp_unit(mean[m], eps);
            res.value += class_scale * prior_on * std::log(prior_on / mean_on);
            grad_mean[m] += -prior_on / mean_on * clamp_unit_active(mean[m], eps);

            const double prior_off = clamp_unit(1.0 - table.probs(m, y), eps);
            const double mean_off = clamp_unit(1.0 - mean[m], eps);
            res.value += class_scale * prior_off * std::log(prior_off / mean_off);
            grad_mean[m] += prior_off / mean_off * clamp_unit_active(1.0 - mean[m], eps);
        }

        for (std::size_t i : members)
            for (std::size_t m = 0; m < num_concepts; ++m)
                res.grad_c_hat[i][m] += class_scale * inv_ny * grad_mean[m];
    }
    return res;
}

EntropyResult entropy_loss(std::span<const Vec> gammas) {
    EntropyResult res;
    if (gammas.empty()) return res;
    const double inv_n = 1.0 / static_cast<double>(gammas.size());
    res.grad_gamma.reserve(gammas.size());
    for (const auto& gamma : gammas) {
        Vec grad(gamma.size(), 0.0);
        for (std::size_t m = 0; m < gamma.size(); ++m) {
            const double g = gamma[m];
            if (g < 0.0) throw ContractError("entropy: negative attention weight");
            if (g > 0.0) {
                res.value -= g * std::log(g) * inv_n;
                grad[m] = -(std::log(g) + 1.0) * inv_n;
            }
            // 0 * log 0 := 0; its slot keeps zero gradient by convention
        }
        res.grad_gamma.push_back(std::move(grad));
    }
    return res;
}

TotalLossResult total_loss(std::span<const ForwardTrace> traces,
                           std::span<const std::size_t> labels, const ParamSet& params,
                           const PriorTable& table, const ConceptGroups& groups,
                           const TotalLossConfig& config, Rng* rng,
                           const TripletPairs* pinned_pairs) {
    require_dim(traces.size() == labels.size(), "total_loss: labels length mismatch");
    const std::size_t n = traces.size();
    const std::size_t num_concepts = params.concept_count();

    std::vector<Vec> z_primes, c_hats, gammas;
    z_primes.reserve(n);
    c_hats.reserve(n);
    gammas.reserve(n);
    for (const auto& t : traces) {
        z_primes.push_back(t.z_prime);
        c_hats.push_back(t.c_hat);
        gammas.push_back(t.gamma);
    }

    TotalLossResult out;

    TripletResult trip;
    bool have_two_classes = false;
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] != labels[0]) {
            have_two_classes = true;
            break;
        }
    if (!have_two_classes && config.skip_triplet_on_single_class) {
        trip.grad_z_prime.assign(n, Vec(num_concepts, 0.0));
        trip.slack.assign(n, std::nullopt);
        out.triplet_skipped = true;
    } else if (pinned_pairs != nullptr) {
        trip = triplet_loss_from_pairs(z_primes, *pinned_pairs, config.mu);
    } else {
        if (rng == nullptr) throw ContractError("total_loss: rng required to sample triplets");
        const TripletPairs pairs = sample_triplet_pairs(labels, *rng);
        trip = triplet_loss_from_pairs(z_primes, pairs, config.mu);
    }
    out.used_anchors = trip.used_anchors;
    out.min_abs_slack = std::numeric_limits<double>::infinity();
    out.hinge_active.assign(trip.slack.size(), 0);
    for (std::size_t i = 0; i < trip.slack.size(); ++i) {
        if (!trip.slack[i]) continue;
        out.min_abs_slack = std::min(out.min_abs_slack, std::abs(*trip.slack[i]));
        out.hinge_active[i] = *trip.slack[i] > 0.0 ? 1 : 0;
    }

    const MatchResult match = match_loss(c_hats, labels, table);
    const KlResult kl = kl_loss(c_hats, labels, table, groups, config.kl_eps);
    const EntropyResult ent = entropy_loss(gammas);

    auto& b = out.breakdown;
    b.trip = trip.value;
    b.match = match.value;
    b.kl = kl.value;
    b.ent = ent.value;
    b.lambda_kl = config.lambda_kl;
    b.lambda_ent = config.lambda_ent;
    b.total = b.trip + b.match + b.lambda_kl * b.kl + b.lambda_ent * b.ent;

    // Backward pass, per sample in index order for a deterministic reduction.
    out.grads = GradSet::zeros_like(params);
    const double beta = params.beta;
    for (std::size_t i = 0; i < n; ++i) {
        const ForwardTrace& t = traces[i];

        // dL/d c_hat from match + weighted KL, then through the sigmoid.
        Vec d_logits(num_concepts, 0.0);
        for (std::size_t m = 0; m < num_concepts; ++m) {
            double dc = match.grad_c_hat[i][m];
            if (config.lambda_kl != 0.0) dc += config.lambda_kl * kl.grad_c_hat[i][m];
            d_logits[m] = dc * t.c_hat[m] * (1.0 - t.c_hat[m]);
        }
        add_outer(out.grads.wc, d_logits, t.z_prime);

        Vec d_zp = matvec_t(params.wc, d_logits);
        for (std::size_t m = 0; m < num_concepts; ++m) d_zp[m] += trip.grad_z_prime[i][m];

        // Refinement: z' = z .* (1 + beta * gamma).
        Vec d_gamma(num_concepts, 0.0);
        Vec d_z(num_concepts, 0.0);
        for (std::size_t m = 0; m < num_concepts; ++m) {
            double dg = d_zp[m] * t.z[m] * beta;
            if (config.lambda_ent != 0.0) dg += config.lambda_ent * ent.grad_gamma[i][m];
            d_gamma[m] = dg;
            d_z[m] = d_zp[m] * (1.0 + beta * t.gamma[m]);
        }

        // Softmax backward: gamma = softmax(z .* c_tilde).
        double dot_g = 0.0;
        for (std::size_t m = 0; m < num_concepts; ++m) dot_g += d_gamma[m] * t.gamma[m];
        for (std::size_t m = 0; m < num_concepts; ++m)
            d_z[m] += t.gamma[m] * (d_gamma[m] - dot_g) * t.c_tilde[m];

        // Projection: z = W2^T u, u = W1^T h.
        add_outer(out.grads.w2, t.proj_hidden, d_z);
        Vec d_u = matvec(params.w2, d_z);
        add_outer(out.grads.w1, t.features(), d_u);
        Vec d_h = matvec(params.w1, d_u);

        // Extractor layers in reverse; activations[l+1] = tanh(W_l a_l + b_l).
        for (std::size_t l = params.extractor.size(); l-- > 0;) {
            const Vec& post = t.activations[l + 1];
            Vec d_pre(post.size());
            for (std::size_t j = 0; j < post.size(); ++j)
                d_pre[j] = d_h[j] * (1.0 - post[j] * post[j]);
            add_outer(out.grads.extractor[l].weights, d_pre, t.activations[l]);
            for (std::size_t j = 0; j < post.size(); ++j)
                out.grads.extractor[l].bias[j] += d_pre[j];
            d_h = matvec_t(params.extractor[l].weights, d_pre);
        }
    }
    return out;
}

} // namespace pcp
