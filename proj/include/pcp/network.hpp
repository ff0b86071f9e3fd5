#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pcp/linalg.hpp"
#include "pcp/priors.hpp"
#include "pcp/rng.hpp"

namespace pcp {

// Fully connected layer with tanh activation, used by the feature extractor.
struct DenseLayer {
    Matrix weights; // out x in
    Vec bias;       // out
};

struct ModelShape {
    std::size_t feature_dim = 0;            // D
    std::vector<std::size_t> hidden_widths; // extractor widths; empty = identity extractor
    std::size_t concept_count = 0;          // M
    std::size_t proj_width = 0;             // H'; 0 = max(M, H/2)

    std::size_t extractor_output_dim() const {
        return hidden_widths.empty() ? feature_dim : hidden_widths.back();
    }
    std::size_t resolved_proj_width() const {
        if (proj_width > 0) return proj_width;
        const std::size_t h = extractor_output_dim();
        return std::max(concept_count, h / 2);
    }
};

// All learnable weights plus the refinement strength beta (a hyperparameter,
// not updated by training).
struct ParamSet {
    std::vector<DenseLayer> extractor; // tanh MLP, D -> ... -> H; empty = identity
    Matrix w1;                         // H x H', bias-free
    Matrix w2;                         // H' x M, bias-free
    Matrix wc;                         // M x M concept head
    double beta = 1.0;

    std::size_t feature_dim() const {
        return extractor.empty() ? w1.rows : extractor.front().weights.cols;
    }
    std::size_t hidden_dim() const { return w1.rows; }
    std::size_t proj_width() const { return w1.cols; }
    std::size_t concept_count() const { return w2.cols; }

    std::size_t num_params() const; // learnable scalars, beta excluded
    Vec flatten() const;
    void unflatten(const Vec& flat);

    void validate() const;

    std::string to_json() const; // "pcp-params-v1"
    static ParamSet from_json(const std::string& text);
};

// Weight initialization: uniform in +/- 1/sqrt(fan_in), biases zero.
ParamSet init_params(const ModelShape& shape, double beta, Rng& rng);

enum class ForwardMode { Train, Infer };

// Per-sample intermediates needed by the losses and their gradients.
struct ForwardTrace {
    std::vector<Vec> activations; // activations[0] = x, then each extractor layer output
    Vec proj_hidden;              // W1^T f(x), length H'
    Vec z;                        // W2^T proj_hidden, length M
    Vec c_tilde;                  // surrogate bits (train) or all-ones (infer)
    Vec gamma;                    // softmax(z .* c_tilde), on the simplex
    Vec z_prime;                  // z .* (1 + beta * gamma)
    Vec logits;                   // Wc z_prime
    Vec c_hat;                    // sigmoid(logits), strictly in (0,1)

    const Vec& features() const { return activations.back(); }
};

// z = W2^T W1^T f(x); f is the tanh extractor (identity when no layers).
Vec extract_and_project(const Vec& x, const ParamSet& params);

// gamma = softmax(z .* c_tilde), max-subtraction stabilized.
Vec attention(const Vec& z, const Vec& c_tilde);

// z' = z .* (1 + beta * gamma) elementwise.
Vec refine(const Vec& z, const Vec& gamma, double beta);

// c_hat = sigmoid(Wc z'), clamped into the open interval (0,1).
Vec predict_concepts(const Vec& z_prime, const Matrix& wc);

// Train mode samples the surrogate from (table, y); infer mode never touches
// the label or the table (pass table = nullptr) and uses c_tilde = all-ones.
ForwardTrace forward(const Vec& x, std::optional<std::size_t> y, const ParamSet& params,
                     const PriorTable* table, ForwardMode mode, Rng* rng);

// Forward with an externally fixed surrogate; shared by train-mode forward
// and the finite-difference checker, which must freeze surrogate draws.
ForwardTrace forward_with_surrogate(const Vec& x, const Vec& c_tilde, const ParamSet& params);

ForwardTrace forward_infer(const Vec& x, const ParamSet& params);

} // namespace pcp
