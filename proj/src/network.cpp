#include "pcp/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "pcp/errors.hpp"

namespace pcp {

namespace {

constexpr const char* kParamsVersion = "pcp-params-v1";

// Largest double below 1; sigmoid outputs are clamped into
// [DBL_MIN, 1 - eps/2] so c_hat stays strictly inside (0,1) even for
// saturating logits.
const double kSigmoidHi = std::nextafter(1.0, 0.0);
const double kSigmoidLo = std::numeric_limits<double>::min();

double stable_sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

nlohmann::json matrix_to_json(const Matrix& m) {
    return nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<Vec>();
    if (m.data.size() != m.rows * m.cols)
        throw ParseError("params: matrix data length does not match shape");
    return m;
}

} // namespace

std::size_t ParamSet::num_params() const {
    std::size_t n = 0;
    for (const auto& layer : extractor) n += layer.weights.data.size() + layer.bias.size();
    return n + w1.data.size() + w2.data.size() + wc.data.size();
}

Vec ParamSet::flatten() const {
    Vec flat;
    flat.reserve(num_params());
    for (const auto& layer : extractor) {
        flat.insert(flat.end(), layer.weights.data.begin(), layer.weights.data.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    flat.insert(flat.end(), w1.data.begin(), w1.data.end());
    flat.insert(flat.end(), w2.data.begin(), w2.data.end());
    flat.insert(flat.end(), wc.data.begin(), wc.data.end());
    return flat;
}

void ParamSet::unflatten(const Vec& flat) {
    require_dim(flat.size() == num_params(), "unflatten: wrong parameter count");
    std::size_t off = 0;
    auto take = [&](double* dst, std::size_t n) {
        std::copy(flat.begin() + off, flat.begin() + off + n, dst);
        off += n;
    };
    for (auto& layer : extractor) {
        take(layer.weights.data.data(), layer.weights.data.size());
        take(layer.bias.data(), layer.bias.size());
    }
    take(w1.data.data(), w1.data.size());
    take(w2.data.data(), w2.data.size());
    take(wc.data.data(), wc.data.size());
}

void ParamSet::validate() const {
    if (!(beta >= 0.0)) throw ContractError("beta must be nonnegative");
    auto check = [](const Vec& v, const char* what) {
        if (!all_finite(v)) throw ContractError(std::string("non-finite weights in ") + what);
    };
    for (const auto& layer : extractor) {
        check(layer.weights.data, "extractor");
        check(layer.bias, "extractor bias");
        require_dim(layer.bias.size() == layer.weights.rows, "extractor bias shape");
    }
    check(w1.data, "w1");
    check(w2.data, "w2");
    check(wc.data, "wc");
    std::size_t prev = feature_dim();
    for (const auto& layer : extractor) {
        require_dim(layer.weights.cols == prev, "extractor layer input width");
        prev = layer.weights.rows;
    }
    require_dim(w1.rows == prev, "w1 input must match extractor output");
    require_dim(w2.rows == w1.cols, "w2 input must match w1 output");
    require_dim(wc.rows == wc.cols && wc.cols == w2.cols, "wc must be M x M");
}

ParamSet init_params(const ModelShape& shape, double beta, Rng& rng) {
    if (shape.feature_dim == 0 || shape.concept_count == 0)
        throw ContractError("model shape needs feature_dim and concept_count");
    ParamSet p;
    p.beta = beta;
    auto init_matrix = [&rng](std::size_t rows, std::size_t cols, std::size_t fan_in) {
        Matrix m(rows, cols);
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& w : m.data) w = rng.uniform(-scale, scale);
        return m;
    };
    std::size_t prev = shape.feature_dim;
    for (std::size_t width : shape.hidden_widths) {
        DenseLayer layer;
        layer.weights = init_matrix(width, prev, prev);
        layer.bias = Vec(width, 0.0);
        p.extractor.push_back(std::move(layer));
        prev = width;
    }
    const std::size_t h_prime = shape.resolved_proj_width();
    // w1/w2 are applied transposed (z = W2^T W1^T h), so fan-in is the row count.
    p.w1 = init_matrix(prev, h_prime, prev);
    p.w2 = init_matrix(h_prime, shape.concept_count, h_prime);
    p.wc = init_matrix(shape.concept_count, shape.concept_count, shape.concept_count);
    p.validate();
    return p;
}

std::string ParamSet::to_json() const {
    nlohmann::json doc;
    doc["version"] = kParamsVersion;
    doc["beta"] = beta;
    doc["extractor"] = nlohmann::json::array();
    for (const auto& layer : extractor) {
        doc["extractor"].push_back(
            {{"weights", matrix_to_json(layer.weights)}, {"bias", layer.bias}});
    }
    doc["w1"] = matrix_to_json(w1);
    doc["w2"] = matrix_to_json(w2);
    doc["wc"] = matrix_to_json(wc);
    return doc.dump(2) + "\n";
}

ParamSet ParamSet::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    if (doc.value("version", "") != kParamsVersion)
        throw ParseError("params: unsupported version '" + doc.value("version", "") + "'");
    ParamSet p;
    try {
        p.beta = doc.at("beta").get<double>();
        for (const auto& layer_json : doc.at("extractor")) {
            DenseLayer layer;
            layer.weights = matrix_from_json(layer_json.at("weights"));
            layer.bias = layer_json.at("bias").get<Vec>();
            p.extractor.push_back(std::move(layer));
        }
        p.w1 = matrix_from_json(doc.at("w1"));
        p.w2 = matrix_from_json(doc.at("w2"));
        p.wc = matrix_from_json(doc.at("wc"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    p.validate();
    return p;
}

Vec extract_and_project(const Vec& x, const ParamSet& params) {
    Vec h = x;
    for (const auto& layer : params.extractor) {
        Vec a = matvec(layer.weights, h);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i] + layer.bias[i]);
        h = std::move(a);
    }
    return matvec_t(params.w2, matvec_t(params.w1, h));
}

Vec attention(const Vec& z, const Vec& c_tilde) {
    require_dim(z.size() == c_tilde.size(), "attention: length mismatch");
    if (!all_finite(z) || !all_finite(c_tilde))
        throw ContractError("attention: non-finite input");
    Vec a(z.size());
    double max_a = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < z.size(); ++m) {
        a[m] = z[m] * c_tilde[m];
        max_a = std::max(max_a, a[m]);
    }
    double total = 0.0;
    for (double& v : a) {
        v = std::exp(v - max_a);
        total += v;
    }
    for (double& v : a) v /= total;
    return a;
}

Vec refine(const Vec& z, const Vec& gamma, double beta) {
    require_dim(z.size() == gamma.size(), "refine: length mismatch");
    if (!(beta >= 0.0)) throw ContractError("refine: beta must be nonnegative");
    Vec out(z.size());
    for (std::size_t m = 0; m < z.size(); ++m) out[m] = z[m] * (1.0 + beta * gamma[m]);
    return out;
}

Vec predict_concepts(const Vec& z_prime, const Matrix& wc) {
    Vec out = matvec(wc, z_prime);
    for (double& v : out) v = std::clamp(stable_sigmoid(v), kSigmoidLo, kSigmoidHi);
    return out;
}

ForwardTrace forward_with_surrogate(const Vec& x, const Vec& c_tilde, const ParamSet& params) {
    require_dim(x.size() == params.feature_dim(), "forward: input dimension mismatch");
    require_dim(c_tilde.size() == params.concept_count(), "forward: surrogate length mismatch");

    ForwardTrace t;
    t.activations.reserve(params.extractor.size() + 1);
    t.activations.push_back(x);
    for (const auto& layer : params.extractor) {
        Vec a = matvec(layer.weights, t.activations.back());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i] + layer.bias[i]);
        t.activations.push_back(std::move(a));
    }
    t.proj_hidden = matvec_t(params.w1, t.activations.back());
    t.z = matvec_t(params.w2, t.proj_hidden);
    t.c_tilde = c_tilde;
    t.gamma = attention(t.z, t.c_tilde);
    t.z_prime = refine(t.z, t.gamma, params.beta);
    t.logits = matvec(params.wc, t.z_prime);
    t.c_hat.resize(t.logits.size());
    for (std::size_t m = 0; m < t.logits.size(); ++m)
        t.c_hat[m] = std::clamp(stable_sigmoid(t.logits[m]), kSigmoidLo, kSigmoidHi);
    return t;
}

ForwardTrace forward(const Vec& x, std::optional<std::size_t> y, const ParamSet& params,
                     const PriorTable* table, ForwardMode mode, Rng* rng) {
    if (mode == ForwardMode::Train) {
        if (!y) throw ContractError("train-mode forward requires a class label");
        if (table == nullptr) throw ContractError("train-mode forward requires a prior table");
        if (rng == nullptr) throw ContractError("train-mode forward requires an rng stream");
        const SurrogateVector s = sample_surrogate(*table, *y, *rng);
        return forward_with_surrogate(x, s.bits, params);
    }
    // Inference: no label, no priors. c_tilde = all-ones, so gamma = softmax(z).
    return forward_with_surrogate(x, Vec(params.concept_count(), 1.0), params);
}

ForwardTrace forward_infer(const Vec& x, const ParamSet& params) {
    return forward(x, std::nullopt, params, nullptr, ForwardMode::Infer, nullptr);
}

} // namespace pcp
