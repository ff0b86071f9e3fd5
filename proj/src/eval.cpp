#include "pcp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "pcp/errors.hpp"

namespace pcp {

ConceptMetrics concept_metrics(std::span<const Vec> c_hats, std::span<const Vec> c_trues,
                               double threshold) {
    require_dim(c_hats.size() == c_trues.size(), "concept_metrics: sample count mismatch");
    if (c_hats.empty()) throw ContractError("concept_metrics: empty batch");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ContractError("concept_metrics: threshold must be in (0,1)");
    const std::size_t n = c_hats.size();
    const std::size_t num_concepts = c_hats[0].size();

    ConceptMetrics out;
    std::size_t correct_cells = 0;
    double f1_sum = 0.0;
    for (std::size_t m = 0; m < num_concepts; ++m) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            require_dim(c_hats[i].size() == num_concepts && c_trues[i].size() == num_concepts,
                        "concept_metrics: concept count mismatch");
            const bool pred = c_hats[i][m] >= threshold; // ties binarize as positive
            const bool truth = c_trues[i][m] != 0.0;
            if (pred && truth) ++tp;
            else if (pred && !truth) ++fp;
            else if (!pred && truth) ++fn;
            if (pred == truth) ++correct_cells;
        }
        if (tp + fp + fn == 0) {
            f1_sum += 1.0; // no positives anywhere: vacuous concept scores 1
            ++out.empty_convention_count;
        } else {
            f1_sum += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        }
    }
    out.acc = static_cast<double>(correct_cells) / static_cast<double>(n * num_concepts);
    out.macro_f1 = f1_sum / static_cast<double>(num_concepts);
    return out;
}

std::size_t prior_match_classify(const Vec& c_hat, const PriorTable& table) {
    require_dim(c_hat.size() == table.concept_count(),
                "prior_match_classify: concept count mismatch");
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < table.class_count(); ++k) {
        double sim = 0.0;
        for (std::size_t m = 0; m < c_hat.size(); ++m) sim += c_hat[m] * table.probs(m, k);
        if (sim > best_sim) { // strict: ties keep the lowest class index
            best_sim = sim;
            best = k;
        }
    }
    return best;
}

CbmHead fit_cbm_head(std::span<const Vec> c_hats, std::span<const std::size_t> labels,
                     std::size_t class_count, const CbmFitConfig& config) {
    require_dim(c_hats.size() == labels.size(), "fit_cbm_head: label count mismatch");
    if (c_hats.empty()) throw ContractError("fit_cbm_head: empty training set");
    bool multi_class = false;
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] != labels[0]) {
            multi_class = true;
            break;
        }
    if (!multi_class) throw ContractError("fit_cbm_head: single-class training labels");

    const std::size_t n = c_hats.size();
    const std::size_t num_concepts = c_hats[0].size();
    CbmHead head{Matrix(class_count, num_concepts), Vec(class_count, 0.0)};

    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix grad_w(class_count, num_concepts);
    Vec grad_b(class_count, 0.0);
    Vec logits(class_count, 0.0);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < class_count; ++k) {
                double acc = head.bias[k];
                for (std::size_t m = 0; m < num_concepts; ++m)
                    acc += head.weights(k, m) * c_hats[i][m];
                logits[k] = acc;
            }
            const double max_l = *std::max_element(logits.begin(), logits.end());
            double total = 0.0;
            for (double& v : logits) {
                v = std::exp(v - max_l);
                total += v;
            }
            for (std::size_t k = 0; k < class_count; ++k) {
                const double d = (logits[k] / total - (k == labels[i] ? 1.0 : 0.0)) * inv_n;
                grad_b[k] += d;
                for (std::size_t m = 0; m < num_concepts; ++m)
                    grad_w(k, m) += d * c_hats[i][m];
            }
        }
        for (std::size_t j = 0; j < grad_w.data.size(); ++j)
            head.weights.data[j] -= config.learning_rate * grad_w.data[j];
        for (std::size_t k = 0; k < class_count; ++k)
            head.bias[k] -= config.learning_rate * grad_b[k];
    }
    return head;
}

std::size_t cbm_classify(const CbmHead& head, const Vec& c_hat) {
    Vec logits = matvec(head.weights, c_hat);
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += head.bias[k];
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = k; // ties keep the lowest index
    return best;
}

double macro_f1_multiclass(std::span<const std::size_t> predicted,
                           std::span<const std::size_t> actual, std::size_t class_count) {
    require_dim(predicted.size() == actual.size(), "macro_f1: length mismatch");
    double f1_sum = 0.0;
    for (std::size_t k = 0; k < class_count; ++k) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < predicted.size(); ++i) {
            const bool pred = predicted[i] == k;
            const bool truth = actual[i] == k;
            if (pred && truth) ++tp;
            else if (pred) ++fp;
            else if (truth) ++fn;
        }
        f1_sum += (tp + fp + fn == 0) ? 1.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    return f1_sum / static_cast<double>(class_count);
}

AblationDiagnostics ablation_diagnostics(std::span<const ForwardTrace> traces,
                                         std::span<const std::size_t> labels,
                                         const PriorTable& table) {
    require_dim(traces.size() == labels.size(), "ablation_diagnostics: label count mismatch");
    if (traces.empty()) throw ContractError("ablation_diagnostics: empty batch");
    const std::size_t num_concepts = table.concept_count();
    const std::size_t num_classes = table.class_count();

    AblationDiagnostics out;
    for (const auto& t : traces) {
        double h = 0.0;
        for (double g : t.gamma)
            if (g > 0.0) h -= g * std::log(g);
        out.mean_attention_entropy += h;
    }
    out.mean_attention_entropy /= static_cast<double>(traces.size());

    std::vector<Vec> class_mean(num_classes, Vec(num_concepts, 0.0));
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (labels[i] >= num_classes)
            throw DimensionError("ablation_diagnostics: label out of range");
        ++counts[labels[i]];
        for (std::size_t m = 0; m < num_concepts; ++m)
            class_mean[labels[i]][m] += traces[i].c_hat[m];
    }
    out.per_class_prior_tv.assign(num_classes, 0.0);
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (counts[k] == 0)
            throw ContractError("ablation_diagnostics: empty class '" + table.class_names[k] +
                                "'");
        double tv = 0.0;
        for (std::size_t m = 0; m < num_concepts; ++m)
            tv += std::abs(class_mean[k][m] / static_cast<double>(counts[k]) -
                           table.probs(m, k));
        out.per_class_prior_tv[k] = tv / static_cast<double>(num_concepts);
    }
    return out;
}

double MetricsReport::tv_mean() const {
    if (per_class_prior_tv.empty()) return 0.0;
    double total = 0.0;
    for (double v : per_class_prior_tv) total += v;
    return total / static_cast<double>(per_class_prior_tv.size());
}

std::string MetricsReport::to_json(const std::vector<std::string>& class_names) const {
    nlohmann::json doc;
    doc["concept_acc"] = concept_acc;
    doc["concept_macro_f1"] = concept_macro_f1;
    doc["class_f1"] = class_f1;
    if (cbm_class_f1) doc["cbm_class_f1"] = *cbm_class_f1;
    doc["mean_attention_entropy"] = mean_attention_entropy;
    nlohmann::json tv = nlohmann::json::object();
    for (std::size_t k = 0; k < per_class_prior_tv.size(); ++k) {
        const std::string name =
            k < class_names.size() ? class_names[k] : "class_" + std::to_string(k);
        tv[name] = per_class_prior_tv[k];
    }
    doc["per_class_prior_tv"] = tv;
    doc["tv_mean"] = tv_mean();
    doc["empty_concept_conventions"] = empty_concept_conventions;
    return doc.dump(2) + "\n";
}

std::string MetricsReport::csv_header() {
    return "dataset,seed,concept_acc,concept_f1,class_f1,entropy,tv_mean\n";
}

std::string MetricsReport::csv_row(const std::string& dataset, std::uint64_t seed) const {
    std::ostringstream out;
    out.precision(17);
    out << dataset << ',' << seed << ',' << concept_acc << ',' << concept_macro_f1 << ','
        << class_f1 << ',' << mean_attention_entropy << ',' << tv_mean() << '\n';
    return out.str();
}

MetricsReport evaluate_model(const ParamSet& params, const SynthDataset& dataset,
                             const PriorTable& table, double threshold, std::uint64_t eval_seed,
                             bool fit_cbm) {
    if (dataset.test.empty()) throw ContractError("evaluate_model: empty test split");

    // Deployment-path predictions: inference mode, no priors, no labels.
    std::vector<Vec> test_c_hats, test_c_trues;
    std::vector<std::size_t> test_labels, match_preds;
    test_c_hats.reserve(dataset.test.size());
    for (const auto& s : dataset.test) {
        ForwardTrace t = forward_infer(s.x, params);
        match_preds.push_back(prior_match_classify(t.c_hat, table));
        test_c_hats.push_back(std::move(t.c_hat));
        if (s.c_true.size() != table.concept_count())
            throw DimensionError("evaluate_model: test sample lacks ground-truth concepts");
        test_c_trues.push_back(s.c_true);
        test_labels.push_back(s.y);
    }

    MetricsReport report;
    const ConceptMetrics cm = concept_metrics(test_c_hats, test_c_trues, threshold);
    report.concept_acc = cm.acc;
    report.concept_macro_f1 = cm.macro_f1;
    report.empty_concept_conventions = cm.empty_convention_count;
    report.class_f1 = macro_f1_multiclass(match_preds, test_labels, table.class_count());

    // Attention/prior diagnostics need training-mode traces (seeded surrogates).
    Rng surrogate_rng = Rng(eval_seed).fork("eval-surrogate");
    std::vector<ForwardTrace> diag_traces;
    diag_traces.reserve(dataset.test.size());
    for (const auto& s : dataset.test)
        diag_traces.push_back(
            forward(s.x, s.y, params, &table, ForwardMode::Train, &surrogate_rng));
    const AblationDiagnostics diag = ablation_diagnostics(diag_traces, test_labels, table);
    report.mean_attention_entropy = diag.mean_attention_entropy;
    report.per_class_prior_tv = diag.per_class_prior_tv;

    if (fit_cbm) {
        if (dataset.train.empty()) throw ContractError("evaluate_model: empty train split");
        std::vector<Vec> train_c_hats;
        std::vector<std::size_t> train_labels;
        train_c_hats.reserve(dataset.train.size());
        for (const auto& s : dataset.train) {
            train_c_hats.push_back(forward_infer(s.x, params).c_hat);
            train_labels.push_back(s.y);
        }
        const CbmHead head = fit_cbm_head(train_c_hats, train_labels, table.class_count());
        std::vector<std::size_t> cbm_preds;
        cbm_preds.reserve(test_c_hats.size());
        for (const auto& c_hat : test_c_hats) cbm_preds.push_back(cbm_classify(head, c_hat));
        report.cbm_class_f1 = macro_f1_multiclass(cbm_preds, test_labels, table.class_count());
    }
    return report;
}

} // namespace pcp
