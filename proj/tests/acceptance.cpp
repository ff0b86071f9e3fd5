// Acceptance suite: prints one pass/fail line per criterion and exits
// nonzero if any criterion fails. Criteria 4-5 run the full multi-seed
// training benchmark, so this binary takes a few minutes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcp/cli.hpp"
#include "pcp/diffcheck.hpp"
#include "pcp/eval.hpp"
#include "pcp/losses.hpp"
#include "pcp/synthgen.hpp"
#include "pcp/trainer.hpp"

using namespace pcp;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void criterion(int number, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// criterion 1: gradient oracle
// ---------------------------------------------------------------------------
void run_criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    const GradCheckConfig config; // D=4, M=3, L=2, batch 6, h=1e-6
    const GradReport report = grad_check(config, 0);
    const double seconds = elapsed_seconds(start);
    criterion(1, "gradient oracle on the default small config",
              report.passed && report.global_max_rel_error < 1e-5 && seconds < 10.0,
              "max rel err " + fmt(report.global_max_rel_error) + ", " +
                  std::to_string(report.skipped_kink_coordinates) + " kink skips, " +
                  fmt(seconds) + " s");
}

// ---------------------------------------------------------------------------
// criterion 2: analytic unit values against independent oracles
// ---------------------------------------------------------------------------
void run_criterion_2() {
    bool ok = true;
    std::string detail;

    // attention of z=(1,2,3), c~=(1,0,1) vs a direct softmax evaluation
    {
        const Vec gamma = attention({1.0, 2.0, 3.0}, {1.0, 0.0, 1.0});
        const double e1 = std::exp(1.0), e0 = 1.0, e3 = std::exp(3.0);
        const double total = e1 + e0 + e3;
        const Vec want = {e1 / total, e0 / total, e3 / total};
        double err = 0.0;
        for (std::size_t i = 0; i < 3; ++i) err = std::max(err, std::abs(gamma[i] - want[i]));
        ok = ok && err < 1e-9;
        detail += "attention err " + fmt(err);
    }
    // KL of group prior (0.7,0.3) against empirical (0.5,0.5)
    {
        PriorTable table;
        table.concept_names = {"c0", "c1"};
        table.class_names = {"k0", "k1"};
        table.probs = Matrix(2, 2);
        table.probs(0, 0) = 0.7;
        table.probs(1, 0) = 0.3;
        table.probs(0, 1) = 0.5;
        table.probs(1, 1) = 0.5;
        ConceptGroups groups;
        groups.groups.push_back({"g", {0, 1}});
        const std::vector<Vec> c_hats = {{0.5, 0.5}};
        const std::vector<std::size_t> labels = {0};
        const double got = kl_loss(c_hats, labels, table, groups, 1e-6).value;
        const double oracle = 0.7 * std::log(0.7 / 0.5) + 0.3 * std::log(0.3 / 0.5);
        ok = ok && std::abs(got - oracle) < 1e-6 && std::abs(oracle - 0.08228) < 1e-4;
        detail += ", kl " + fmt(got);
    }
    // entropy of uniform M=8
    {
        const double got = entropy_loss(std::vector<Vec>{Vec(8, 0.125)}).value;
        ok = ok && std::abs(got - std::log(8.0)) < 1e-9;
        detail += ", entropy " + fmt(got);
    }
    // two-class match loss with orthogonal prior columns
    {
        PriorTable table;
        table.concept_names = {"c0", "c1"};
        table.class_names = {"k0", "k1"};
        table.probs = Matrix(2, 2);
        table.probs(0, 0) = 1.0;
        table.probs(1, 1) = 1.0;
        const std::vector<Vec> c_hats = {{1.0, 0.0}};
        const std::vector<std::size_t> labels = {0};
        const double got = match_loss(c_hats, labels, table).value;
        const double oracle = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
        ok = ok && std::abs(got - oracle) < 1e-6 && std::abs(oracle - 0.3133) < 1e-4;
        detail += ", match " + fmt(got);
    }
    criterion(2, "analytic unit values match their oracles", ok, detail);
}

// ---------------------------------------------------------------------------
// criterion 3: invariant suites
// ---------------------------------------------------------------------------
void run_criterion_3() {
    bool ok = true;
    std::string detail;

    // simplex normalization over random forwards
    {
        Rng rng(100);
        ModelShape shape{8, {12, 10}, 6, 0};
        const ParamSet params = init_params(shape, 1.0, rng);
        double worst = 0.0;
        Rng xr(101);
        for (int i = 0; i < 200; ++i) {
            Vec x(8);
            for (double& v : x) v = xr.normal();
            Vec bits(6);
            for (double& b : bits) b = xr.bernoulli(0.5) ? 1.0 : 0.0;
            const ForwardTrace t = forward_with_surrogate(x, bits, params);
            double total = 0.0;
            for (double g : t.gamma) {
                total += g;
                if (g < 0.0) ok = false;
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
        ok = ok && worst <= 1e-9;
        detail += "gamma sum err " + fmt(worst);
    }
    // entropy range on random simplex vectors
    {
        Rng rng(102);
        bool in_range = true;
        for (int i = 0; i < 500; ++i) {
            const std::size_t m = 2 + rng.below(10);
            Vec gamma(m);
            double total = 0.0;
            for (double& v : gamma) {
                v = -std::log(1.0 - rng.u01());
                total += v;
            }
            for (double& v : gamma) v /= total;
            const double h = entropy_loss(std::vector<Vec>{gamma}).value;
            in_range = in_range && h >= 0.0 && h <= std::log(static_cast<double>(m)) + 1e-12;
        }
        ok = ok && in_range;
        detail += std::string(", entropy range ") + (in_range ? "ok" : "violated");
    }
    // KL(p || p) == 0 with grouped and singleton concepts
    {
        Rng rng(103);
        double worst = 0.0;
        for (int round = 0; round < 100; ++round) {
            PriorTable table;
            table.concept_names = {"a", "b", "c", "d"};
            table.class_names = {"k0", "k1"};
            table.probs = Matrix(4, 2);
            for (double& p : table.probs.data) p = 0.05 + 0.9 * rng.u01();
            ConceptGroups groups;
            groups.groups.push_back({"g", {0, 1}});
            groups.singletons = {2, 3};
            std::vector<Vec> c_hats;
            std::vector<std::size_t> labels;
            for (int i = 0; i < 4; ++i) {
                const std::size_t y = i % 2;
                c_hats.push_back(table.class_column(y));
                labels.push_back(y);
            }
            worst = std::max(worst,
                             std::abs(kl_loss(c_hats, labels, table, groups, 1e-6).value));
        }
        ok = ok && worst <= 1e-12;
        detail += ", kl(p||p) " + fmt(worst);
    }
    // beta = 0 makes the forward pass independent of the surrogate
    {
        Rng rng(104);
        ModelShape shape{5, {7}, 4, 0};
        const ParamSet params = init_params(shape, 0.0, rng);
        double worst = 0.0;
        Rng xr(105);
        for (int i = 0; i < 100; ++i) {
            Vec x(5);
            for (double& v : x) v = xr.normal();
            Vec bits_a(4), bits_b(4);
            for (double& b : bits_a) b = xr.bernoulli(0.5) ? 1.0 : 0.0;
            for (double& b : bits_b) b = xr.bernoulli(0.5) ? 1.0 : 0.0;
            const ForwardTrace ta = forward_with_surrogate(x, bits_a, params);
            const ForwardTrace tb = forward_with_surrogate(x, bits_b, params);
            for (std::size_t m = 0; m < 4; ++m)
                worst = std::max(worst, std::abs(ta.c_hat[m] - tb.c_hat[m]));
        }
        ok = ok && worst == 0.0;
        detail += ", beta0 c_hat drift " + fmt(worst);
    }
    // composite weighting under the stock lambda values
    {
        Rng rng(106);
        PriorTable table;
        table.concept_names = {"a", "b", "c"};
        table.class_names = {"k0", "k1"};
        table.probs = Matrix(3, 2);
        for (double& p : table.probs.data) p = 0.1 + 0.8 * rng.u01();
        ConceptGroups groups;
        groups.groups.push_back({"g", {0, 1}});
        groups.singletons = {2};
        ModelShape shape{4, {6}, 3, 0};
        const ParamSet params = init_params(shape, 1.0, rng);
        std::vector<ForwardTrace> traces;
        std::vector<std::size_t> labels = {0, 1, 0, 1, 0, 1};
        Rng xr(107), sr(108);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            Vec x(4);
            for (double& v : x) v = xr.normal();
            traces.push_back(
                forward_with_surrogate(x, sample_surrogate(table, labels[i], sr).bits, params));
        }
        Rng tr(109);
        TotalLossConfig config; // lambda_kl 0.3, lambda_ent 0.01
        const auto res = total_loss(traces, labels, params, table, groups, config, &tr);
        const auto& b = res.breakdown;
        const double err =
            std::abs(b.total - (b.trip + b.match + 0.3 * b.kl + 0.01 * b.ent));
        ok = ok && err <= 1e-10;
        detail += ", composite err " + fmt(err);
    }
    criterion(3, "invariant suites hold", ok, detail);
}

// ---------------------------------------------------------------------------
// criteria 4 and 5: synthetic recovery and ablation directionality
// ---------------------------------------------------------------------------
struct AblationCell {
    bool kl = false;
    bool ent = false;
    AggregateMetrics agg;
};

double prior_sampling_baseline_f1(const SynthDataset& data, const PriorTable& table,
                                  std::uint64_t seed) {
    Rng rng = Rng(seed).fork("baseline");
    std::vector<Vec> sampled, truths;
    for (const auto& s : data.test) {
        sampled.push_back(sample_surrogate(table, s.y, rng).bits);
        truths.push_back(s.c_true);
    }
    return concept_metrics(sampled, truths, 0.5).macro_f1;
}

void run_criteria_4_5() {
    const SynthSpec spec = default_synth_spec();
    const SynthDataset data = generate(spec, 0);
    TrainConfig config; // stock recipe: 200 epochs, Adam 5e-4, lambdas 0.3/0.01
    config.seeds = {0, 1, 2};

    // full model first: it is both the criterion-4 subject and one ablation cell
    const auto start = std::chrono::steady_clock::now();
    AblationCell full{true, true, {}};
    full.agg = run_seeds(config, data, spec.priors, spec.groups);
    const double full_seconds = elapsed_seconds(start);

    double baseline = 0.0;
    for (std::uint64_t seed : config.seeds)
        baseline += prior_sampling_baseline_f1(data, spec.priors, seed);
    baseline /= static_cast<double>(config.seeds.size());

    const double f1 = full.agg.concept_macro_f1.mean;
    const double class_f1 = full.agg.class_f1.mean;
    bool loss_decreased = true;
    for (const auto& outcome : full.agg.per_seed)
        loss_decreased = loss_decreased && outcome.log.epochs.back().train.total <
                                               outcome.log.epochs.front().train.total;
    const bool ok4 = f1 >= 0.80 && f1 >= baseline + 0.10 && class_f1 >= 0.90 &&
                     loss_decreased && full_seconds < 900.0;
    criterion(4, "synthetic recovery on the default task",
              ok4,
              "concept F1 " + fmt(f1) + " +/- " + fmt(full.agg.concept_macro_f1.stddev) +
                  ", baseline " + fmt(baseline) + ", prior-match class F1 " + fmt(class_f1) +
                  ", train loss decreased over 200 epochs on every seed, 3-seed wall clock " +
                  fmt(full_seconds) + " s");

    // remaining ablation cells
    std::vector<AblationCell> cells;
    cells.push_back(full);
    for (const auto& [kl_on, ent_on] :
         std::vector<std::pair<bool, bool>>{{true, false}, {false, true}, {false, false}}) {
        TrainConfig cell_config = config;
        cell_config.disable_kl = !kl_on;
        cell_config.disable_ent = !ent_on;
        AblationCell cell{kl_on, ent_on, {}};
        cell.agg = run_seeds(cell_config, data, spec.priors, spec.groups);
        cells.push_back(cell);
    }
    auto find = [&](bool kl, bool ent) -> const AblationCell& {
        for (const auto& c : cells)
            if (c.kl == kl && c.ent == ent) return c;
        std::abort();
    };

    const double ent_on_kl_on = find(true, true).agg.mean_attention_entropy.mean;
    const double ent_off_kl_on = find(true, false).agg.mean_attention_entropy.mean;
    const double ent_on_kl_off = find(false, true).agg.mean_attention_entropy.mean;
    const double ent_off_kl_off = find(false, false).agg.mean_attention_entropy.mean;
    const bool entropy_drops = ent_on_kl_on < ent_off_kl_on && ent_on_kl_off < ent_off_kl_off;

    const double tv_kl_on_ent_on = find(true, true).agg.tv_mean.mean;
    const double tv_kl_off_ent_on = find(false, true).agg.tv_mean.mean;
    const double tv_kl_on_ent_off = find(true, false).agg.tv_mean.mean;
    const double tv_kl_off_ent_off = find(false, false).agg.tv_mean.mean;
    const bool tv_drops =
        tv_kl_on_ent_on < tv_kl_off_ent_on && tv_kl_on_ent_off < tv_kl_off_ent_off;

    bool full_best = true;
    for (const auto& c : cells)
        if (!(c.kl && c.ent) &&
            c.agg.concept_macro_f1.mean >= find(true, true).agg.concept_macro_f1.mean)
            full_best = false;

    criterion(5, "ablation directionality",
              entropy_drops && tv_drops && full_best,
              "entropy on/off " + fmt(ent_on_kl_on) + "/" + fmt(ent_off_kl_on) +
                  " (kl on) " + fmt(ent_on_kl_off) + "/" + fmt(ent_off_kl_off) +
                  " (kl off); tv on/off " + fmt(tv_kl_on_ent_on) + "/" +
                  fmt(tv_kl_off_ent_on) + " (ent on) " + fmt(tv_kl_on_ent_off) + "/" +
                  fmt(tv_kl_off_ent_off) + " (ent off); F1 cells full=" +
                  fmt(find(true, true).agg.concept_macro_f1.mean) + " kl=" +
                  fmt(find(true, false).agg.concept_macro_f1.mean) + " ent=" +
                  fmt(find(false, true).agg.concept_macro_f1.mean) + " none=" +
                  fmt(find(false, false).agg.concept_macro_f1.mean));
}

// ---------------------------------------------------------------------------
// criterion 6: determinism of the command surfaces
// ---------------------------------------------------------------------------
void run_criterion_6() {
    const fs::path root = fs::temp_directory_path() / "pcp_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);

    // Identical (config, data, seed) into the same destination twice;
    // every artifact file must come back byte-identical.
    bool ok = true;
    std::string diverged;
    auto compare_rerun = [&](const std::vector<std::string>& files, const fs::path& dir,
                             const std::function<void()>& run) {
        run();
        std::vector<std::string> first;
        for (const auto& f : files) first.push_back(slurp(dir / f));
        run();
        for (std::size_t i = 0; i < files.size(); ++i)
            if (slurp(dir / files[i]) != first[i]) {
                ok = false;
                diverged += " " + files[i];
            }
    };

    compare_rerun({"train.jsonl", "val.jsonl", "test.jsonl", "priors.csv", "groups.json",
                   "manifest.json"},
                  root / "data",
                  [&] { cli::cmd_synth({"", 0, (root / "data").string(), false}); });

    TrainConfig config;
    config.epochs = 25;
    config.seeds = {0};
    {
        std::ofstream out(root / "config.json", std::ios::binary);
        out << config.to_json();
    }
    compare_rerun({"checkpoint_seed0.json", "train_log_seed0.json", "metrics_seed0.json",
                   "manifest.json"},
                  root / "run", [&] {
                      cli::TrainArgs args;
                      args.config_path = (root / "config.json").string();
                      args.data_dir = (root / "data").string();
                      args.priors_path = (root / "data" / "priors.csv").string();
                      args.groups_path = (root / "data" / "groups.json").string();
                      args.out_dir = (root / "run").string();
                      cli::cmd_train(args);
                  });

    compare_rerun({"metrics.json", "metrics.json.manifest.json"}, root, [&] {
        cli::EvalArgs args;
        args.checkpoint_path = (root / "run" / "checkpoint_seed0.json").string();
        args.data_dir = (root / "data").string();
        args.priors_path = (root / "data" / "priors.csv").string();
        args.out_path = (root / "metrics.json").string();
        cli::cmd_eval(args);
    });

    criterion(6, "byte-identical reruns of synth, train and eval", ok,
              ok ? "all artifact files identical" : "diverged:" + diverged);
    fs::remove_all(root);
}

// ---------------------------------------------------------------------------
// criterion 7: brute-force equivalence of the metric implementations
// ---------------------------------------------------------------------------
void run_criterion_7() {
    bool ok = true;
    Rng rng(700);
    // concept metrics vs an independent confusion-matrix enumeration
    for (std::size_t n = 1; n <= 10 && ok; ++n)
        for (std::size_t m = 1; m <= 5 && ok; ++m)
            for (int round = 0; round < 6 && ok; ++round) {
                std::vector<Vec> pred(n, Vec(m)), truth(n, Vec(m));
                for (auto& row : pred)
                    for (double& v : row) v = rng.u01();
                for (auto& row : truth)
                    for (double& v : row) v = rng.bernoulli(rng.u01()) ? 1.0 : 0.0;
                if (round == 2) pred[0][0] = 0.5; // tie cell
                const ConceptMetrics got = concept_metrics(pred, truth, 0.5);

                std::size_t agree = 0;
                double f1_total = 0.0;
                for (std::size_t c = 0; c < m; ++c) {
                    std::size_t tp = 0, fp = 0, fn = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const bool p = pred[i][c] >= 0.5;
                        const bool t = truth[i][c] != 0.0;
                        tp += p && t;
                        fp += p && !t;
                        fn += !p && t;
                        agree += p == t;
                    }
                    f1_total += (tp + fp + fn == 0)
                                    ? 1.0
                                    : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
                }
                ok = ok &&
                     std::abs(got.acc - static_cast<double>(agree) / (n * m)) < 1e-12 &&
                     std::abs(got.macro_f1 - f1_total / m) < 1e-12;
            }
    // prior-match vs exhaustive search for L <= 5
    for (int round = 0; round < 400 && ok; ++round) {
        const std::size_t classes = 2 + rng.below(4);
        const std::size_t m = 1 + rng.below(6);
        PriorTable table;
        for (std::size_t i = 0; i < m; ++i) table.concept_names.push_back(std::to_string(i));
        for (std::size_t k = 0; k < classes; ++k)
            table.class_names.push_back("k" + std::to_string(k));
        table.probs = Matrix(m, classes);
        for (double& p : table.probs.data) p = rng.u01();
        Vec c_hat(m);
        for (double& v : c_hat) v = rng.u01();
        std::size_t best = 0;
        double best_sim = -1e300;
        for (std::size_t k = 0; k < classes; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += c_hat[j] * table.probs(j, k);
            if (s > best_sim) {
                best_sim = s;
                best = k;
            }
        }
        ok = ok && prior_match_classify(c_hat, table) == best;
    }
    criterion(7, "metric implementations equal brute-force enumeration", ok,
              ok ? "all instances agree" : "disagreement found");
}

} // namespace

int main() {
    run_criterion_1();
    run_criterion_2();
    run_criterion_3();
    run_criteria_4_5();
    run_criterion_6();
    run_criterion_7();
    if (g_failures == 0)
        std::printf("acceptance: all criteria passed\n");
    else
        std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
