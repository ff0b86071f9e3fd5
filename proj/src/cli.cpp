#include "pcp/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pcp/diffcheck.hpp"
#include "pcp/errors.hpp"
#include "pcp/eval.hpp"
#include "pcp/synthgen.hpp"
#include "pcp/trainer.hpp"

namespace pcp::cli {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write file: " + path);
    out << content;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    std::ostringstream ss;
    ss << std::hex << h;
    return ss.str();
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_bytes, const std::vector<std::uint64_t>& seeds,
                    const nlohmann::json& inputs, const std::string& out) {
    nlohmann::json doc;
    doc["command"] = command;
    doc["tool_version"] = kToolVersion;
    doc["config_hash"] = fnv1a_hex(config_bytes);
    doc["seeds"] = seeds;
    doc["inputs"] = inputs;
    doc["output"] = out;
    write_file(path, doc.dump(2) + "\n");
}

ConceptGroups load_groups_or_singletons(const std::string& path, const PriorTable& table) {
    if (path.empty()) return ConceptGroups::all_singletons(table.concept_count());
    return load_groups(path, table);
}

TrainConfig resolve_train_config(const TrainArgs& args, std::string* config_bytes) {
    TrainConfig config;
    if (!args.config_path.empty()) {
        *config_bytes = read_file(args.config_path);
        config = TrainConfig::from_json(*config_bytes);
    } else {
        *config_bytes = config.to_json();
    }
    if (args.seed) config.seeds = {*args.seed};
    if (args.disable_kl) config.disable_kl = true;
    if (args.disable_ent) config.disable_ent = true;
    if (args.beta) config.beta = *args.beta;
    if (args.lambda_kl) config.lambda_kl = *args.lambda_kl;
    if (args.lambda_ent) config.lambda_ent = *args.lambda_ent;
    config.validate();
    if (config.seeds.empty()) throw ContractError("train: no seeds given");
    return config;
}

std::string dataset_name(const std::string& data_dir) {
    const auto name = std::filesystem::path(data_dir).filename().string();
    return name.empty() ? data_dir : name;
}

} // namespace

void cmd_synth(const SynthArgs& args) {
    SynthSpec spec;
    std::string spec_bytes;
    if (args.spec_path.empty()) {
        spec = default_synth_spec();
        spec_bytes = spec.to_json();
    } else {
        spec_bytes = read_file(args.spec_path);
        spec = SynthSpec::from_json(spec_bytes);
    }

    const SynthDataset dataset = generate(spec, args.seed);
    std::filesystem::create_directories(args.out_dir);
    save_dataset(dataset, args.out_dir);
    save_priors(spec.priors, args.out_dir + "/priors.csv");
    write_file(args.out_dir + "/groups.json", serialize_groups_json(spec.priors, spec.groups));
    if (args.emit_effective) {
        const PriorTable effective =
            effective_priors(dataset.train, dataset.concept_names, dataset.class_names);
        save_priors(effective, args.out_dir + "/effective_priors.csv");
    }
    write_manifest(args.out_dir + "/manifest.json", "synth", spec_bytes, {args.seed},
                   {{"spec", args.spec_path.empty() ? "builtin-default" : args.spec_path}},
                   args.out_dir);
    std::cout << "synth: wrote " << dataset.train.size() << "/" << dataset.val.size() << "/"
              << dataset.test.size() << " train/val/test samples to " << args.out_dir << "\n";
}

void cmd_train(const TrainArgs& args) {
    std::string config_bytes;
    const TrainConfig config = resolve_train_config(args, &config_bytes);

    const SynthDataset dataset = load_dataset_dir(args.data_dir);
    const PriorTable table = load_priors(args.priors_path);
    const ConceptGroups groups = load_groups_or_singletons(args.groups_path, table);

    std::filesystem::create_directories(args.out_dir);
    const auto train_examples = to_examples(dataset.train);
    const auto val_examples = to_examples(dataset.val);

    auto save_seed_outputs = [&](const TrainLog& log, const MetricsReport& report) {
        const std::string tag = std::to_string(log.seed);
        write_file(args.out_dir + "/checkpoint_seed" + tag + ".json",
                   log.final_params.to_json());
        write_file(args.out_dir + "/train_log_seed" + tag + ".json", log.to_json());
        write_file(args.out_dir + "/metrics_seed" + tag + ".json",
                   report.to_json(dataset.class_names));
        std::cout << "seed " << log.seed << ": final train total "
                  << (log.epochs.empty() ? 0.0 : log.epochs.back().train.total)
                  << ", concept F1 " << report.concept_macro_f1 << ", class F1 "
                  << report.class_f1 << " (" << log.wall_clock_seconds << " s)\n";
    };

    if (config.seeds.size() == 1) {
        TrainLog log = train(config, train_examples, val_examples, table, groups,
                             config.seeds.front());
        const MetricsReport report = evaluate_model(log.final_params, dataset, table,
                                                    config.concept_threshold,
                                                    config.seeds.front());
        save_seed_outputs(log, report);
    } else {
        const AggregateMetrics agg = run_seeds(config, dataset, table, groups);
        for (const auto& outcome : agg.per_seed) save_seed_outputs(outcome.log, outcome.report);
        write_file(args.out_dir + "/aggregate.json", agg.to_json());
        std::cout << "aggregate concept F1 " << agg.concept_macro_f1.mean << " +/- "
                  << agg.concept_macro_f1.stddev << "\n";
    }

    write_manifest(args.out_dir + "/manifest.json", "train", config_bytes, config.seeds,
                   {{"config", args.config_path.empty() ? "builtin-default" : args.config_path},
                    {"data", args.data_dir},
                    {"priors", args.priors_path},
                    {"groups", args.groups_path.empty() ? "all-singletons" : args.groups_path}},
                   args.out_dir);
}

void cmd_eval(const EvalArgs& args) {
    const ParamSet params = ParamSet::from_json(read_file(args.checkpoint_path));
    const SynthDataset dataset = load_dataset_dir(args.data_dir);
    const PriorTable table = load_priors(args.priors_path);
    if (params.concept_count() != table.concept_count())
        throw DimensionError("eval: checkpoint concept count does not match prior table");

    const MetricsReport report =
        evaluate_model(params, dataset, table, 0.5, args.seed, args.fit_cbm);
    write_file(args.out_path, report.to_json(dataset.class_names));
    if (!args.csv_path.empty()) {
        write_file(args.csv_path, MetricsReport::csv_header() +
                                      report.csv_row(dataset_name(args.data_dir), args.seed));
    }
    write_manifest(args.out_path + ".manifest.json", "eval", read_file(args.checkpoint_path),
                   {args.seed},
                   {{"checkpoint", args.checkpoint_path},
                    {"data", args.data_dir},
                    {"priors", args.priors_path}},
                   args.out_path);
    std::cout << "eval: concept acc " << report.concept_acc << ", concept F1 "
              << report.concept_macro_f1 << ", class F1 " << report.class_f1 << "\n";
}

bool cmd_gradcheck(const GradcheckArgs& args) {
    GradCheckConfig config;
    std::string config_bytes = config.to_json();
    if (!args.config_path.empty()) {
        config_bytes = read_file(args.config_path);
        config = GradCheckConfig::from_json(config_bytes);
    }
    const GradReport report = grad_check(config, args.seed);
    const std::string report_json = report.to_json();
    std::cout << report_json;
    if (!args.out_path.empty()) {
        write_file(args.out_path, report_json);
        write_manifest(args.out_path + ".manifest.json", "gradcheck", config_bytes, {args.seed},
                       {{"config",
                         args.config_path.empty() ? "builtin-default" : args.config_path}},
                       args.out_path);
    }
    return report.passed;
}

void cmd_ablate(const AblateArgs& args) {
    std::string config_bytes;
    TrainConfig base_config;
    if (!args.config_path.empty()) {
        config_bytes = read_file(args.config_path);
        base_config = TrainConfig::from_json(config_bytes);
    } else {
        config_bytes = base_config.to_json();
    }
    if (base_config.seeds.size() < 2)
        throw ContractError("ablate: at least two seeds for aggregation");

    const SynthDataset dataset = load_dataset_dir(args.data_dir);
    const PriorTable table = load_priors(args.priors_path);
    const ConceptGroups groups = load_groups_or_singletons(args.groups_path, table);

    // Row order mirrors the ablation table: no regularizers, entropy only,
    // KL only, full model.
    const std::pair<bool, bool> rows[4] = {
        {true, true}, {true, false}, {false, true}, {false, false}};

    std::ostringstream csv;
    csv << "kl,ent,concept_acc_mean,concept_acc_std,concept_f1_mean,concept_f1_std,"
           "class_f1_mean,class_f1_std,entropy_mean,entropy_std,tv_mean,tv_std\n";
    csv.precision(17);
    nlohmann::json rows_json = nlohmann::json::array();

    for (const auto& [disable_kl, disable_ent] : rows) {
        TrainConfig config = base_config;
        config.disable_kl = disable_kl;
        config.disable_ent = disable_ent;
        const AggregateMetrics agg = run_seeds(config, dataset, table, groups);
        const char* kl_flag = disable_kl ? "off" : "on";
        const char* ent_flag = disable_ent ? "off" : "on";
        csv << kl_flag << ',' << ent_flag << ',' << agg.concept_acc.mean << ','
            << agg.concept_acc.stddev << ',' << agg.concept_macro_f1.mean << ','
            << agg.concept_macro_f1.stddev << ',' << agg.class_f1.mean << ','
            << agg.class_f1.stddev << ',' << agg.mean_attention_entropy.mean << ','
            << agg.mean_attention_entropy.stddev << ',' << agg.tv_mean.mean << ','
            << agg.tv_mean.stddev << '\n';
        nlohmann::json row;
        row["kl"] = !disable_kl;
        row["ent"] = !disable_ent;
        row["concept_acc"] = {{"mean", agg.concept_acc.mean}, {"std", agg.concept_acc.stddev}};
        row["concept_f1"] = {{"mean", agg.concept_macro_f1.mean},
                             {"std", agg.concept_macro_f1.stddev}};
        row["class_f1"] = {{"mean", agg.class_f1.mean}, {"std", agg.class_f1.stddev}};
        row["entropy"] = {{"mean", agg.mean_attention_entropy.mean},
                          {"std", agg.mean_attention_entropy.stddev}};
        row["tv"] = {{"mean", agg.tv_mean.mean}, {"std", agg.tv_mean.stddev}};
        rows_json.push_back(row);
        std::cout << "ablation kl=" << kl_flag << " ent=" << ent_flag << ": concept F1 "
                  << agg.concept_macro_f1.mean << ", entropy "
                  << agg.mean_attention_entropy.mean << ", tv " << agg.tv_mean.mean << "\n";
    }

    std::filesystem::create_directories(args.out_dir);
    write_file(args.out_dir + "/ablation.csv", csv.str());
    write_file(args.out_dir + "/ablation.json", rows_json.dump(2) + "\n");
    write_manifest(args.out_dir + "/manifest.json", "ablate", config_bytes, base_config.seeds,
                   {{"config", args.config_path.empty() ? "builtin-default" : args.config_path},
                    {"data", args.data_dir},
                    {"priors", args.priors_path},
                    {"groups", args.groups_path.empty() ? "all-singletons" : args.groups_path}},
                   args.out_dir);
}

int dispatch(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitParseError;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kExitContractError;
    } catch (const ContractError& e) {
        std::cerr << "contract error: " << e.what() << "\n";
        return kExitContractError;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitCheckFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
}

} // namespace pcp::cli
