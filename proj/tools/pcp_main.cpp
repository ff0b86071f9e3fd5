#include <CLI11.hpp>

#include "pcp/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Prior-guided concept predictor: synthesize, train, evaluate, "
                 "gradient-check and ablate"};
    app.require_subcommand(1);

    pcp::cli::SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
    synth_cmd->add_option("--spec", synth.spec_path,
                          "Synth spec JSON (omit for the built-in default task)");
    synth_cmd->add_option("--seed", synth.seed, "Generation seed");
    synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
    synth_cmd->add_flag("--emit-effective", synth.emit_effective,
                        "Also write empirical priors of the train split");

    pcp::cli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train the concept predictor");
    train_cmd->add_option("--config", train.config_path, "Train config JSON");
    train_cmd->add_option("--data", train.data_dir, "Dataset directory")->required();
    train_cmd->add_option("--priors", train.priors_path, "Priors CSV")->required();
    train_cmd->add_option("--groups", train.groups_path, "Concept groups JSON");
    train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
    std::uint64_t train_seed = 0;
    auto* train_seed_opt =
        train_cmd->add_option("--seed", train_seed, "Single seed (overrides config seeds)");
    train_cmd->add_flag("--disable-kl", train.disable_kl, "Drop the KL regularizer");
    train_cmd->add_flag("--disable-ent", train.disable_ent, "Drop the entropy regularizer");
    double train_beta = 0.0, train_lkl = 0.0, train_lent = 0.0;
    auto* beta_opt = train_cmd->add_option("--beta", train_beta, "Refinement strength");
    auto* lkl_opt = train_cmd->add_option("--lambda-kl", train_lkl, "KL weight");
    auto* lent_opt = train_cmd->add_option("--lambda-ent", train_lent, "Entropy weight");

    pcp::cli::EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained checkpoint");
    eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "Checkpoint JSON")->required();
    eval_cmd->add_option("--data", eval.data_dir, "Dataset directory")->required();
    eval_cmd->add_option("--priors", eval.priors_path, "Priors CSV")->required();
    eval_cmd->add_option("--out", eval.out_path, "Metrics JSON destination")->required();
    eval_cmd->add_option("--seed", eval.seed, "Seed for diagnostic surrogate draws");
    eval_cmd->add_option("--csv", eval.csv_path, "Optional metrics CSV row destination");
    bool no_cbm = false;
    eval_cmd->add_flag("--no-cbm", no_cbm, "Skip fitting the CBM linear head");

    pcp::cli::GradcheckArgs gradcheck;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
    gradcheck_cmd->add_option("--config", gradcheck.config_path,
                              "Gradcheck config JSON (omit for the default small model)");
    gradcheck_cmd->add_option("--seed", gradcheck.seed, "Seed for the random instance");
    gradcheck_cmd->add_option("--out", gradcheck.out_path, "Report JSON destination");

    pcp::cli::AblateArgs ablate;
    auto* ablate_cmd =
        app.add_subcommand("ablate", "Run the four-way regularizer ablation sweep");
    ablate_cmd->add_option("--config", ablate.config_path, "Train config JSON");
    ablate_cmd->add_option("--data", ablate.data_dir, "Dataset directory")->required();
    ablate_cmd->add_option("--priors", ablate.priors_path, "Priors CSV")->required();
    ablate_cmd->add_option("--groups", ablate.groups_path, "Concept groups JSON");
    ablate_cmd->add_option("--out", ablate.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : pcp::cli::kExitParseError;
    }

    return pcp::cli::dispatch([&]() -> int {
        if (synth_cmd->parsed()) {
            pcp::cli::cmd_synth(synth);
        } else if (train_cmd->parsed()) {
            if (train_seed_opt->count() > 0) train.seed = train_seed;
            if (beta_opt->count() > 0) train.beta = train_beta;
            if (lkl_opt->count() > 0) train.lambda_kl = train_lkl;
            if (lent_opt->count() > 0) train.lambda_ent = train_lent;
            pcp::cli::cmd_train(train);
        } else if (eval_cmd->parsed()) {
            eval.fit_cbm = !no_cbm;
            pcp::cli::cmd_eval(eval);
        } else if (gradcheck_cmd->parsed()) {
            return pcp::cli::cmd_gradcheck(gradcheck) ? pcp::cli::kExitOk
                                                      : pcp::cli::kExitCheckFailed;
        } else if (ablate_cmd->parsed()) {
            pcp::cli::cmd_ablate(ablate);
        }
        return pcp::cli::kExitOk;
    });
}
