#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace pcp::cli {

inline constexpr const char* kToolVersion = "pcp 0.1.0";

// Exit codes: 0 ok, 1 check failure, 2 input parse error, 3 dimension or
// contract error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitParseError = 2;
inline constexpr int kExitContractError = 3;

struct SynthArgs {
    std::string spec_path; // empty = built-in default benchmark task
    std::uint64_t seed = 0;
    std::string out_dir;
    bool emit_effective = false; // also write empirical priors of the train split
};

struct TrainArgs {
    std::string config_path; // empty = defaults
    std::string data_dir;
    std::string priors_path;
    std::string groups_path; // empty = all concepts singleton
    std::string out_dir;
    std::optional<std::uint64_t> seed; // overrides the config seed list
    bool disable_kl = false;
    bool disable_ent = false;
    std::optional<double> beta;
    std::optional<double> lambda_kl;
    std::optional<double> lambda_ent;
};

struct EvalArgs {
    std::string checkpoint_path;
    std::string data_dir;
    std::string priors_path;
    std::string out_path;
    std::uint64_t seed = 0; // seeds the diagnostic surrogate draws
    std::string csv_path;   // optional aggregation row
    bool fit_cbm = true;
};

struct GradcheckArgs {
    std::string config_path; // empty = default small config
    std::uint64_t seed = 0;
    std::string out_path; // optional report destination (also printed)
};

struct AblateArgs {
    std::string config_path;
    std::string data_dir;
    std::string priors_path;
    std::string groups_path;
    std::string out_dir;
};

// Each command throws pcp exceptions on failure; gradcheck additionally
// reports a failed check through its return value.
void cmd_synth(const SynthArgs& args);
void cmd_train(const TrainArgs& args);
void cmd_eval(const EvalArgs& args);
bool cmd_gradcheck(const GradcheckArgs& args); // true = check passed
void cmd_ablate(const AblateArgs& args);

// Runs fn, mapping pcp exceptions onto the exit code table above.
int dispatch(const std::function<int()>& fn);

} // namespace pcp::cli
