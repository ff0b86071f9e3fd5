#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pcp/losses.hpp"
#include "pcp/network.hpp"

namespace pcp {

// Central finite differences over a flattened ParamSet. loss_at must be
// deterministic: every random draw (surrogates, triplet picks) frozen.
Vec finite_diff(const std::function<double(const ParamSet&)>& loss_at, const ParamSet& params,
                double h);

struct GradCheckConfig {
    std::size_t feature_dim = 4;   // D
    std::size_t concept_count = 3; // M
    std::size_t class_count = 2;   // L
    std::size_t batch_size = 6;
    std::vector<std::size_t> hidden_widths = {8, 6};
    std::size_t proj_width = 0; // 0 = max(M, H/2)
    double beta = 1.0;
    double mu = 0.5;
    double lambda_kl = 0.3;
    double lambda_ent = 0.01;
    double kl_eps = 1e-6;
    double h = 1e-6;
    double threshold = 1e-5;
    // Anchors whose |margin slack| falls below this are near the hinge kink;
    // parameter coordinates whose perturbation flips any hinge are excluded.
    double kink_band = 1e-7;
    // FD noise on a coordinate is ~ ulp(loss)/(2h |g|) relative, so at
    // h=1e-6 a 1e-5 agreement bound is only meaningful for |g| >= ~2e-5.
    // Coordinates below this floor are tallied separately.
    double significance_floor = 1e-4;
    // Test hook: flips the sign of one analytic gradient coordinate so the
    // harness can prove it detects a wrong gradient.
    bool inject_fault = false;

    std::string to_json() const;
    static GradCheckConfig from_json(const std::string& text);
};

struct BlockError {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradReport {
    std::vector<BlockError> blocks;
    double global_max_rel_error = 0.0;
    // Max over coordinates whose gradient magnitude clears the significance
    // floor; the raw max above can be dominated by FD roundoff on
    // near-zero-gradient coordinates.
    double significant_max_rel_error = 0.0;
    std::size_t sub_floor_coordinates = 0;
    std::size_t skipped_kink_coordinates = 0;
    std::size_t checked_coordinates = 0;
    double threshold = 0.0;
    bool passed = false;

    std::string to_json() const;
};

// Builds a small random model and batch from the config, freezes all random
// draws, and compares the analytic gradient of the composite loss against
// central finite differences coordinate by coordinate.
GradReport grad_check(const GradCheckConfig& config, std::uint64_t seed);

// rel_err = |ga - gfd| / max(1e-12, |ga|, |gfd|)
double relative_error(double analytic, double numeric);

} // namespace pcp
