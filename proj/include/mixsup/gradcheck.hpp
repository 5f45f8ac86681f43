#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mixsup {

struct CheckResult {
    std::string suite;   ///< "gradient", "m2b", "uncertainty", "rotation"
    std::string name;    ///< loss or property under test
    bool passed = false;
    double worst = 0.0;  ///< largest error seen (relative for gradients)
    std::string detail;
};

struct GradCheckOptions {
    std::uint64_t seed = 0;
    int trials = 100;
    int size = 8;
    double step = 1e-4;
    double tolerance = 1e-3;
    /// Name of a loss whose analytic gradient is deliberately scaled by 1.05,
    /// to confirm the suite notices. Empty for a clean run.
    std::string inject_fault;
};

/// Loss names accepted by GradCheckOptions::inject_fault.
const std::vector<std::string>& gradient_check_names();

/// Analytic vs central-difference gradients w.r.t. logits for bce, dice,
/// dense, box, scribble, point (both inputs) and consistency. Inputs are
/// spaced logits in [-3, 3] plus jitter, so no max/min ties or uncertainty
/// kinks fall within one step.
std::vector<CheckResult> run_gradient_checks(const GradCheckOptions& options);

/// Idempotence, dominance, permutation consistency, identity on rectangle
/// masks, and the 2x2 hand example.
std::vector<CheckResult> run_m2b_checks(std::uint64_t seed);

/// Value at 0.5, symmetry, and monotone decrease on (0.5, 1 - eps].
std::vector<CheckResult> run_uncertainty_checks(std::uint64_t seed);

/// consistency_loss(pred, rotated-back pred) is exactly 0 when the predictor
/// is the identity on a single-channel square input.
std::vector<CheckResult> run_rotation_checks(std::uint64_t seed, int trials = 100);

}  // namespace mixsup
