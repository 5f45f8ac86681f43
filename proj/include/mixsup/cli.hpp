#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixsup/config.hpp"

namespace mixsup {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// `mixsup {synth|train|eval|ablate|loss-check} ...`. Never throws; errors
/// are reported on `err` and mapped to the exit codes above.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// One ablation arm: which loss terms are switched on.
struct AblationArm {
    std::string label;
    bool uncertainty = false;
    bool consistency = false;
};

/// base (BCE-style terms only), +uncertainty, +uncertainty+consistency.
const std::vector<AblationArm>& ablation_arms();

struct AblationRun {
    std::string arm;
    std::uint64_t seed = 0;
    double dice = 0.0;
    double iou = 0.0;
};

struct AblationRow {
    AblationArm arm;
    double dice_mean = 0.0, dice_std = 0.0;
    double iou_mean = 0.0, iou_std = 0.0;
    int seeds = 0;
};

struct AblationResult {
    std::vector<AblationRun> runs;
    std::vector<AblationRow> rows;  ///< in ablation_arms() order
};

/// Trains every arm with seeds config.seed .. config.seed + seeds - 1 on the
/// same data and evaluates each on the config's test sets. The arms differ
/// only in lambda_u / lambda_c (switched-off terms get weight 0; switched-on
/// terms keep the config's weights). `on_run` sees each finished run.
AblationResult run_ablation(const RunConfig& config, int seeds,
                            const std::function<void(const AblationRun&)>& on_run = {});

/// Columns BCE,Uncertain,Consistency,Dice,IoU,Dice_std,IoU_std,seeds.
std::string ablation_csv(const AblationResult& result);

}  // namespace mixsup
