#pragma once

#include <cstdint>
#include <filesystem>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "mixsup/data.hpp"
#include "mixsup/trainer.hpp"

namespace mixsup {

/// A folder dataset named in a config file.
struct DatasetSpec {
    SupervisionKind kind = SupervisionKind::Pixel;
    std::string name;
    std::filesystem::path path;
};

/// Everything a train/ablate invocation needs. Built from flat key=value
/// text; see parse_run_config for the accepted keys.
struct RunConfig {
    TrainConfig train;
    std::vector<DatasetSpec> train_sets;  ///< `train = kind:path`, repeatable
    std::vector<DatasetSpec> test_sets;   ///< `test = name:path`, repeatable

    // Synthetic blob corpus. The training images are split evenly across
    // synthetic_kinds; each share gets weak labels of its kind.
    int synthetic_train = 0;
    int synthetic_test = 0;
    int synthetic_size = 64;
    std::vector<SupervisionKind> synthetic_kinds{std::begin(kAllKinds), std::end(kAllKinds)};
    std::uint64_t data_seed = 1;

    std::filesystem::path out_dir = "out";

    /// Throws InvalidConfig.
    void validate() const;
};

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
/// Unknown keys, repeated scalar keys and malformed values throw
/// InvalidConfig naming the line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes every key; parse_run_config(format_run_config(c)) reproduces c.
std::string format_run_config(const RunConfig& config);

std::vector<Dataset> build_train_sets(const RunConfig& config);
std::vector<Dataset> build_test_sets(const RunConfig& config);

}  // namespace mixsup
