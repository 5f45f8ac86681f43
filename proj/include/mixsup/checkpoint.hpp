#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mixsup/model.hpp"

namespace mixsup {

/// Model weights plus optimizer state at a step boundary.
struct Checkpoint {
    ModelConfig model;
    std::uint64_t step = 0;
    std::vector<float> parameters;
    std::vector<float> velocity;
};

/// Binary layout (little-endian host order):
///   "MIXSUP1" (7 bytes), u32 format version,
///   i32 input_channels, i32[4] stage_channels, i32 fusion_channels,
///   u64 step, u64 n, f32[n] parameters, u64 m, f32[m] velocity.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError / BadCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mixsup
