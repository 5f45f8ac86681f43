#pragma once

#include <filesystem>

#include "mixsup/annotations.hpp"
#include "mixsup/grid.hpp"

namespace mixsup::io {

/// Reads a PNG/JPEG as 3-channel RGB in [0,1] (grayscale is replicated).
/// Throws CorruptImage.
ImageTensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageTensor& image);

/// Single-channel mask, binarized at > 127.
DenseMask read_mask(const std::filesystem::path& path);
/// Writes 0 / 255.
void write_mask(const std::filesystem::path& path, const DenseMask& mask);

/// 0 = background, 255 = foreground, 128 = unlabeled.
ScribbleLabel read_scribble(const std::filesystem::path& path);
void write_scribble(const std::filesystem::path& path, const ScribbleLabel& scribble);

/// {"box": [r0, c0, r1, c1]}
BoxLabel read_box(const std::filesystem::path& path);
void write_box(const std::filesystem::path& path, const BoxLabel& box);

/// {"fg": [[r, c], ...], "bg": [[r, c], ...]}
PointLabel read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, const PointLabel& points);

}  // namespace mixsup::io
