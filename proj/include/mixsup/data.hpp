#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mixsup/annotations.hpp"
#include "mixsup/grid.hpp"

namespace mixsup {

using Annotation = std::variant<DenseMask, BoxLabel, ScribbleLabel, PointLabel>;

/// An image with exactly one annotation. Pixel and polygon samples both carry
/// a DenseMask (polygons are stored rasterized).
struct LabeledSample {
    ImageTensor image;
    SupervisionKind kind = SupervisionKind::Pixel;
    Annotation payload;
    std::string source_dataset;
    std::string name;

    /// Throws SizeMismatch / OutOfBounds / InvalidConfig when the payload
    /// variant or extent does not match the kind and image.
    void validate() const;
    [[nodiscard]] const DenseMask& mask() const { return std::get<DenseMask>(payload); }
};

struct Dataset {
    std::string name;
    SupervisionKind kind = SupervisionKind::Pixel;
    std::vector<LabeledSample> samples;
};

/// Loads `<root>/images/*.{png,jpg,jpeg}` in lexicographic order with the
/// kind's annotation directory (masks/, boxes/, scribbles/, points/) matched
/// by file stem. Throws MissingAnnotation (naming the expected file),
/// CorruptImage, SizeMismatch, EmptyDataset.
Dataset load_folder_dataset(const std::filesystem::path& root, SupervisionKind kind);

/// Subdirectory holding annotations of `kind` in the folder layout.
std::string_view annotation_dir(SupervisionKind kind);

/// `n` RGB images with one star-shaped blob each and its exact mask. Mask
/// foreground fraction lies in [0.5%, 60%] and the blob is 4-connected.
/// Throws BadSize unless height and width divide by 16.
Dataset synth_blob_dataset(int n, int height, int width, std::uint64_t seed, std::string name = "synthetic");

/// Replaces every dense payload with a synthesized annotation of `kind`.
/// Inputs must be pixel-kind.
Dataset derive_weak_dataset(const Dataset& dense, SupervisionKind kind, std::uint64_t seed);

/// Samples [first, first+count) as a new dataset.
Dataset slice(const Dataset& source, std::size_t first, std::size_t count, std::string name);

// Geometry of resizing.
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);
DenseMask resize_nearest(const DenseMask& mask, int height, int width);
ScribbleLabel resize_nearest(const ScribbleLabel& scribble, int height, int width);
/// Rows/cols covered by the nearest-neighbour image of the box.
BoxLabel resize_box(const BoxLabel& box, int from_h, int from_w, int to_h, int to_w);
/// Points map to the centre of their nearest-neighbour footprint; coordinates
/// that collide across fg/bg are dropped from both lists.
PointLabel resize_points(const PointLabel& points, int from_h, int from_w, int to_h, int to_w);

LabeledSample resize_sample(const LabeledSample& sample, int height, int width);

/// Resizes to S×S with S uniform over `size_set`.
LabeledSample random_resize(const LabeledSample& sample, std::span<const int> size_set, std::mt19937_64& rng);

enum class SamplingMode { RoundRobin, Proportional };

struct Batch {
    SupervisionKind kind = SupervisionKind::Pixel;
    std::vector<const LabeledSample*> samples;
};

/// Single-kind batches. Round-robin cycles the kinds present in canonical
/// order (pixel, polygon, box, scribble, point); proportional picks a kind
/// with probability proportional to its sample count. Within a kind, samples
/// are drawn in shuffled epochs without replacement. Holds pointers into the
/// datasets, which must outlive it and are never modified.
class MixedSampler {
public:
    MixedSampler(std::span<const Dataset> datasets, int batch_size, std::uint64_t seed,
                 SamplingMode mode = SamplingMode::RoundRobin);

    Batch next();
    void skip(std::size_t batches);
    [[nodiscard]] const std::vector<SupervisionKind>& kinds() const noexcept { return kinds_; }

private:
    struct Pool {
        SupervisionKind kind;
        std::vector<const LabeledSample*> samples;
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
        std::mt19937_64 rng;
    };

    const LabeledSample* draw(Pool& pool);

    std::vector<Pool> pools_;
    std::vector<SupervisionKind> kinds_;
    int batch_size_;
    SamplingMode mode_;
    std::mt19937_64 kind_rng_;
    std::size_t step_ = 0;
};

}  // namespace mixsup
