#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mixsup/grid.hpp"

namespace mixsup {

/// Binary mask, values exactly 0 or 1.
using DenseMask = Grid<std::uint8_t>;

enum class SupervisionKind : std::uint8_t { Pixel, Polygon, Box, Scribble, Point };

inline constexpr SupervisionKind kAllKinds[] = {
    SupervisionKind::Pixel, SupervisionKind::Polygon, SupervisionKind::Box,
    SupervisionKind::Scribble, SupervisionKind::Point};

std::string_view to_string(SupervisionKind kind);
/// Accepts "pixel", "polygon", "box", "scribble", "point" (and "points").
/// Throws Error(InvalidConfig) otherwise.
SupervisionKind parse_kind(std::string_view name);

/// Inclusive pixel rectangle.
struct BoxLabel {
    int row_min = 0;
    int col_min = 0;
    int row_max = 0;
    int col_max = 0;

    [[nodiscard]] bool fits(int height, int width) const noexcept {
        return 0 <= row_min && row_min <= row_max && row_max < height &&
               0 <= col_min && col_min <= col_max && col_max < width;
    }
    [[nodiscard]] bool contains(const BoxLabel& inner) const noexcept {
        return row_min <= inner.row_min && col_min <= inner.col_min &&
               inner.row_max <= row_max && inner.col_max <= col_max;
    }
    friend bool operator==(const BoxLabel&, const BoxLabel&) = default;
};

enum class ScribbleValue : std::uint8_t { Unlabeled = 0, Foreground = 1, Background = 2 };

struct ScribbleLabel {
    Grid<ScribbleValue> grid;

    [[nodiscard]] int height() const noexcept { return grid.height(); }
    [[nodiscard]] int width() const noexcept { return grid.width(); }
    [[nodiscard]] std::size_t count(ScribbleValue v) const noexcept;
    friend bool operator==(const ScribbleLabel&, const ScribbleLabel&) = default;
};

struct PixelCoord {
    int row = 0;
    int col = 0;
    friend auto operator<=>(const PixelCoord&, const PixelCoord&) = default;
};

struct PointLabel {
    std::vector<PixelCoord> fg_points;
    std::vector<PixelCoord> bg_points;
    friend bool operator==(const PointLabel&, const PointLabel&) = default;
};

inline constexpr int kDefaultPointCount = 5;
inline constexpr int kDefaultPolygonVertices = 16;

[[nodiscard]] std::size_t count_foreground(const DenseMask& mask);

/// Tight bounding box of every foreground pixel. Throws EmptyMask.
BoxLabel mask_to_box(const DenseMask& mask);

/// Mask that is 1 exactly inside `box`. Throws OutOfBounds.
DenseMask rasterize_box(const BoxLabel& box, int height, int width);

/// Traces the boundary of the largest 8-connected foreground component,
/// simplifies it to at most `max_vertices` vertices by farthest-point
/// insertion and rasterizes the polygon (pixel centres on the boundary are
/// inside). Components that collapse to a line or a point fall back to their
/// bounding rectangle. Throws EmptyMask, or OutOfBounds for max_vertices < 3.
DenseMask mask_to_polygon(const DenseMask& mask, int max_vertices = kDefaultPolygonVertices);

/// Polygon vertices in (row, col) pixel-centre coordinates, before rasterization.
struct PolygonVertex {
    double row = 0;
    double col = 0;
};
std::vector<PolygonVertex> simplify_contour(const std::vector<PolygonVertex>& contour,
                                            int max_vertices);
DenseMask rasterize_polygon(const std::vector<PolygonVertex>& polygon, int height, int width);

/// Skeleton-based scribble: the thinned foreground is FG, the thinned
/// background ring around the object is BG. The seed selects the ring
/// offset. Throws EmptyMask / EmptyBackground.
ScribbleLabel mask_to_scribble(const DenseMask& mask, std::uint64_t rng_seed);

/// Uniform sample without replacement of min(k, available) coordinates from
/// each class. Throws EmptyMask / EmptyBackground.
PointLabel mask_to_points(const DenseMask& mask, int k_fg, int k_bg, std::uint64_t rng_seed);

/// One-pixel-wide Zhang-Suen skeleton. Never returns an empty skeleton for a
/// nonempty region: if thinning erases a component entirely its first pixel
/// is kept.
DenseMask thin(const DenseMask& region);

/// Number of 4-connected foreground components.
int count_components4(const DenseMask& mask);

/// Largest 8-connected component (ties: first in raster order).
DenseMask largest_component8(const DenseMask& mask);

}  // namespace mixsup
