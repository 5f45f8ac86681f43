#include "mixsup/annotations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <string>

#include <opencv2/imgproc.hpp>

#include "mixsup/error.hpp"

namespace mixsup {

std::string_view to_string(SupervisionKind kind) {
    switch (kind) {
        case SupervisionKind::Pixel: return "pixel";
        case SupervisionKind::Polygon: return "polygon";
        case SupervisionKind::Box: return "box";
        case SupervisionKind::Scribble: return "scribble";
        case SupervisionKind::Point: return "point";
    }
    return "unknown";
}

SupervisionKind parse_kind(std::string_view name) {
    for (auto kind : kAllKinds) {
        if (name == to_string(kind)) return kind;
    }
    if (name == "points") return SupervisionKind::Point;
    throw Error(Errc::InvalidConfig, "unknown supervision kind '" + std::string(name) + "'");
}

std::size_t ScribbleLabel::count(ScribbleValue v) const noexcept {
    return static_cast<std::size_t>(std::count(grid.values().begin(), grid.values().end(), v));
}

std::size_t count_foreground(const DenseMask& mask) {
    return static_cast<std::size_t>(
        std::count_if(mask.values().begin(), mask.values().end(), [](auto v) { return v != 0; }));
}

namespace {

void require_foreground(const DenseMask& mask) {
    if (count_foreground(mask) == 0) throw Error(Errc::EmptyMask, "mask has no foreground pixel");
}

void require_both_classes(const DenseMask& mask) {
    const auto fg = count_foreground(mask);
    if (fg == 0) throw Error(Errc::EmptyMask, "mask has no foreground pixel");
    if (fg == mask.plane_size()) throw Error(Errc::EmptyBackground, "mask has no background pixel");
}

// Labels 8- or 4-connected components; returns per-pixel label (0 = background)
// and the component count.
std::pair<Grid<int>, int> label_components(const DenseMask& mask, bool eight) {
    Grid<int> labels(mask.height(), mask.width(), 1, 0);
    int next = 0;
    std::vector<PixelCoord> stack;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask(r, c) || labels(r, c) != 0) continue;
            ++next;
            labels(r, c) = next;
            stack.push_back({r, c});
            while (!stack.empty()) {
                const auto p = stack.back();
                stack.pop_back();
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        if (!eight && dr != 0 && dc != 0) continue;
                        const int rr = p.row + dr;
                        const int cc = p.col + dc;
                        if (mask.contains(rr, cc) && mask(rr, cc) && labels(rr, cc) == 0) {
                            labels(rr, cc) = next;
                            stack.push_back({rr, cc});
                        }
                    }
                }
            }
        }
    }
    return {std::move(labels), next};
}

double point_segment_distance(const PolygonVertex& p, const PolygonVertex& a,
                              const PolygonVertex& b) {
    const double dr = b.row - a.row;
    const double dc = b.col - a.col;
    const double len2 = dr * dr + dc * dc;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((p.row - a.row) * dr + (p.col - a.col) * dc) / len2, 0.0, 1.0);
    const double er = a.row + t * dr - p.row;
    const double ec = a.col + t * dc - p.col;
    return std::sqrt(er * er + ec * ec);
}

double squared_distance(const PolygonVertex& a, const PolygonVertex& b) {
    const double dr = a.row - b.row;
    const double dc = a.col - b.col;
    return dr * dr + dc * dc;
}

double polygon_area(const std::vector<PolygonVertex>& poly) {
    double twice = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        twice += a.col * b.row - b.col * a.row;
    }
    return 0.5 * std::abs(twice);
}

// Chessboard distance from every pixel to the nearest foreground pixel.
Grid<int> distance_to_foreground(const DenseMask& mask) {
    constexpr int kFar = std::numeric_limits<int>::max();
    Grid<int> dist(mask.height(), mask.width(), 1, kFar);
    std::queue<PixelCoord> frontier;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (mask(r, c)) {
                dist(r, c) = 0;
                frontier.push({r, c});
            }
        }
    }
    while (!frontier.empty()) {
        const auto p = frontier.front();
        frontier.pop();
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const int rr = p.row + dr;
                const int cc = p.col + dc;
                if (mask.contains(rr, cc) && dist(rr, cc) == kFar) {
                    dist(rr, cc) = dist(p.row, p.col) + 1;
                    frontier.push({rr, cc});
                }
            }
        }
    }
    return dist;
}

}  // namespace

BoxLabel mask_to_box(const DenseMask& mask) {
    BoxLabel box{mask.height(), mask.width(), -1, -1};
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask(r, c)) continue;
            box.row_min = std::min(box.row_min, r);
            box.col_min = std::min(box.col_min, c);
            box.row_max = std::max(box.row_max, r);
            box.col_max = std::max(box.col_max, c);
        }
    }
    if (box.row_max < 0) throw Error(Errc::EmptyMask, "mask has no foreground pixel");
    return box;
}

DenseMask rasterize_box(const BoxLabel& box, int height, int width) {
    if (!box.fits(height, width)) {
        throw Error(Errc::OutOfBounds, "box [" + std::to_string(box.row_min) + "," +
                                           std::to_string(box.col_min) + "," +
                                           std::to_string(box.row_max) + "," +
                                           std::to_string(box.col_max) + "] exceeds " +
                                           std::to_string(height) + "x" + std::to_string(width));
    }
    DenseMask mask(height, width);
    for (int r = box.row_min; r <= box.row_max; ++r) {
        for (int c = box.col_min; c <= box.col_max; ++c) mask(r, c) = 1;
    }
    return mask;
}

int count_components4(const DenseMask& mask) { return label_components(mask, false).second; }

DenseMask largest_component8(const DenseMask& mask) {
    const auto [labels, count] = label_components(mask, true);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(count) + 1, 0);
    for (auto l : labels.values()) ++sizes[static_cast<std::size_t>(l)];
    int best = 0;
    for (int l = 1; l <= count; ++l) {
        if (best == 0 || sizes[static_cast<std::size_t>(l)] > sizes[static_cast<std::size_t>(best)])
            best = l;
    }
    DenseMask out(mask.height(), mask.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (best != 0 && labels[i] == best) ? 1 : 0;
    return out;
}

std::vector<PolygonVertex> simplify_contour(const std::vector<PolygonVertex>& contour,
                                            int max_vertices) {
    if (contour.size() <= 2) return contour;
    const std::size_t n = contour.size();

    // Seed with an approximate diameter: farthest from the first point, then
    // farthest from that one.
    auto farthest_from = [&](std::size_t from) {
        std::size_t best = from;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = squared_distance(contour[i], contour[from]);
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    };
    const std::size_t a = farthest_from(0);
    const std::size_t b = farthest_from(a);
    std::vector<std::size_t> chosen{std::min(a, b), std::max(a, b)};
    if (chosen[0] == chosen[1]) chosen.pop_back();

    constexpr double kOnSegment = 1e-9;
    while (static_cast<int>(chosen.size()) < max_vertices) {
        double best_d = kOnSegment;
        std::size_t best_i = n;
        for (std::size_t k = 0; k < chosen.size(); ++k) {
            const std::size_t from = chosen[k];
            const std::size_t to = chosen[(k + 1) % chosen.size()];
            for (std::size_t i = (from + 1) % n; i != to; i = (i + 1) % n) {
                const double d = point_segment_distance(contour[i], contour[from], contour[to]);
                if (d > best_d) {
                    best_d = d;
                    best_i = i;
                }
            }
        }
        if (best_i == n) break;
        chosen.insert(std::upper_bound(chosen.begin(), chosen.end(), best_i), best_i);
    }

    std::vector<PolygonVertex> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(contour[i]);
    return out;
}

DenseMask rasterize_polygon(const std::vector<PolygonVertex>& polygon, int height, int width) {
    DenseMask mask(height, width);
    if (polygon.empty()) return mask;
    double rmin = polygon[0].row, rmax = rmin, cmin = polygon[0].col, cmax = cmin;
    for (const auto& v : polygon) {
        rmin = std::min(rmin, v.row);
        rmax = std::max(rmax, v.row);
        cmin = std::min(cmin, v.col);
        cmax = std::max(cmax, v.col);
    }
    constexpr double kEdgeTolerance = 1e-9;
    const int r0 = std::max(0, static_cast<int>(std::floor(rmin)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(rmax)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cmin)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cmax)));
    const std::size_t n = polygon.size();
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const PolygonVertex p{static_cast<double>(r), static_cast<double>(c)};
            bool on_edge = false;
            int winding = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& a = polygon[i];
                const auto& b = polygon[(i + 1) % n];
                if (point_segment_distance(p, a, b) <= kEdgeTolerance) {
                    on_edge = true;
                    break;
                }
                const double cross = (b.col - a.col) * (p.row - a.row) - (p.col - a.col) * (b.row - a.row);
                if (a.row <= p.row) {
                    if (b.row > p.row && cross > 0) ++winding;
                } else if (b.row <= p.row && cross < 0) {
                    --winding;
                }
            }
            if (on_edge || winding != 0) mask(r, c) = 1;
        }
    }
    return mask;
}

DenseMask mask_to_polygon(const DenseMask& mask, int max_vertices) {
    if (max_vertices < 3) throw Error(Errc::OutOfBounds, "max_vertices must be >= 3");
    require_foreground(mask);
    const DenseMask component = largest_component8(mask);

    cv::Mat raster(component.height(), component.width(), CV_8UC1);
    for (int r = 0; r < component.height(); ++r) {
        for (int c = 0; c < component.width(); ++c) raster.at<std::uint8_t>(r, c) = component(r, c);
    }
    std::vector<std::vector<cv::Point>> contours;
    cv::findContours(raster, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_NONE);

    std::vector<PolygonVertex> contour;
    if (!contours.empty()) {
        const auto longest = std::max_element(contours.begin(), contours.end(),
                                              [](const auto& x, const auto& y) { return x.size() < y.size(); });
        contour.reserve(longest->size());
        for (const auto& p : *longest) contour.push_back({static_cast<double>(p.y), static_cast<double>(p.x)});
    }

    const auto polygon = simplify_contour(contour, max_vertices);
    if (polygon.size() < 3 || polygon_area(polygon) <= 0.0) {
        // Line or point component: bounding rectangle fallback.
        return rasterize_box(mask_to_box(component), mask.height(), mask.width());
    }
    return rasterize_polygon(polygon, mask.height(), mask.width());
}

DenseMask thin(const DenseMask& region) {
    const int h = region.height();
    const int w = region.width();
    DenseMask img = region;
    for (auto& v : img.values()) v = v ? 1 : 0;

    auto at = [&](int r, int c) -> int { return img.contains(r, c) ? img(r, c) : 0; };
    std::vector<std::size_t> to_clear;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            to_clear.clear();
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < w; ++c) {
                    if (!img(r, c)) continue;
                    // P2..P9 clockwise from north.
                    const std::array<int, 8> nb{at(r - 1, c), at(r - 1, c + 1), at(r, c + 1),
                                                at(r + 1, c + 1), at(r + 1, c), at(r + 1, c - 1),
                                                at(r, c - 1), at(r - 1, c - 1)};
                    const int b = std::accumulate(nb.begin(), nb.end(), 0);
                    if (b < 2 || b > 6) continue;
                    int transitions = 0;
                    for (int k = 0; k < 8; ++k) transitions += (nb[k] == 0 && nb[(k + 1) % 8] == 1);
                    if (transitions != 1) continue;
                    const int p2 = nb[0], p4 = nb[2], p6 = nb[4], p8 = nb[6];
                    const bool ok = pass == 0 ? (p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0)
                                              : (p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0);
                    if (ok) to_clear.push_back(static_cast<std::size_t>(r) * w + c);
                }
            }
            for (auto i : to_clear) img[i] = 0;
            changed = changed || !to_clear.empty();
        }
    }

    // Components erased entirely (e.g. 2x2 blocks) keep their first pixel.
    const auto [labels, count] = label_components(region, true);
    std::vector<bool> survived(static_cast<std::size_t>(count) + 1, false);
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (img[i]) survived[static_cast<std::size_t>(labels[i])] = true;
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
        const auto l = static_cast<std::size_t>(labels[i]);
        if (l != 0 && !survived[l]) {
            img[i] = 1;
            survived[l] = true;
        }
    }
    return img;
}

ScribbleLabel mask_to_scribble(const DenseMask& mask, std::uint64_t rng_seed) {
    require_both_classes(mask);
    std::mt19937_64 rng(rng_seed);
    const int gap = 2 + static_cast<int>(rng() % 3);  // 2..4 px from the object
    constexpr int kRingWidth = 4;

    const auto dist = distance_to_foreground(mask);
    DenseMask ring(mask.height(), mask.width());
    for (std::size_t i = 0; i < ring.size(); ++i) {
        ring[i] = (dist[i] >= gap && dist[i] < gap + kRingWidth) ? 1 : 0;
    }
    if (count_foreground(ring) == 0) {
        for (std::size_t i = 0; i < ring.size(); ++i) ring[i] = mask[i] ? 0 : 1;
    }

    const auto fg_skeleton = thin(mask);
    const auto bg_skeleton = thin(ring);
    ScribbleLabel label{Grid<ScribbleValue>(mask.height(), mask.width(), 1, ScribbleValue::Unlabeled)};
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (fg_skeleton[i]) label.grid[i] = ScribbleValue::Foreground;
        else if (bg_skeleton[i]) label.grid[i] = ScribbleValue::Background;
    }
    return label;
}

PointLabel mask_to_points(const DenseMask& mask, int k_fg, int k_bg, std::uint64_t rng_seed) {
    require_both_classes(mask);
    std::vector<PixelCoord> fg;
    std::vector<PixelCoord> bg;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) (mask(r, c) ? fg : bg).push_back({r, c});
    }
    std::mt19937_64 rng(rng_seed);
    // Partial Fisher-Yates: the first k entries are a uniform sample.
    auto sample = [&rng](std::vector<PixelCoord>& pool, int k) {
        const auto take = std::min(pool.size(), static_cast<std::size_t>(std::max(k, 0)));
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(take);
        return pool;
    };
    PointLabel out;
    out.fg_points = sample(fg, k_fg);
    out.bg_points = sample(bg, k_bg);
    return out;
}

}  // namespace mixsup
