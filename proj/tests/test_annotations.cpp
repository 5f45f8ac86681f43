#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "mixsup/annotations.hpp"
#include "mixsup/error.hpp"

using namespace mixsup;

namespace {

DenseMask disk(int size, double cr, double cc, double radius) {
    DenseMask m(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) m(r, c) = std::hypot(r - cr, c - cc) <= radius ? 1 : 0;
    return m;
}

// Independent IoU so these tests do not lean on the metrics module.
double overlap(const DenseMask& a, const DenseMask& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a.values()[i] && b.values()[i];
        uni += a.values()[i] || b.values()[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return Errc::IoError;
}

// A handful of random ellipses and rectangles; sometimes disconnected.
DenseMask random_mask(std::mt19937_64& rng, int h, int w) {
    DenseMask m(h, w);
    std::uniform_int_distribution<int> parts(1, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = parts(rng);
    for (int p = 0; p < n; ++p) {
        const double cr = u(rng) * h, cc = u(rng) * w;
        const double ar = 2 + u(rng) * h / 3, ac = 2 + u(rng) * w / 3;
        const bool ellipse = u(rng) < 0.6;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double dr = (r - cr) / ar, dc = (c - cc) / ac;
                if (ellipse ? dr * dr + dc * dc <= 1.0 : std::abs(dr) <= 1.0 && std::abs(dc) <= 1.0) m(r, c) = 1;
            }
    }
    return m;
}

}  // namespace

TEST_CASE("mask_to_box examples") {
    DenseMask one(8, 8);
    one(3, 4) = 1;
    CHECK(mask_to_box(one) == BoxLabel{3, 4, 3, 4});

    CHECK(mask_to_box(DenseMask(8, 8, 1, 1)) == BoxLabel{0, 0, 7, 7});

    DenseMask ell(8, 8);
    for (int r = 2; r <= 5; ++r) ell(r, 1) = 1;
    for (int c = 1; c <= 6; ++c) ell(5, c) = 1;
    CHECK(mask_to_box(ell) == BoxLabel{2, 1, 5, 6});

    CHECK(code_of([] { (void)mask_to_box(DenseMask(4, 4)); }) == Errc::EmptyMask);
}

TEST_CASE("mask_to_box matches brute-force min/max and covers the mask") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 300; ++t) {
        const auto m = random_mask(rng, 20, 24);
        if (count_foreground(m) == 0) continue;
        int r0 = 99, c0 = 99, r1 = -1, c1 = -1;
        for (int r = 0; r < 20; ++r)
            for (int c = 0; c < 24; ++c)
                if (m(r, c)) r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, c), c1 = std::max(c1, c);
        const auto box = mask_to_box(m);
        REQUIRE(box == BoxLabel{r0, c0, r1, c1});
        const auto cover = rasterize_box(box, 20, 24);
        for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(cover.values()[i] >= m.values()[i]);
    }
}

TEST_CASE("mask_to_box is monotone under inclusion") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 300; ++t) {
        auto small = random_mask(rng, 16, 16);
        if (count_foreground(small) == 0) continue;
        auto big = small;
        const auto extra = random_mask(rng, 16, 16);
        for (std::size_t i = 0; i < big.size(); ++i) big.values()[i] |= extra.values()[i];
        REQUIRE(mask_to_box(big).contains(mask_to_box(small)));
    }
}

TEST_CASE("rasterize_box") {
    CHECK(rasterize_box({0, 0, 4, 5}, 5, 6) == DenseMask(5, 6, 1, 1));
    DenseMask centre(3, 3);
    centre(1, 1) = 1;
    CHECK(rasterize_box({1, 1, 1, 1}, 3, 3) == centre);
    CHECK(code_of([] { (void)rasterize_box({0, 0, 3, 3}, 3, 3); }) == Errc::OutOfBounds);
    CHECK(code_of([] { (void)rasterize_box({2, 0, 1, 1}, 3, 3); }) == Errc::OutOfBounds);

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, 15);
    for (int t = 0; t < 500; ++t) {
        int a = pick(rng), b = pick(rng), c = pick(rng), d = pick(rng);
        const BoxLabel box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
        const auto m = rasterize_box(box, 16, 16);
        REQUIRE(mask_to_box(m) == box);
        REQUIRE(rasterize_box(mask_to_box(m), 16, 16) == m);
    }
}

TEST_CASE("mask_to_polygon on rectangles, disks and degenerate masks") {
    const auto rect = rasterize_box({3, 5, 12, 20}, 24, 24);
    CHECK(mask_to_polygon(rect, 4) == rect);
    CHECK(mask_to_polygon(rect) == rect);

    // Oracle: a regular 16-gon inscribed in the disk, rasterized by half-plane tests.
    const double cr = 31.5, cc = 31.5, radius = 20.0;
    const auto d = disk(64, cr, cc, radius);
    DenseMask oracle(64, 64);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            bool inside = true;
            for (int k = 0; k < 16 && inside; ++k) {
                const double a0 = 2 * std::numbers::pi * k / 16, a1 = 2 * std::numbers::pi * (k + 1) / 16;
                const double x0 = radius * std::cos(a0), y0 = radius * std::sin(a0);
                const double x1 = radius * std::cos(a1), y1 = radius * std::sin(a1);
                const double cross = (x1 - x0) * ((r - cr) - y0) - (y1 - y0) * ((c - cc) - x0);
                inside = cross >= -1e-9;
            }
            oracle(r, c) = inside ? 1 : 0;
        }
    const auto poly = mask_to_polygon(d, 16);
    CHECK(overlap(poly, d) >= 0.95);
    CHECK(overlap(poly, oracle) >= 0.95);

    DenseMask dot(10, 10);
    dot(4, 7) = 1;
    CHECK(mask_to_polygon(dot) == dot);

    DenseMask line(10, 10);
    for (int c = 2; c <= 8; ++c) line(5, c) = 1;
    CHECK(mask_to_polygon(line) == line);

    CHECK(code_of([] { (void)mask_to_polygon(DenseMask(5, 5)); }) == Errc::EmptyMask);
    CHECK(code_of([&] { (void)mask_to_polygon(rect, 2); }) == Errc::OutOfBounds);
}

TEST_CASE("mask_to_polygon keeps IoU >= 0.5 on connected blobs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const double cr = 16 + u(rng) * 32, cc = 16 + u(rng) * 32;
        const double ar = 4 + u(rng) * 14, ac = 4 + u(rng) * 14, tilt = u(rng) * std::numbers::pi;
        const double wobble = u(rng) * 0.3;
        DenseMask m(64, 64);
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                const double dy = r - cr, dx = c - cc;
                const double y = dy * std::cos(tilt) - dx * std::sin(tilt), x = dy * std::sin(tilt) + dx * std::cos(tilt);
                const double ang = std::atan2(y, x);
                const double scale = 1.0 + wobble * std::sin(3 * ang);
                m(r, c) = (y * y) / (ar * ar) + (x * x) / (ac * ac) <= scale * scale ? 1 : 0;
            }
        const auto blob = largest_component8(m);
        if (count_foreground(blob) < 41) continue;
        REQUIRE(overlap(mask_to_polygon(blob), blob) >= 0.5);
    }
}

TEST_CASE("simplify_contour caps the vertex count and keeps exact corners") {
    std::vector<PolygonVertex> square;
    for (int i = 0; i < 10; ++i) square.push_back({0.0, double(i)});
    for (int i = 0; i < 10; ++i) square.push_back({double(i), 10.0});
    for (int i = 10; i > 0; --i) square.push_back({10.0, double(i)});
    for (int i = 10; i > 0; --i) square.push_back({double(i), 0.0});
    const auto s = simplify_contour(square, 16);
    CHECK(s.size() == 4);
    const auto capped = simplify_contour(square, 3);
    CHECK(capped.size() == 3);
}

TEST_CASE("mask_to_scribble soundness and sparsity") {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto m = random_mask(rng, 32, 32);
        const auto fg = count_foreground(m);
        if (fg == 0 || fg == m.size()) continue;
        const auto s = mask_to_scribble(m, static_cast<std::uint64_t>(t));
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto v = s.grid.values()[i];
            if (v == ScribbleValue::Foreground) REQUIRE(m.values()[i] == 1);
            if (v == ScribbleValue::Background) REQUIRE(m.values()[i] == 0);
        }
        REQUIRE(s.count(ScribbleValue::Foreground) >= 1);
        REQUIRE(s.count(ScribbleValue::Background) >= 1);
        REQUIRE(s.count(ScribbleValue::Unlabeled) >= 1);
        ++checked;
    }
    CHECK(checked > 900);

    const auto d = disk(64, 31.5, 31.5, 18);
    const auto s = mask_to_scribble(d, 1);
    const double labeled = 1.0 - static_cast<double>(s.count(ScribbleValue::Unlabeled)) / d.size();
    CHECK(labeled < 0.2);
    CHECK(mask_to_scribble(d, 1) == s);

    CHECK(code_of([] { (void)mask_to_scribble(DenseMask(6, 6), 0); }) == Errc::EmptyMask);
    CHECK(code_of([] { (void)mask_to_scribble(DenseMask(6, 6, 1, 1), 0); }) == Errc::EmptyBackground);
}

TEST_CASE("thin produces a one-pixel skeleton inside the region") {
    const auto d = disk(40, 19.5, 19.5, 12);
    const auto sk = thin(d);
    CHECK(count_foreground(sk) > 0);
    CHECK(count_foreground(sk) < count_foreground(d) / 5);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(sk.values()[i] <= d.values()[i]);
    // No 2x2 block survives thinning.
    for (int r = 0; r + 1 < 40; ++r)
        for (int c = 0; c + 1 < 40; ++c) CHECK_FALSE((sk(r, c) && sk(r + 1, c) && sk(r, c + 1) && sk(r + 1, c + 1)));
}

TEST_CASE("mask_to_points") {
    DenseMask five(6, 6);
    const std::set<PixelCoord> expect{{0, 0}, {1, 3}, {2, 2}, {4, 5}, {5, 1}};
    for (auto p : expect) five(p.row, p.col) = 1;
    const auto pts = mask_to_points(five, 5, 5, 42);
    CHECK(std::set<PixelCoord>(pts.fg_points.begin(), pts.fg_points.end()) == expect);
    CHECK(pts.bg_points.size() == 5);

    // Fewer pixels than requested: take all.
    DenseMask two(4, 4, 1, 1);
    two(0, 0) = 0;
    two(3, 3) = 0;
    CHECK(mask_to_points(two, 5, 5, 1).bg_points.size() == 2);

    std::mt19937_64 rng(9);
    for (int t = 0; t < 200; ++t) {
        const auto m = random_mask(rng, 20, 20);
        const auto fg = count_foreground(m);
        if (fg == 0 || fg == m.size()) continue;
        const auto p = mask_to_points(m, 5, 5, static_cast<std::uint64_t>(t));
        REQUIRE(p.fg_points.size() == std::min<std::size_t>(5, fg));
        std::set<PixelCoord> seen;
        for (auto q : p.fg_points) REQUIRE((m(q.row, q.col) == 1 && seen.insert(q).second));
        for (auto q : p.bg_points) REQUIRE((m(q.row, q.col) == 0 && seen.insert(q).second));
        REQUIRE(mask_to_points(m, 5, 5, static_cast<std::uint64_t>(t)) == p);
    }

    // A 1000-pixel blob: distinct seeds give distinct draws.
    DenseMask blob(50, 50);
    for (int r = 0; r < 25; ++r)
        for (int c = 0; c < 40; ++c) blob(r, c) = 1;
    int same = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto a = mask_to_points(blob, 5, 5, 2 * s).fg_points, b = mask_to_points(blob, 5, 5, 2 * s + 1).fg_points;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        same += a == b;
    }
    CHECK(same == 0);

    CHECK(code_of([] { (void)mask_to_points(DenseMask(3, 3), 5, 5, 0); }) == Errc::EmptyMask);
    CHECK(code_of([] { (void)mask_to_points(DenseMask(3, 3, 1, 1), 5, 5, 0); }) == Errc::EmptyBackground);
}

TEST_CASE("connected components") {
    DenseMask m(5, 5);
    m(0, 0) = m(1, 1) = 1;  // diagonal: two 4-components, one 8-component
    m(3, 3) = m(3, 4) = m(4, 3) = 1;
    CHECK(count_components4(m) == 3);
    const auto big = largest_component8(m);
    CHECK(count_foreground(big) == 3);
    CHECK(big(3, 3) == 1);
}

TEST_CASE("kind names round-trip") {
    for (auto k : kAllKinds) CHECK(parse_kind(to_string(k)) == k);
    CHECK(parse_kind("points") == SupervisionKind::Point);
    CHECK(code_of([] { (void)parse_kind("lasso"); }) == Errc::InvalidConfig);
}
