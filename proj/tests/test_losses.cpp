#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mixsup/error.hpp"
#include "mixsup/losses.hpp"

using namespace mixsup;
using doctest::Approx;

namespace {

constexpr double kLn2 = std::numbers::ln2;

PredictionMap probs_of(int h, int w, std::initializer_list<double> values) {
    Grid<double> g(h, w);
    std::copy(values.begin(), values.end(), g.values().begin());
    return PredictionMap::from_probs(g);
}

PredictionMap random_pred(std::mt19937_64& rng, int h, int w) {
    std::normal_distribution<double> n(0.0, 1.5);
    Grid<double> g(h, w);
    for (auto& v : g.values()) v = n(rng);
    return PredictionMap::from_logits(g);
}

DenseMask random_target(std::mt19937_64& rng, int h, int w) {
    DenseMask m(h, w);
    std::bernoulli_distribution coin(0.3);
    for (auto& v : m.values()) v = coin(rng);
    return m;
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

}  // namespace

TEST_CASE("PredictionMap clamps probabilities and keeps logits") {
    Grid<double> l(1, 3);
    l(0, 0) = -40.0, l(0, 1) = 0.0, l(0, 2) = 40.0;
    const auto p = PredictionMap::from_logits(l);
    CHECK(p.prob(0, 0) == kProbEpsilon);
    CHECK(p.prob(0, 1) == 0.5);
    CHECK(p.prob(0, 2) == 1.0 - kProbEpsilon);
    CHECK(p.squash_derivative(0) == 0.0);
    CHECK(p.squash_derivative(1) == Approx(0.25));
    CHECK(p.logits()(0, 2) == 40.0);

    const auto q = PredictionMap::from_probs(p.probs());
    for (std::size_t i = 0; i < 3; ++i) CHECK(q.probs().values()[i] == Approx(p.probs().values()[i]).epsilon(1e-12));
}

TEST_CASE("bce_loss examples") {
    DenseMask t(2, 2);
    t(0, 1) = 1;
    CHECK(bce_loss(PredictionMap::constant(2, 2, 0.5), t) == Approx(kLn2).epsilon(1e-12));
    DenseMask one(1, 1, 1, 1);
    CHECK(bce_loss(probs_of(1, 1, {0.9}), one) == Approx(0.10536051565782628).epsilon(1e-12));

    Grid<double> exact(2, 2);
    exact(0, 1) = 1.0;
    CHECK(bce_loss(PredictionMap::from_probs(exact), t) < 1e-5);

    CHECK(code_of([] { (void)bce_loss(PredictionMap::constant(2, 2, 0.5), DenseMask(2, 3)); }) == Errc::ShapeMismatch);
}

TEST_CASE("bce_loss matches a direct oracle") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_pred(rng, 6, 7);
        const auto m = random_target(rng, 6, 7);
        double oracle = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double q = std::clamp(1.0 / (1.0 + std::exp(-p.logits().values()[i])), kProbEpsilon, 1 - kProbEpsilon);
            oracle -= m.values()[i] ? std::log(q) : std::log(1 - q);
        }
        CHECK(bce_loss(p, m) == Approx(oracle / p.size()).epsilon(1e-12));
    }
}

TEST_CASE("dice_loss examples") {
    DenseMask nine(4, 4);
    for (int i = 0; i < 9; ++i) nine.values()[static_cast<std::size_t>(i)] = 1;
    CHECK(dice_loss(PredictionMap::constant(4, 4, 0.0), nine) == Approx(1.0 - 1.0 / 10.0).epsilon(1e-6));

    DenseMask t(2, 2);
    t(1, 1) = 1;
    CHECK(dice_loss(PredictionMap::constant(2, 2, 0.5), t) == Approx(0.5).epsilon(1e-12));

    Grid<double> exact(2, 2);
    exact(1, 1) = 1.0;
    CHECK(dice_loss(PredictionMap::from_probs(exact), t) < 1e-5);
}

TEST_CASE("dense_loss is bce + dice") {
    DenseMask t(2, 2);
    t(0, 0) = 1;
    CHECK(dense_loss(PredictionMap::constant(2, 2, 0.5), t) == Approx(kLn2 + 0.5).epsilon(1e-12));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const auto p = random_pred(rng, 5, 5);
        const auto m = random_target(rng, 5, 5);
        CHECK(dense_loss(p, m) == Approx(bce_loss(p, m) + dice_loss(p, m)).epsilon(1e-13));
    }
}

TEST_CASE("m2b examples") {
    const auto b = m2b(probs_of(2, 2, {0.2, 0.8, 0.6, 0.1}));
    CHECK(b.prob(0, 0) == Approx(0.6).epsilon(1e-12));
    CHECK(b.prob(0, 1) == Approx(0.8).epsilon(1e-12));
    CHECK(b.prob(1, 0) == Approx(0.6).epsilon(1e-12));
    CHECK(b.prob(1, 1) == Approx(0.6).epsilon(1e-12));

    Grid<double> eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const auto full = m2b(PredictionMap::from_probs(eye));
    for (auto v : full.probs().values()) CHECK(std::abs(v - (1.0 - kProbEpsilon)) < 1e-12);

    const auto box = rasterize_box({1, 2, 3, 5}, 6, 7);
    Grid<double> bp(6, 7);
    for (std::size_t i = 0; i < box.size(); ++i) bp.values()[i] = box.values()[i];
    const auto pb = PredictionMap::from_probs(bp);
    CHECK(m2b(pb).probs() == pb.probs());
}

TEST_CASE("m2b source indices point at the selected input pixel") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_pred(rng, 5, 9);
        const auto proj = m2b_with_source(p);
        REQUIRE(proj.source.size() == p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            REQUIRE(proj.map.logits().values()[i] == p.logits().values()[proj.source[i]]);
        }
    }
}

TEST_CASE("box_loss examples") {
    const BoxLabel box{4, 4, 11, 11};
    const auto mask = rasterize_box(box, 16, 16);
    Grid<double> exact(16, 16);
    for (std::size_t i = 0; i < mask.size(); ++i) exact.values()[i] = mask.values()[i];
    CHECK(box_loss(PredictionMap::from_probs(exact), box) < 1e-5);

    // A plus sign spanning the box has the box as its projection.
    Grid<double> plus(16, 16);
    for (int i = 4; i <= 11; ++i) plus(7, i) = plus(i, 7) = 1.0;
    CHECK(box_loss(PredictionMap::from_probs(plus), box) < 1e-5);

    Grid<double> shifted(16, 16);
    for (int r = 0; r < 4; ++r)
        for (int c = 12; c < 16; ++c) shifted(r, c) = 1.0;
    const double off = box_loss(PredictionMap::from_probs(shifted), box);
    CHECK(off > 0.0);
    CHECK(off > box_loss(PredictionMap::from_probs(exact), box));

    CHECK(code_of([] { (void)box_loss(PredictionMap::constant(4, 4, 0.5), BoxLabel{0, 0, 4, 1}); }) == Errc::OutOfBounds);
}

TEST_CASE("uncertainty_loss") {
    CHECK(uncertainty_loss(0.5) == Approx(kLn2).epsilon(1e-12));
    CHECK(uncertainty_loss(0.99) == Approx(-std::log(0.99)).epsilon(1e-12));
    CHECK(uncertainty_loss(0.99) == Approx(0.01005).epsilon(1e-3));
    CHECK(uncertainty_loss(0.01) == Approx(uncertainty_loss(0.99)).epsilon(1e-9));
    CHECK(uncertainty_loss(0.0) == Approx(-std::log(1.0 - kProbEpsilon)));
    CHECK(uncertainty_loss_derivative(0.5) == 0.0);
    CHECK(uncertainty_loss_derivative(0.7) == Approx(-1.0 / 0.7));
    CHECK(uncertainty_loss_derivative(0.3) == Approx(1.0 / 0.7));
    for (double p = 0.01; p < 0.99; p += 0.01) CHECK(uncertainty_loss(p) <= kLn2 + 1e-15);
}

TEST_CASE("scribble_loss examples") {
    ScribbleLabel s{Grid<ScribbleValue>(3, 3, 1, ScribbleValue::Unlabeled)};
    s.grid(0, 0) = ScribbleValue::Foreground;
    s.grid(2, 2) = ScribbleValue::Background;
    CHECK(scribble_loss(PredictionMap::constant(3, 3, 0.5), s) == Approx(2 * kLn2).epsilon(1e-12));

    Grid<double> confident(3, 3, 1, 1.0);
    confident(2, 2) = 0.0;
    confident(1, 1) = 0.0;
    CHECK(scribble_loss(PredictionMap::from_probs(confident), s) < 1e-5);

    ScribbleLossWeights w{0.25};
    CHECK(scribble_loss(PredictionMap::constant(3, 3, 0.5), s, w) == Approx(1.25 * kLn2).epsilon(1e-12));

    // Every pixel labeled: plain BCE over the labels.
    std::mt19937_64 rng(4);
    const auto p = random_pred(rng, 3, 3);
    const auto m = random_target(rng, 3, 3);
    ScribbleLabel full{Grid<ScribbleValue>(3, 3)};
    for (std::size_t i = 0; i < m.size(); ++i) {
        full.grid.values()[i] = m.values()[i] ? ScribbleValue::Foreground : ScribbleValue::Background;
    }
    CHECK(scribble_loss(p, full) == Approx(bce_loss(p, m)).epsilon(1e-13));

    ScribbleLabel none{Grid<ScribbleValue>(3, 3, 1, ScribbleValue::Unlabeled)};
    CHECK(code_of([&] { (void)scribble_loss(p, none); }) == Errc::NoLabeledPixels);
}

TEST_CASE("consistency_loss examples") {
    std::mt19937_64 rng(5);
    const auto p = random_pred(rng, 6, 6);
    CHECK(consistency_loss(p, p) == 0.0);
    CHECK(consistency_loss(PredictionMap::constant(4, 4, 0.2), PredictionMap::constant(4, 4, 0.7)) ==
          Approx(0.25).epsilon(1e-12));
    // A constant predictor is rotation-equivariant.
    const auto c = PredictionMap::constant(5, 5, 0.3);
    CHECK(consistency_loss(c, rotate90(rotate90(c, 1), 3)) == 0.0);
}

TEST_CASE("point_loss examples") {
    PointLabel pts{{{0, 0}, {1, 2}}, {{3, 3}}};
    const auto half = PredictionMap::constant(4, 4, 0.5);
    CHECK(point_loss(half, half, pts) == Approx(kLn2).epsilon(1e-12));

    std::mt19937_64 rng(6);
    const auto a = random_pred(rng, 4, 4);
    const auto b = random_pred(rng, 4, 4);
    PointLossWeights no_points{1.0, 0.0, true};
    CHECK(point_loss(a, b, pts, no_points) == consistency_loss(a, b));
    PointLossWeights off{1.0, 1.0, false};
    CHECK(point_loss(a, b, pts, off) == consistency_loss(a, b));

    Grid<double> good(4, 4, 1, 0.5);
    good(0, 0) = good(1, 2) = 1.0;
    good(3, 3) = 0.0;
    const auto g = PredictionMap::from_probs(good);
    CHECK(point_loss(g, g, pts) < 1e-5);

    PointLabel outside{{{4, 0}}, {}};
    CHECK(code_of([&] { (void)point_loss(a, b, outside); }) == Errc::OutOfBounds);
}

TEST_CASE("total_loss is the unweighted sum") {
    CHECK(total_loss({}).l_total == 0.0);
    const KindLoss all[] = {{SupervisionKind::Pixel, 1},
                            {SupervisionKind::Polygon, 2},
                            {SupervisionKind::Box, 3},
                            {SupervisionKind::Scribble, 4},
                            {SupervisionKind::Point, 5}};
    const auto b = total_loss(all);
    CHECK(b.l_total == 15.0);
    CHECK(b.l_box == 3.0);
    CHECK(b.component(SupervisionKind::Point) == 5.0);

    const KindLoss box_only[] = {{SupervisionKind::Box, 0.75}};
    const auto bo = total_loss(box_only);
    CHECK(bo.l_total == bo.l_box);
    CHECK(bo.l_pixel == 0.0);
    CHECK(bo.l_points == 0.0);

    const KindLoss twice[] = {{SupervisionKind::Box, 1}, {SupervisionKind::Box, 2}};
    CHECK(code_of([&] { (void)total_loss(twice); }) == Errc::InvalidConfig);
}

TEST_CASE("rotate90 of a prediction turns probabilities counterclockwise") {
    Grid<double> g(2, 2);
    g(0, 0) = 0.1, g(0, 1) = 0.2, g(1, 0) = 0.3, g(1, 1) = 0.4;  // [[a,b],[c,d]]
    const auto r = rotate90(PredictionMap::from_probs(g), 1);
    CHECK(r.prob(0, 0) == Approx(0.2));  // [[b,d],[a,c]]
    CHECK(r.prob(0, 1) == Approx(0.4));
    CHECK(r.prob(1, 0) == Approx(0.1));
    CHECK(r.prob(1, 1) == Approx(0.3));
}
