#include "mixsup/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>

#include "mixsup/losses.hpp"
#include "mixsup/rng.hpp"
#include "mixsup/trainer.hpp"

namespace mixsup {

namespace {

// Two logit maps in, scalar out; gradients are added into ga and gb (either
// may be empty when the loss has one input).
using LossFn = std::function<double(const PredictionMap&, const PredictionMap&, std::span<double>, std::span<double>)>;

struct LossCase {
    std::string name;
    bool two_inputs = false;
    LossFn fn;
};

// Distinct logits spaced 6/n apart over [-3, 3], shuffled, plus jitter far
// smaller than the spacing. Zero is never within half a spacing, which keeps
// the uncertainty kink (logit 0) and every max/min tie out of reach.
Grid<double> spaced_logits(int size, std::mt19937_64& rng) {
    const int n = size * size;
    Grid<double> g(size, size);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double spacing = 6.0 / n;
    std::uniform_real_distribution<double> jitter(-0.1 * spacing, 0.1 * spacing);
    for (int i = 0; i < n; ++i) {
        g.values()[static_cast<std::size_t>(i)] = -3.0 + spacing * (order[static_cast<std::size_t>(i)] + 0.5) + jitter(rng);
    }
    return g;
}

DenseMask random_mask(int size, std::mt19937_64& rng) {
    DenseMask m(size, size);
    std::bernoulli_distribution coin(0.4);
    for (auto& v : m.values()) v = coin(rng) ? 1 : 0;
    return m;
}

BoxLabel random_box(int h, int w, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> rows(0, h - 1), cols(0, w - 1);
    int r0 = rows(rng), r1 = rows(rng), c0 = cols(rng), c1 = cols(rng);
    return {std::min(r0, r1), std::min(c0, c1), std::max(r0, r1), std::max(c0, c1)};
}

ScribbleLabel random_scribble(int size, std::mt19937_64& rng) {
    ScribbleLabel s{Grid<ScribbleValue>(size, size, 1, ScribbleValue::Unlabeled)};
    std::uniform_int_distribution<int> pick(0, 9);
    for (auto& v : s.grid.values()) {
        const int r = pick(rng);
        v = r == 0 ? ScribbleValue::Foreground : r == 1 ? ScribbleValue::Background : ScribbleValue::Unlabeled;
    }
    s.grid(0, 0) = ScribbleValue::Foreground;
    return s;
}

PointLabel random_points(int size, std::mt19937_64& rng) {
    std::vector<int> cells(static_cast<std::size_t>(size * size));
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    PointLabel p;
    for (int i = 0; i < 10; ++i) {
        PixelCoord c{cells[static_cast<std::size_t>(i)] / size, cells[static_cast<std::size_t>(i)] % size};
        (i < 5 ? p.fg_points : p.bg_points).push_back(c);
    }
    return p;
}

std::vector<LossCase> make_cases(int size, std::mt19937_64& rng) {
    auto mask = random_mask(size, rng);
    auto box = random_box(size, size, rng);
    auto scribble = random_scribble(size, rng);
    auto points = random_points(size, rng);
    return {
        {"bce", false, [mask](auto& a, auto&, auto ga, auto) { return bce_loss(a, mask, ga); }},
        {"dice", false, [mask](auto& a, auto&, auto ga, auto) { return dice_loss(a, mask, ga); }},
        {"dense", false, [mask](auto& a, auto&, auto ga, auto) { return dense_loss(a, mask, ga); }},
        {"box", false, [box](auto& a, auto&, auto ga, auto) { return box_loss(a, box, ga); }},
        {"scribble", false, [scribble](auto& a, auto&, auto ga, auto) { return scribble_loss(a, scribble, {}, ga); }},
        {"point", true, [points](auto& a, auto& b, auto ga, auto gb) { return point_loss(a, b, points, {}, ga, gb); }},
        {"consistency", true, [](auto& a, auto& b, auto ga, auto gb) { return consistency_loss(a, b, ga, gb); }},
    };
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
// logits of one input.
double compare(const LossCase& c, const Grid<double>& la, const Grid<double>& lb, int which,
               const std::vector<double>& analytic, double step) {
    constexpr double kFloor = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        auto eval = [&](double delta) {
            Grid<double> a = la, b = lb;
            (which == 0 ? a : b).values()[i] += delta;
            return c.fn(PredictionMap::from_logits(std::move(a)), PredictionMap::from_logits(std::move(b)), {}, {});
        };
        const double numeric = (eval(step) - eval(-step)) / (2.0 * step);
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kFloor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    return worst;
}

std::string fmt(const char* pattern, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

}  // namespace

const std::vector<std::string>& gradient_check_names() {
    static const std::vector<std::string> names{"bce", "dice", "dense", "box", "scribble", "point", "consistency"};
    return names;
}

std::vector<CheckResult> run_gradient_checks(const GradCheckOptions& options) {
    const int n = options.size;
    const std::size_t count = gradient_check_names().size();
    std::vector<double> worst(count, 0.0);
    for (int trial = 0; trial < options.trials; ++trial) {
        std::mt19937_64 rng(derive_seed(options.seed, {0x67726164ULL, static_cast<std::uint64_t>(trial)}));
        const auto cases = make_cases(n, rng);
        const auto la = spaced_logits(n, rng);
        const auto lb = spaced_logits(n, rng);
        for (std::size_t k = 0; k < cases.size(); ++k) {
            const auto& c = cases[k];
            std::vector<double> ga(la.size(), 0.0), gb(lb.size(), 0.0);
            c.fn(PredictionMap::from_logits(la), PredictionMap::from_logits(lb), ga,
                 c.two_inputs ? std::span<double>(gb) : std::span<double>{});
            if (c.name == options.inject_fault) {
                for (auto& g : ga) g *= 1.05;
            }
            worst[k] = std::max(worst[k], compare(c, la, lb, 0, ga, options.step));
            if (c.two_inputs) worst[k] = std::max(worst[k], compare(c, la, lb, 1, gb, options.step));
        }
    }
    std::vector<CheckResult> out;
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back({"gradient", gradient_check_names()[k], worst[k] <= options.tolerance, worst[k],
                       fmt("max rel err %.3g", worst[k])});
    }
    return out;
}

std::vector<CheckResult> run_m2b_checks(std::uint64_t seed) {
    std::vector<CheckResult> out;
    std::mt19937_64 rng(derive_seed(seed, {0x6d3262ULL}));
    std::uniform_real_distribution<double> unit(0.01, 0.99);
    std::uniform_int_distribution<int> side(1, 24);

    auto random_probs = [&](int h, int w) {
        Grid<double> p(h, w);
        for (auto& v : p.values()) v = unit(rng);
        return PredictionMap::from_probs(p);
    };

    double idem = 0.0, dominance = 0.0, perm = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const int h = side(rng), w = side(rng);
        const auto p = random_probs(h, w);
        const auto b = m2b(p);
        const auto bb = m2b(b);
        for (std::size_t i = 0; i < p.size(); ++i) {
            idem = std::max(idem, std::abs(bb.probs().values()[i] - b.probs().values()[i]));
            dominance = std::max(dominance, p.probs().values()[i] - b.probs().values()[i]);
        }
        // Permute rows and columns independently; m2b must commute.
        std::vector<int> rp(static_cast<std::size_t>(h)), cp(static_cast<std::size_t>(w));
        std::iota(rp.begin(), rp.end(), 0);
        std::iota(cp.begin(), cp.end(), 0);
        std::shuffle(rp.begin(), rp.end(), rng);
        std::shuffle(cp.begin(), cp.end(), rng);
        Grid<double> q(h, w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) q(r, c) = p.logits()(rp[static_cast<std::size_t>(r)], cp[static_cast<std::size_t>(c)]);
        const auto bq = m2b(PredictionMap::from_logits(q));
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                perm = std::max(perm, std::abs(bq.logits()(r, c) -
                                               b.logits()(rp[static_cast<std::size_t>(r)], cp[static_cast<std::size_t>(c)])));
    }
    out.push_back({"m2b", "idempotence", idem <= 1e-12, idem, fmt("max |m2b(m2b(P)) - m2b(P)| = %.3g", idem)});
    out.push_back({"m2b", "dominance", dominance <= 0.0, dominance, fmt("max P - B = %.3g", dominance)});
    out.push_back({"m2b", "permutation", perm == 0.0, perm, fmt("max mismatch %.3g", perm)});

    int identity_failures = 0;
    for (int t = 0; t < 1000; ++t) {
        const int h = side(rng), w = side(rng);
        std::uniform_int_distribution<int> rows(0, h - 1), cols(0, w - 1);
        const int r0 = rows(rng), r1 = rows(rng), c0 = cols(rng), c1 = cols(rng);
        const BoxLabel box{std::min(r0, r1), std::min(c0, c1), std::max(r0, r1), std::max(c0, c1)};
        const auto mask = rasterize_box(box, h, w);
        Grid<double> probs(h, w);
        for (std::size_t i = 0; i < mask.size(); ++i) probs.values()[i] = mask.values()[i];
        const auto p = PredictionMap::from_probs(probs);
        if (m2b(p).probs() != p.probs()) ++identity_failures;
    }
    out.push_back({"m2b", "rectangle identity", identity_failures == 0, static_cast<double>(identity_failures),
                   fmt("%.0f of 1000 rectangles changed", identity_failures)});

    Grid<double> hand(2, 2);
    hand(0, 0) = 0.2, hand(0, 1) = 0.8, hand(1, 0) = 0.6, hand(1, 1) = 0.1;
    const auto hb = m2b(PredictionMap::from_probs(hand));
    const double expect[4] = {0.6, 0.8, 0.6, 0.6};
    double hand_err = 0.0;
    for (std::size_t i = 0; i < 4; ++i) hand_err = std::max(hand_err, std::abs(hb.probs().values()[i] - expect[i]));
    out.push_back({"m2b", "2x2 example", hand_err <= 1e-12, hand_err, fmt("max err %.3g", hand_err)});
    return out;
}

std::vector<CheckResult> run_uncertainty_checks(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const double at_half = std::abs(uncertainty_loss(0.5) - std::numbers::ln2);
    out.push_back({"uncertainty", "value at 0.5", at_half <= 1e-9, at_half, fmt("|L(0.5) - ln 2| = %.3g", at_half)});

    std::mt19937_64 rng(derive_seed(seed, {0x756e63ULL}));
    std::uniform_real_distribution<double> unit(kProbEpsilon, 1.0 - kProbEpsilon);
    double asym = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double p = unit(rng);
        asym = std::max(asym, std::abs(uncertainty_loss(p) - uncertainty_loss(1.0 - p)));
    }
    // 1 - p is rounded, so symmetry holds to a few ulps of the log, not bit-exactly.
    out.push_back({"uncertainty", "symmetry", asym <= 1e-9, asym, fmt("max |L(p) - L(1-p)| = %.3g", asym)});

    constexpr int kGrid = 10000;
    int violations = 0;
    double prev = uncertainty_loss(0.5);
    for (int i = 1; i <= kGrid; ++i) {
        const double p = 0.5 + (0.5 - kProbEpsilon) * i / kGrid;
        const double v = uncertainty_loss(p);
        if (!(v < prev)) ++violations;
        prev = v;
    }
    out.push_back({"uncertainty", "monotone on (0.5, 1-eps]", violations == 0, static_cast<double>(violations),
                   fmt("%.0f non-decreasing steps", violations)});
    return out;
}

std::vector<CheckResult> run_rotation_checks(std::uint64_t seed, int trials) {
    std::mt19937_64 rng(derive_seed(seed, {0x726f74ULL}));
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::uniform_int_distribution<int> side(1, 32);
    // Identity stub: the prediction is the (single-channel) input itself.
    auto stub = [](const ImageTensor& image) {
        Grid<double> p(image.height(), image.width());
        std::copy(image.values().begin(), image.values().end(), p.values().begin());
        return PredictionMap::from_probs(p);
    };
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const int n = side(rng);
        ImageTensor image(n, n);
        for (auto& v : image.values()) v = unit(rng);
        const auto pred = stub(image);
        const auto back = rotate_back(stub(rotate_for_consistency(image)));
        worst = std::max(worst, consistency_loss(pred, back));
    }
    return {{"rotation", "identity-stub consistency", worst == 0.0, worst, fmt("max loss %.3g", worst)}};
}

}  // namespace mixsup
