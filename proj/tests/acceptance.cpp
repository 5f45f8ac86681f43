// Acceptance gate: one PASS/FAIL line per criterion. Exits 0 when the set of
// failing criteria equals the --known-red list, so a documented red criterion
// stays visible without hiding a new regression (or an unexpected fix).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "mixsup/cli.hpp"
#include "mixsup/config.hpp"
#include "mixsup/gradcheck.hpp"
#include "mixsup/metrics.hpp"
#include "mixsup/trainer.hpp"
#include "published_rows.hpp"

using namespace mixsup;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

Outcome suite_outcome(const std::vector<CheckResult>& results) {
    Outcome o{true, ""};
    for (const auto& r : results) {
        if (!r.passed) {
            o.passed = false;
            o.detail += (o.detail.empty() ? "failing: " : ", ") + r.name + " (" + r.detail + ")";
        }
    }
    if (o.passed) o.detail = std::to_string(results.size()) + (results.size() == 1 ? " check" : " checks");
    return o;
}

Outcome with_budget(Outcome o, double seconds, double budget) {
    o.detail += fmt("; %.2f s of %.0f s", seconds, budget);
    if (seconds >= budget) o.passed = false;
    return o;
}

// Trains one run of `cfg` and scores it on the test sets.
double train_and_score(const RunConfig& cfg, const std::vector<Dataset>& train_sets,
                       const std::vector<Dataset>& test_sets) {
    const auto result = train(cfg.train, train_sets, {});
    const Model model(result.checkpoint.model, result.checkpoint.parameters);
    return evaluate(model_predictor(model), test_sets).wavg_dice;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance gate"};
    std::string fixture = MIXSUP_SOURCE_DIR "/configs/desk.cfg";
    std::vector<int> known_red;
    int seeds = 3;
    app.add_option("--fixture", fixture, "Desk-scale training config");
    app.add_option("--known-red", known_red, "Criteria expected to fail");
    app.add_option("--seeds", seeds, "Seeds for the training criteria");
    CLI11_PARSE(app, argc, argv);

    using Clock = std::chrono::steady_clock;
    auto elapsed = [](Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); };

    std::set<int> failed;
    auto report = [&](int id, const std::string& title, const std::function<Outcome()>& body) {
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.passed) failed.insert(id);
        std::cout << "criterion " << id << ' ' << (o.passed ? "PASS" : "FAIL") << "  " << title << ": " << o.detail
                  << std::endl;
    };

    report(1, "wAVG recomputed within 0.05 pp for all published rows", [&] {
        const auto t0 = Clock::now();
        double worst = 0.0;
        std::string worst_at, misses;
        for (const auto& row : published::kRows) {
            std::vector<WeightedValue> d, j;
            for (std::size_t i = 0; i < 5; ++i) {
                d.push_back({published::kCounts[i], row.dice[i]});
                j.push_back({published::kCounts[i], row.iou[i]});
            }
            const double ed = std::abs(weighted_average(d) - row.wavg_dice);
            const double ej = std::abs(weighted_average(j) - row.wavg_iou);
            for (auto [err, what, got, printed] :
                 {std::tuple{ed, "Dice", weighted_average(d), row.wavg_dice},
                  std::tuple{ej, "IoU", weighted_average(j), row.wavg_iou}}) {
                if (err > worst) worst = err, worst_at = std::string(row.method) + " " + what;
                if (err > 0.05 + 1e-12) {
                    misses += fmt("%s%s %s %.3f vs %.1f", misses.empty() ? " " : ", ", std::string(row.method).c_str(),
                                  what, got, printed);
                }
            }
        }
        Outcome o{misses.empty(), fmt("worst %.3f pp at %s", worst, worst_at.c_str())};
        if (!misses.empty()) o.detail += "; over tolerance:" + misses;
        return with_budget(o, elapsed(t0), 1.0);
    });

    report(2, "uncertainty loss value, symmetry, monotonicity", [&] {
        const auto t0 = Clock::now();
        return with_budget(suite_outcome(run_uncertainty_checks(0)), elapsed(t0), 1.0);
    });

    report(3, "analytic vs central-difference gradients, 100 inputs per loss", [&] {
        const auto t0 = Clock::now();
        const auto results = run_gradient_checks({});
        auto o = suite_outcome(results);
        double worst = 0.0;
        for (const auto& r : results) worst = std::max(worst, r.worst);
        o.detail += fmt(", worst relative error %.2e", worst);
        return with_budget(o, elapsed(t0), 60.0);
    });

    report(4, "mask-to-box properties and the 2x2 example", [&] {
        const auto t0 = Clock::now();
        return with_budget(suite_outcome(run_m2b_checks(0)), elapsed(t0), 10.0);
    });

    report(5, "rotation consistency is exactly zero for an identity predictor", [&] {
        const auto t0 = Clock::now();
        return with_budget(suite_outcome(run_rotation_checks(0, 100)), elapsed(t0), 5.0);
    });

    // The training criteria share one fixture and one data draw.
    RunConfig base;
    std::vector<Dataset> train_sets, test_sets;
    AblationResult ablation;
    std::string setup_error;
    double ablation_seconds = 0.0;
    std::vector<double> mixed_seconds;
    double c6_seconds = 0.0;
    try {
        base = load_run_config(fixture);
        base.validate();
        train_sets = build_train_sets(base);
        test_sets = build_test_sets(base);
        const auto t0 = Clock::now();
        auto last = Clock::now();
        ablation = run_ablation(base, seeds, [&](const AblationRun& r) {
            const double s = elapsed(last);
            last = Clock::now();
            if (r.arm == ablation_arms().back().label) mixed_seconds.push_back(s);
            std::cout << "  ablation " << r.arm << " seed " << r.seed << fmt(": dice %.4f (%.0f s)", r.dice, s)
                      << std::endl;
        });
        ablation_seconds = elapsed(t0);
    } catch (const std::exception& e) {
        setup_error = e.what();
    }
    auto require_setup = [&] {
        if (!setup_error.empty()) throw std::runtime_error("fixture: " + setup_error);
    };

    report(6, "desk-scale mixed training vs box-only", [&] {
        require_setup();
        // Mixed supervision is the full-loss ablation arm.
        std::vector<double> mixed;
        for (const auto& r : ablation.runs) {
            if (r.arm == ablation_arms().back().label) mixed.push_back(r.dice);
        }
        auto box_cfg = base;
        box_cfg.synthetic_kinds = {SupervisionKind::Box};
        const auto box_sets = build_train_sets(box_cfg);
        std::vector<double> box;
        double seconds = 0.0;
        for (double s : mixed_seconds) seconds += s;
        for (int s = 0; s < seeds; ++s) {
            const auto t0 = Clock::now();
            box_cfg.train.seed = base.train.seed + static_cast<std::uint64_t>(s);
            box.push_back(train_and_score(box_cfg, box_sets, test_sets));
            seconds += elapsed(t0);
            std::cout << "  box-only seed " << box_cfg.train.seed << fmt(": dice %.4f", box.back()) << std::endl;
        }
        c6_seconds = seconds;
        const double m = mean(mixed), b = mean(box);
        Outcome o{m >= 0.80 && m >= b - 0.02,
                  fmt("mixed %.4f (min seed %.4f), box-only %.4f, margin %+.2f pp", m,
                      *std::min_element(mixed.begin(), mixed.end()), b, 100.0 * (m - b))};
        // Box-only can settle on all-background for some seeds; show the
        // comparison against the seeds that trained as well.
        std::vector<double> trained;
        for (double d : box)
            if (d >= 0.5) trained.push_back(d);
        if (trained.size() < box.size()) {
            o.detail += fmt("; box-only stuck at all-background on %zu of %zu seeds", box.size() - trained.size(),
                            box.size());
            if (!trained.empty())
                o.detail += fmt(", %.4f on the rest (mixed %+.2f pp)", mean(trained), 100.0 * (m - mean(trained)));
        }
        return with_budget(o, seconds, 15 * 60.0);
    });

    report(7, "ablation non-degradation over seeds", [&] {
        require_setup();
        const auto& rows = ablation.rows;
        const double b = rows[0].dice_mean, u = rows[1].dice_mean, uc = rows[2].dice_mean;
        Outcome o{u >= b - 0.005 && uc >= u - 0.005,
                  fmt("base %.4f, +U %.4f (%+.2f pp), +U+C %.4f (%+.2f pp)", b, u, 100.0 * (u - b), uc,
                      100.0 * (uc - u))};
        return with_budget(o, ablation_seconds, 45 * 60.0);
    });

    report(8, "per-step total equals the component sum; round-robin 20 of 100 per kind", [&] {
        require_setup();
        const auto t0 = Clock::now();
        auto cfg = base;
        cfg.train.iterations = 100;
        const auto result = train(cfg.train, train_sets, {});
        double worst = 0.0;
        std::array<int, 5> per_kind{};
        for (const auto& rec : result.history.steps) {
            const double sum = rec.losses.component_sum();
            worst = std::max(worst, std::abs(rec.losses.l_total - sum) / std::max(std::abs(sum), 1e-300));
            ++per_kind[static_cast<std::size_t>(rec.kind)];
        }
        const bool routed = std::all_of(per_kind.begin(), per_kind.end(), [](int n) { return n == 20; });
        Outcome o{result.history.steps.size() == 100 && worst <= 1e-9 && routed,
                  fmt("worst relative gap %.1e, steps per kind %d/%d/%d/%d/%d", worst, per_kind[0], per_kind[1],
                      per_kind[2], per_kind[3], per_kind[4])};
        return with_budget(o, elapsed(t0), 120.0);
    });

    report(9, "two identical runs agree", [&] {
        require_setup();
        const auto t0 = Clock::now();
        const auto a = train(base.train, train_sets, test_sets);
        const auto b = train(base.train, train_sets, test_sets);
        const double gap = std::abs(a.final_val_dice - b.final_val_dice);
        const bool same_csv = a.history.to_csv() == b.history.to_csv();
        Outcome o{gap < 1e-6 && same_csv,
                  fmt("val dice %.6f vs %.6f, history CSV %s", a.final_val_dice, b.final_val_dice,
                      same_csv ? "byte-identical" : "differs")};
        return with_budget(o, elapsed(t0), c6_seconds > 0.0 ? 2.0 * c6_seconds : 2.0 * 15 * 60.0);
    });

    const std::set<int> expected(known_red.begin(), known_red.end());
    std::cout << "summary: " << 9 - failed.size() << "/9 pass";
    if (!failed.empty()) {
        std::cout << "; failing:";
        for (int id : failed) std::cout << ' ' << id;
    }
    std::cout << (failed == expected ? "; matches the known-red list" : "; DOES NOT match the known-red list")
              << std::endl;
    return failed == expected ? 0 : 1;
}
