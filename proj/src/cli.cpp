#include "mixsup/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mixsup/checkpoint.hpp"
#include "mixsup/error.hpp"
#include "mixsup/gradcheck.hpp"
#include "mixsup/image_io.hpp"
#include "mixsup/metrics.hpp"
#include "mixsup/model.hpp"
#include "mixsup/rng.hpp"
#include "mixsup/trainer.hpp"

namespace fs = std::filesystem;

namespace mixsup {

namespace {

constexpr int kProgressEvery = 100;

std::vector<fs::path> list_pngs(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw Error(Errc::IoError, "cannot read directory '" + dir.string() + "'");
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text) || !f.flush()) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
}

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
    std::string kind;
    fs::path in, out;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const auto kind = parse_kind(a.kind);
    const fs::path mask_dir = fs::is_directory(a.in / "masks") ? a.in / "masks" : a.in;
    const auto masks = list_pngs(mask_dir);
    if (masks.empty()) throw Error(Errc::EmptyDataset, "no .png masks in '" + mask_dir.string() + "'");

    const fs::path target = a.out / annotation_dir(kind);
    fs::create_directories(target);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const auto& path = masks[i];
        const auto stem = path.stem().string();
        const auto seed = derive_seed(a.seed, {i, static_cast<std::uint64_t>(kind)});
        try {
            const auto mask = io::read_mask(path);
            switch (kind) {
                case SupervisionKind::Pixel: io::write_mask(target / (stem + ".png"), mask); break;
                case SupervisionKind::Polygon: io::write_mask(target / (stem + ".png"), mask_to_polygon(mask)); break;
                case SupervisionKind::Box: io::write_box(target / (stem + ".json"), mask_to_box(mask)); break;
                case SupervisionKind::Scribble:
                    io::write_scribble(target / (stem + ".png"), mask_to_scribble(mask, seed));
                    break;
                case SupervisionKind::Point:
                    io::write_points(target / (stem + ".json"),
                                     mask_to_points(mask, kDefaultPointCount, kDefaultPointCount, seed));
                    break;
            }
        } catch (const Error& e) {
            std::string msg = e.what();
            msg.erase(0, msg.find(": ") + 2);  // drop the code prefix; the rethrow adds it back
            throw Error(e.code(), path.string() + ": " + msg);
        }
    }

    std::size_t copied = 0;
    if (fs::is_directory(a.in / "images")) {
        fs::create_directories(a.out / "images");
        for (const auto& entry : fs::directory_iterator(a.in / "images")) {
            if (!entry.is_regular_file()) continue;
            fs::copy_file(entry.path(), a.out / "images" / entry.path().filename(), fs::copy_options::overwrite_existing);
            ++copied;
        }
    }
    out << "synth: wrote " << masks.size() << ' ' << to_string(kind) << " annotations to " << target.string();
    if (copied > 0) out << ", copied " << copied << " images";
    out << '\n';
    return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    fs::path config;
    std::string out;
    std::string resume;
    int iterations = 0;
    long long seed = -1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    auto cfg = load_run_config(a.config);
    if (!a.out.empty()) cfg.out_dir = a.out;
    if (a.iterations > 0) cfg.train.iterations = a.iterations;
    if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
    cfg.validate();

    TrainOptions opts;
    if (!a.resume.empty()) {
        opts.resume = load_checkpoint(a.resume);
        const fs::path prior = cfg.out_dir / "history.csv";
        if (fs::exists(prior)) {
            opts.prior_history = TrainHistory::load_csv(prior);
            auto& steps = opts.prior_history.steps;
            std::erase_if(steps, [&](const StepRecord& r) { return r.step > static_cast<int>(opts.resume->step); });
        }
    }

    const auto train_sets = build_train_sets(cfg);
    const auto val_sets = build_test_sets(cfg);
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "config.txt", format_run_config(cfg));

    TrainHistory history = opts.prior_history;
    double window = 0.0;
    int window_n = 0;
    opts.on_step = [&](const StepRecord& r) {
        history.steps.push_back(r);
        window += r.losses.l_total;
        ++window_n;
        if (r.step % kProgressEvery == 0 || r.val_dice) {
            out << "step " << r.step << "/" << cfg.train.iterations << "  loss " << fixed6(window / window_n);
            if (r.val_dice) out << "  val_dice " << fixed6(*r.val_dice);
            out << '\n' << std::flush;
            window = 0.0;
            window_n = 0;
        }
    };
    opts.on_checkpoint = [&](const Checkpoint& ck) {
        save_checkpoint(cfg.out_dir / "checkpoint.bin", ck);
        history.save_csv(cfg.out_dir / "history.csv");
    };

    const auto result = train(cfg.train, train_sets, val_sets, opts);
    out << "train: " << result.checkpoint.step << " steps";
    if (!val_sets.empty()) out << ", final val_dice " << fixed6(result.final_val_dice);
    out << ", wrote " << (cfg.out_dir / "checkpoint.bin").string() << '\n';
    return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    fs::path checkpoint;
    std::vector<std::string> tests;
    std::string config;
    int synthetic_test = 0;
    int synthetic_size = 64;
    std::uint64_t data_seed = 1;
    fs::path out;
    double threshold = kDefaultThreshold;
    std::string history;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw Error(Errc::InvalidConfig, "--threshold must lie in (0, 1)");
    RunConfig cfg;
    if (!a.config.empty()) cfg = load_run_config(a.config);
    for (const auto& t : a.tests) {
        const auto colon = t.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == t.size()) {
            throw Error(Errc::InvalidConfig, "--test expects name:dir, got '" + t + "'");
        }
        cfg.test_sets.push_back({SupervisionKind::Pixel, t.substr(0, colon), fs::path(t.substr(colon + 1))});
    }
    if (a.synthetic_test > 0) {
        cfg.synthetic_test = a.synthetic_test;
        cfg.synthetic_size = a.synthetic_size;
        cfg.data_seed = a.data_seed;
    }
    if (cfg.test_sets.empty() && cfg.synthetic_test == 0) {
        throw Error(Errc::InvalidConfig, "no test data: pass --test name:dir, --synthetic-test or a --config with test sets");
    }

    const auto ckpt = load_checkpoint(a.checkpoint);
    const Model model(ckpt.model, ckpt.parameters);
    const auto test_sets = build_test_sets(cfg);
    const auto report = evaluate(model_predictor(model), test_sets, a.threshold);

    TrainHistory history;
    if (!a.history.empty()) history = TrainHistory::load_csv(a.history);
    emit_report(report, a.out, a.history.empty() ? nullptr : &history);

    for (auto i : report_row_order(report)) {
        const auto& d = report.datasets[i];
        out << std::left << std::setw(20) << d.name << " n=" << std::setw(5) << d.count << " dice " << fixed6(d.dice)
            << "  iou " << fixed6(d.iou) << '\n';
    }
    out << std::left << std::setw(20) << "wAVG" << "         dice " << fixed6(report.wavg_dice) << "  iou "
        << fixed6(report.wavg_iou) << '\n';
    return kExitOk;
}

// --- ablate -----------------------------------------------------------------

struct AblateArgs {
    fs::path config;
    int seeds = 3;
    std::string out;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
    auto cfg = load_run_config(a.config);
    if (!a.out.empty()) cfg.out_dir = a.out;
    if (a.seeds < 1) throw Error(Errc::InvalidConfig, "--seeds must be >= 1");
    cfg.validate();
    if (cfg.test_sets.empty() && cfg.synthetic_test == 0) {
        throw Error(Errc::InvalidConfig, "ablate needs test data (test = name:path or synthetic_test)");
    }
    fs::create_directories(cfg.out_dir);

    std::ostringstream runs_csv;
    runs_csv << "arm,seed,dice,iou\n";
    const auto result = run_ablation(cfg, a.seeds, [&](const AblationRun& r) {
        out << "ablate: " << r.arm << " seed " << r.seed << "  dice " << fixed6(r.dice) << "  iou " << fixed6(r.iou)
            << '\n'
            << std::flush;
        runs_csv << r.arm << ',' << r.seed << ',' << fixed6(r.dice) << ',' << fixed6(r.iou) << '\n';
    });
    write_text(cfg.out_dir / "ablation.csv", ablation_csv(result));
    write_text(cfg.out_dir / "ablation_runs.csv", runs_csv.str());
    out << ablation_csv(result);
    return kExitOk;
}

// --- loss-check -------------------------------------------------------------

struct LossCheckArgs {
    std::uint64_t seed = 0;
    int trials = 100;
    std::string inject_fault;
};

int cmd_loss_check(const LossCheckArgs& a, std::ostream& out, std::ostream& err) {
    const auto& names = gradient_check_names();
    if (!a.inject_fault.empty() && std::find(names.begin(), names.end(), a.inject_fault) == names.end()) {
        throw Error(Errc::InvalidConfig, "--inject-fault: unknown loss '" + a.inject_fault + "'");
    }
    if (a.trials < 1) throw Error(Errc::InvalidConfig, "--trials must be >= 1");
    GradCheckOptions opts;
    opts.seed = a.seed;
    opts.trials = a.trials;
    opts.inject_fault = a.inject_fault;

    std::vector<CheckResult> all = run_gradient_checks(opts);
    for (auto&& group : {run_m2b_checks(a.seed), run_uncertainty_checks(a.seed), run_rotation_checks(a.seed)}) {
        all.insert(all.end(), group.begin(), group.end());
    }

    std::vector<std::string> failed;
    out << std::left << std::setw(13) << "suite" << std::setw(28) << "check" << std::setw(6) << "result"
        << "detail\n";
    for (const auto& r : all) {
        out << std::left << std::setw(13) << r.suite << std::setw(28) << r.name << std::setw(6)
            << (r.passed ? "pass" : "FAIL") << r.detail << '\n';
        if (!r.passed) failed.push_back(r.suite + "/" + r.name);
    }
    if (failed.empty()) {
        out << "loss-check: all " << all.size() << " checks passed\n";
        return kExitOk;
    }
    err << "loss-check: failing:";
    for (const auto& f : failed) err << ' ' << f;
    err << '\n';
    return kExitRuntime;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single value.
double stdev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

const std::vector<AblationArm>& ablation_arms() {
    static const std::vector<AblationArm> arms{
        {"base", false, false},
        {"+uncertain", true, false},
        {"+uncertain+consistency", true, true},
    };
    return arms;
}

AblationResult run_ablation(const RunConfig& config, int seeds, const std::function<void(const AblationRun&)>& on_run) {
    config.validate();
    if (seeds < 1) throw Error(Errc::InvalidConfig, "ablation needs at least one seed");
    const auto train_sets = build_train_sets(config);
    const auto test_sets = build_test_sets(config);
    if (test_sets.empty()) throw Error(Errc::InvalidConfig, "ablation needs test sets");

    AblationResult result;
    for (const auto& arm : ablation_arms()) {
        std::vector<double> dice, iou;
        for (int s = 0; s < seeds; ++s) {
            TrainConfig tc = config.train;
            tc.seed = config.train.seed + static_cast<std::uint64_t>(s);
            if (!arm.uncertainty) tc.weights.uncertainty = 0.0;
            if (!arm.consistency) tc.weights.consistency = 0.0;
            const auto trained = train(tc, train_sets, {});
            const Model model(trained.checkpoint.model, trained.checkpoint.parameters);
            const auto report = evaluate(model_predictor(model), test_sets);
            AblationRun run{arm.label, tc.seed, report.wavg_dice, report.wavg_iou};
            dice.push_back(run.dice);
            iou.push_back(run.iou);
            result.runs.push_back(run);
            if (on_run) on_run(run);
        }
        result.rows.push_back({arm, mean(dice), stdev(dice), mean(iou), stdev(iou), seeds});
    }
    return result;
}

std::string ablation_csv(const AblationResult& result) {
    std::ostringstream out;
    out << "BCE,Uncertain,Consistency,Dice,IoU,Dice_std,IoU_std,seeds\n";
    for (const auto& row : result.rows) {
        out << 1 << ',' << (row.arm.uncertainty ? 1 : 0) << ',' << (row.arm.consistency ? 1 : 0) << ','
            << fixed6(row.dice_mean) << ',' << fixed6(row.iou_mean) << ',' << fixed6(row.dice_std) << ','
            << fixed6(row.iou_std) << ',' << row.seeds << '\n';
    }
    return out.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mixed-supervision segmentation toolkit", "mixsup"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Derive weak annotations from dense masks");
    s->add_option("--kind", synth.kind, "Annotation kind")
        ->required()
        ->check(CLI::IsMember({"box", "polygon", "scribble", "point"}));
    s->add_option("--in", synth.in, "Folder with masks/ (and optionally images/), or a folder of masks")->required();
    s->add_option("--out", synth.out, "Output folder")->required();
    s->add_option("--seed", synth.seed, "Seed for scribble and point sampling");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model from a key=value config");
    t->add_option("--config", tr.config, "Config file")->required();
    t->add_option("--out", tr.out, "Output folder (overrides out_dir)");
    t->add_option("--resume", tr.resume, "Checkpoint to resume from");
    t->add_option("--iterations", tr.iterations, "Total step count (overrides config)")->check(CLI::PositiveNumber);
    t->add_option("--seed", tr.seed, "Seed (overrides config)")->check(CLI::NonNegativeNumber);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint and write report files");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    e->add_option("--test", ev.tests, "Test folder as name:dir (repeatable)");
    e->add_option("--config", ev.config, "Take test sets from a config file");
    e->add_option("--synthetic-test", ev.synthetic_test, "Number of synthetic test images")->check(CLI::NonNegativeNumber);
    e->add_option("--synthetic-size", ev.synthetic_size, "Synthetic image side");
    e->add_option("--data-seed", ev.data_seed, "Synthetic data seed");
    e->add_option("--out", ev.out, "Report folder")->required();
    e->add_option("--threshold", ev.threshold, "Binarization threshold");
    e->add_option("--history", ev.history, "history.csv for the training-curve plot");

    AblateArgs ab;
    auto* b = app.add_subcommand("ablate", "Loss ablation over several seeds");
    b->add_option("--config", ab.config, "Config file")->required();
    b->add_option("--seeds", ab.seeds, "Seeds per arm");
    b->add_option("--out", ab.out, "Output folder (overrides out_dir)");

    LossCheckArgs lc;
    auto* l = app.add_subcommand("loss-check", "Finite-difference and property checks of the losses");
    l->add_option("--seed", lc.seed, "Seed for sampled inputs");
    l->add_option("--trials", lc.trials, "Random inputs per loss");
    l->add_option("--inject-fault", lc.inject_fault, "Corrupt one loss's gradient to exercise the checker");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        return app.exit(ex, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s->parsed()) return cmd_synth(synth, out);
        if (t->parsed()) return cmd_train(tr, out);
        if (e->parsed()) return cmd_eval(ev, out);
        if (b->parsed()) return cmd_ablate(ab, out);
        if (l->parsed()) return cmd_loss_check(lc, out, err);
    } catch (const Error& ex) {
        err << "mixsup: " << ex.what() << '\n';
        return ex.code() == Errc::InvalidConfig ? kExitUsage : kExitRuntime;
    } catch (const std::exception& ex) {
        err << "mixsup: " << ex.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace mixsup
