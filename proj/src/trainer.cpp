#include "mixsup/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mixsup/error.hpp"
#include "mixsup/metrics.hpp"
#include "mixsup/rng.hpp"

namespace mixsup {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (iterations < 1) fail("iterations must be > 0");
    if (size_set.empty()) fail("size_set must not be empty");
    for (int s : size_set) {
        if (s <= 0 || s % ModelConfig::kInputSizeDivisor != 0) {
            fail("size_set entry " + std::to_string(s) + " is not a positive multiple of 16");
        }
    }
    if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    if (val_every < 0) fail("val_every must be >= 0");
    if (weights.uncertainty < 0.0 || weights.consistency < 0.0 || weights.point_bce < 0.0) {
        fail("loss weights must be >= 0");
    }
    if (poly_power <= 0.0) fail("poly_power must be > 0");
    if (grad_clip < 0.0) fail("grad_clip must be >= 0");
    model.validate();
}

double TrainConfig::learning_rate_at(int step) const {
    if (schedule == LrSchedule::Constant) return learning_rate;
    const double progress = static_cast<double>(step - 1) / iterations;
    return learning_rate * std::pow(std::max(0.0, 1.0 - progress), poly_power);
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

constexpr const char* kHistoryHeader = "step,kind,l_pixel,l_polygon,l_box,l_scribble,l_points,l_total,val_dice";

}  // namespace

std::string TrainHistory::to_csv() const {
    std::string out = std::string(kHistoryHeader) + "\n";
    for (const auto& rec : steps) {
        const auto& l = rec.losses;
        out += std::to_string(rec.step) + "," + std::string(to_string(rec.kind));
        for (double v : {l.l_pixel, l.l_polygon, l.l_box, l.l_scribble, l.l_points, l.l_total}) {
            out += "," + fmt_double(v);
        }
        out += ",";
        if (rec.val_dice) out += fmt_double(*rec.val_dice);
        out += "\n";
    }
    return out;
}

TrainHistory TrainHistory::from_csv(const std::string& text) {
    TrainHistory h;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split(line, ',').size() != 9) {
        throw Error(Errc::IoError, "history CSV lacks the expected header");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line, ',');
        if (f.size() != 9) throw Error(Errc::IoError, "history CSV line " + std::to_string(line_no) + " malformed");
        try {
            StepRecord rec;
            rec.step = std::stoi(f[0]);
            rec.kind = parse_kind(f[1]);
            rec.losses = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                          std::stod(f[5]), std::stod(f[6]), std::stod(f[7])};
            if (!f[8].empty()) rec.val_dice = std::stod(f[8]);
            h.steps.push_back(rec);
        } catch (const std::logic_error&) {
            throw Error(Errc::IoError, "history CSV line " + std::to_string(line_no) + " malformed");
        }
    }
    return h;
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
    out << to_csv();
}

TrainHistory TrainHistory::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_csv(ss.str());
}

SgdMomentum::SgdMomentum(std::size_t parameter_count, double momentum)
    : velocity_(parameter_count, 0.0f), momentum_(momentum) {}

SgdMomentum::SgdMomentum(std::vector<float> velocity, double momentum)
    : velocity_(std::move(velocity)), momentum_(momentum) {}

void SgdMomentum::step(std::span<float> parameters, std::span<const float> gradient, double learning_rate) {
    if (parameters.size() != velocity_.size() || gradient.size() != velocity_.size()) {
        throw Error(Errc::ShapeMismatch, "optimizer state does not match parameter count");
    }
    const auto mu = static_cast<float>(momentum_);
    const auto lr = static_cast<float>(learning_rate);
    for (std::size_t i = 0; i < velocity_.size(); ++i) {
        velocity_[i] = mu * velocity_[i] + gradient[i];
        parameters[i] -= lr * velocity_[i];
    }
}

ImageTensor rotate_for_consistency(const ImageTensor& image) { return rotate90(image, 1); }

PredictionMap rotate_back(const PredictionMap& rotated_prediction) { return rotate90(rotated_prediction, 3); }

double sample_loss(const Model& model, const LabeledSample& sample, const LossWeights& weights, double scale,
                   std::span<float> grad_params) {
    const auto pass = model.forward(sample.image);
    const auto& pred = pass.prediction;
    std::vector<double> grad(pred.size(), 0.0);
    double value = 0.0;
    switch (sample.kind) {
        case SupervisionKind::Pixel:
        case SupervisionKind::Polygon:
            value = dense_loss(pred, std::get<DenseMask>(sample.payload), grad);
            break;
        case SupervisionKind::Box:
            value = box_loss(pred, std::get<BoxLabel>(sample.payload), grad);
            break;
        case SupervisionKind::Scribble:
            value = scribble_loss(pred, std::get<ScribbleLabel>(sample.payload), {weights.uncertainty}, grad);
            break;
        case SupervisionKind::Point: {
            const PointLossWeights pw{weights.consistency, weights.point_bce, weights.use_point_bce};
            const auto& points = std::get<PointLabel>(sample.payload);
            if (weights.consistency == 0.0) {
                value = point_loss(pred, pred, points, pw, grad);
                break;
            }
            const auto rotated_pass = model.forward(rotate_for_consistency(sample.image));
            const auto back = rotate_back(rotated_pass.prediction);
            std::vector<double> grad_back(back.size(), 0.0);
            value = point_loss(pred, back, points, pw, grad, grad_back);
            // Rotation is a permutation: gradient in the rotated frame is the
            // back-frame gradient turned the same way as the input.
            Grid<double> gb(back.height(), back.width());
            std::copy(grad_back.begin(), grad_back.end(), gb.storage().begin());
            const auto g_rot = rotate90(gb, 1);
            std::vector<double> scaled(g_rot.values().begin(), g_rot.values().end());
            for (auto& g : scaled) g *= scale;
            model.backward(rotated_pass, scaled, grad_params);
            break;
        }
    }
    for (auto& g : grad) g *= scale;
    model.backward(pass, grad, grad_params);
    return value;
}

LossBreakdown train_step(Model& model, std::span<const LabeledSample* const> batch, SupervisionKind kind,
                         SgdMomentum& optimizer, double learning_rate, const LossWeights& weights, double grad_clip,
                         int step_index) {
    if (batch.empty()) throw Error(Errc::EmptyDataset, "empty batch");
    std::vector<float> grad(model.parameter_count(), 0.0f);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto* sample : batch) {
        if (sample->kind != kind) {
            throw Error(Errc::InvalidConfig, "batch mixes kinds: expected " + std::string(to_string(kind)) +
                                                 ", got " + std::string(to_string(sample->kind)));
        }
        total += sample_loss(model, *sample, weights, scale, grad);
    }
    const double mean = total * scale;
    bool finite = std::isfinite(mean);
    for (float g : grad) finite = finite && std::isfinite(g);
    if (!finite) {
        throw Error(Errc::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(step_index) +
                                             " (kind " + std::string(to_string(kind)) + ")");
    }
    if (grad_clip > 0.0) {
        double norm2 = 0.0;
        for (float g : grad) norm2 += static_cast<double>(g) * g;
        const double norm = std::sqrt(norm2);
        if (norm > grad_clip) {
            const auto f = static_cast<float>(grad_clip / norm);
            for (auto& g : grad) g *= f;
        }
    }
    optimizer.step(model.parameters(), grad, learning_rate);
    const KindLoss term{kind, mean};
    return total_loss(std::span<const KindLoss>(&term, 1));
}

TrainResult train(const TrainConfig& config, std::span<const Dataset> train_sets, std::span<const Dataset> val_sets,
                  const TrainOptions& options) {
    config.validate();
    for (const auto& ds : train_sets) {
        for (const auto& s : ds.samples) s.validate();
    }

    int start = 0;
    Model model = [&] {
        if (!options.resume) return Model(config.model, derive_seed(config.seed, {0x696e6974ULL}));
        if (!(options.resume->model == config.model)) {
            throw Error(Errc::BadCheckpoint, "checkpoint model config differs from the training config");
        }
        return Model(options.resume->model, options.resume->parameters);
    }();
    SgdMomentum optimizer(model.parameter_count(), config.momentum);
    if (options.resume) {
        start = static_cast<int>(options.resume->step);
        if (!options.resume->velocity.empty()) optimizer = SgdMomentum(options.resume->velocity, config.momentum);
    }

    MixedSampler sampler(train_sets, config.batch_size, derive_seed(config.seed, {0x73616d70ULL}), config.sampling);
    sampler.skip(static_cast<std::size_t>(start));

    TrainResult result;
    result.history = options.prior_history;
    const Predictor predictor = model_predictor(model);
    auto validate_now = [&]() -> std::optional<double> {
        if (val_sets.empty()) return std::nullopt;
        return evaluate(predictor, val_sets).wavg_dice;
    };
    auto snapshot = [&](int step) {
        return Checkpoint{config.model, static_cast<std::uint64_t>(step),
                          {model.parameters().begin(), model.parameters().end()}, optimizer.velocity()};
    };

    for (int step = start + 1; step <= config.iterations; ++step) {
        const auto batch = sampler.next();
        std::mt19937_64 resize_rng(derive_seed(config.seed, {0x72657369ULL, static_cast<std::uint64_t>(step)}));
        std::vector<LabeledSample> resized;
        resized.reserve(batch.samples.size());
        for (const auto* s : batch.samples) resized.push_back(random_resize(*s, config.size_set, resize_rng));
        std::vector<const LabeledSample*> ptrs;
        for (const auto& s : resized) ptrs.push_back(&s);

        StepRecord rec;
        rec.step = step;
        rec.kind = batch.kind;
        rec.losses = train_step(model, ptrs, batch.kind, optimizer, config.learning_rate_at(step), config.weights,
                                config.grad_clip, step);
        const bool last = step == config.iterations;
        if (last || (config.val_every > 0 && step % config.val_every == 0)) rec.val_dice = validate_now();
        if (last && rec.val_dice) result.final_val_dice = *rec.val_dice;
        result.history.steps.push_back(rec);
        if (options.on_step) options.on_step(rec);
        if (!last && config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && options.on_checkpoint) {
            options.on_checkpoint(snapshot(step));
        }
    }
    if (start >= config.iterations) {
        if (auto d = validate_now()) result.final_val_dice = *d;
    }
    result.checkpoint = snapshot(std::max(start, config.iterations));
    if (options.on_checkpoint) options.on_checkpoint(result.checkpoint);
    return result;
}

}  // namespace mixsup
