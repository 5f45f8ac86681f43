#include "mixsup/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mixsup/error.hpp"

namespace mixsup {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

bool in_clamp_range(double p) { return p > kProbEpsilon && p < 1.0 - kProbEpsilon; }

void require_shape(const PredictionMap& pred, int height, int width, const char* what) {
    if (pred.height() != height || pred.width() != width) {
        throw Error(Errc::ShapeMismatch, std::string(what) + ": prediction " +
                                             std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                                             " vs label " + std::to_string(height) + "x" + std::to_string(width));
    }
}

void require_grad_size(std::span<double> grad, const PredictionMap& pred) {
    if (!grad.empty() && grad.size() != pred.size()) {
        throw Error(Errc::ShapeMismatch, "gradient buffer size does not match prediction");
    }
}

// -[t log p + (1-t) log(1-p)] and its derivative in p, on the clamped p.
double bce_term(double p, double t) {
    return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}
double bce_term_derivative(double p, double t) { return -t / p + (1.0 - t) / (1.0 - p); }

}  // namespace

PredictionMap PredictionMap::from_logits(Grid<double> logits) {
    PredictionMap out;
    out.probs_ = Grid<double>(logits.height(), logits.width());
    for (std::size_t i = 0; i < logits.size(); ++i) out.probs_[i] = clamp_prob(sigmoid(logits[i]));
    out.logits_ = std::move(logits);
    return out;
}

PredictionMap PredictionMap::from_probs(const Grid<double>& probs) {
    Grid<double> logits(probs.height(), probs.width());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs[i]);
        logits[i] = std::log(p) - std::log1p(-p);
    }
    return from_logits(std::move(logits));
}

PredictionMap PredictionMap::constant(int height, int width, double prob) {
    return from_probs(Grid<double>(height, width, 1, prob));
}

double PredictionMap::squash_derivative(std::size_t i) const noexcept {
    const double p = sigmoid(logits_[i]);
    return in_clamp_range(p) ? p * (1.0 - p) : 0.0;
}

PredictionMap rotate90(const PredictionMap& pred, int quarter_turns) {
    return PredictionMap::from_logits(rotate90(pred.logits(), quarter_turns));
}

double bce_loss(const PredictionMap& pred, const DenseMask& target, std::span<double> grad_logits) {
    require_shape(pred, target.height(), target.width(), "bce_loss");
    require_grad_size(grad_logits, pred);
    const std::size_t n = pred.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = pred.probs()[i];
        const double t = target[i] ? 1.0 : 0.0;
        sum += bce_term(p, t);
        if (!grad_logits.empty()) {
            grad_logits[i] += inv_n * bce_term_derivative(p, t) * pred.squash_derivative(i);
        }
    }
    return sum * inv_n;
}

double dice_loss(const PredictionMap& pred, const DenseMask& target, std::span<double> grad_logits) {
    require_shape(pred, target.height(), target.width(), "dice_loss");
    require_grad_size(grad_logits, pred);
    double intersection = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred.probs()[i];
        const double t = target[i] ? 1.0 : 0.0;
        intersection += p * t;
        total += p + t;
    }
    const double num = 2.0 * intersection + kDiceSmoothing;
    const double den = total + kDiceSmoothing;
    if (!grad_logits.empty()) {
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double t = target[i] ? 1.0 : 0.0;
            const double dp = -(2.0 * t * den - num) / (den * den);
            grad_logits[i] += dp * pred.squash_derivative(i);
        }
    }
    return 1.0 - num / den;
}

double dense_loss(const PredictionMap& pred, const DenseMask& target, std::span<double> grad_logits) {
    return bce_loss(pred, target, grad_logits) + dice_loss(pred, target, grad_logits);
}

BoxProjection m2b_with_source(const PredictionMap& pred) {
    const int h = pred.height();
    const int w = pred.width();
    const auto& z = pred.logits();
    std::vector<std::size_t> row_arg(static_cast<std::size_t>(h));
    std::vector<std::size_t> col_arg(static_cast<std::size_t>(w));
    for (int r = 0; r < h; ++r) {
        int best = 0;
        for (int c = 1; c < w; ++c) {
            if (z(r, c) > z(r, best)) best = c;
        }
        row_arg[static_cast<std::size_t>(r)] = static_cast<std::size_t>(r) * w + best;
    }
    for (int c = 0; c < w; ++c) {
        int best = 0;
        for (int r = 1; r < h; ++r) {
            if (z(r, c) > z(best, c)) best = r;
        }
        col_arg[static_cast<std::size_t>(c)] = static_cast<std::size_t>(best) * w + c;
    }
    Grid<double> out(h, w);
    std::vector<std::size_t> source(pred.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto ri = row_arg[static_cast<std::size_t>(r)];
            const auto ci = col_arg[static_cast<std::size_t>(c)];
            const auto pick = z[ci] < z[ri] ? ci : ri;
            out(r, c) = z[pick];
            source[static_cast<std::size_t>(r) * w + c] = pick;
        }
    }
    return {PredictionMap::from_logits(std::move(out)), std::move(source)};
}

PredictionMap m2b(const PredictionMap& pred) { return m2b_with_source(pred).map; }

double box_loss(const PredictionMap& pred, const BoxLabel& box, std::span<double> grad_logits) {
    require_grad_size(grad_logits, pred);
    const auto target = rasterize_box(box, pred.height(), pred.width());
    const auto projected = m2b_with_source(pred);
    if (grad_logits.empty()) return dense_loss(projected.map, target);
    std::vector<double> grad_box(pred.size(), 0.0);
    const double value = dense_loss(projected.map, target, grad_box);
    for (std::size_t i = 0; i < grad_box.size(); ++i) grad_logits[projected.source[i]] += grad_box[i];
    return value;
}

double uncertainty_loss(double p) {
    const double q = clamp_prob(p);
    return std::min(-std::log(q), -std::log(1.0 - q));
}

double uncertainty_loss_derivative(double p) {
    const double q = clamp_prob(p);
    if (q > 0.5) return -1.0 / q;
    if (q < 0.5) return 1.0 / (1.0 - q);
    return 0.0;
}

double scribble_loss(const PredictionMap& pred, const ScribbleLabel& scribble,
                     const ScribbleLossWeights& weights, std::span<double> grad_logits) {
    require_shape(pred, scribble.height(), scribble.width(), "scribble_loss");
    require_grad_size(grad_logits, pred);
    std::size_t labeled = 0;
    for (auto v : scribble.grid.values()) labeled += (v != ScribbleValue::Unlabeled);
    if (labeled == 0) throw Error(Errc::NoLabeledPixels, "scribble has no labeled pixel");
    const std::size_t unlabeled = pred.size() - labeled;
    const double inv_labeled = 1.0 / static_cast<double>(labeled);
    const double inv_unlabeled = unlabeled > 0 ? 1.0 / static_cast<double>(unlabeled) : 0.0;

    double ce = 0.0;
    double uncertain = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred.probs()[i];
        const auto v = scribble.grid[i];
        double dp = 0.0;
        if (v == ScribbleValue::Unlabeled) {
            uncertain += uncertainty_loss(p);
            dp = weights.uncertainty * inv_unlabeled * uncertainty_loss_derivative(p);
        } else {
            const double t = v == ScribbleValue::Foreground ? 1.0 : 0.0;
            ce += bce_term(p, t);
            dp = inv_labeled * bce_term_derivative(p, t);
        }
        if (!grad_logits.empty()) grad_logits[i] += dp * pred.squash_derivative(i);
    }
    return ce * inv_labeled + weights.uncertainty * uncertain * inv_unlabeled;
}

double consistency_loss(const PredictionMap& a, const PredictionMap& b, std::span<double> grad_a,
                        std::span<double> grad_b) {
    require_shape(a, b.height(), b.width(), "consistency_loss");
    require_grad_size(grad_a, a);
    require_grad_size(grad_b, b);
    const double inv_n = 1.0 / static_cast<double>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.probs()[i] - b.probs()[i];
        sum += d * d;
        if (!grad_a.empty()) grad_a[i] += 2.0 * d * inv_n * a.squash_derivative(i);
        if (!grad_b.empty()) grad_b[i] -= 2.0 * d * inv_n * b.squash_derivative(i);
    }
    return sum * inv_n;
}

double point_loss(const PredictionMap& pred, const PredictionMap& pred_rot_back, const PointLabel& points,
                  const PointLossWeights& weights, std::span<double> grad_pred,
                  std::span<double> grad_rot_back) {
    require_shape(pred, pred_rot_back.height(), pred_rot_back.width(), "point_loss");
    require_grad_size(grad_pred, pred);
    require_grad_size(grad_rot_back, pred_rot_back);
    for (const auto* list : {&points.fg_points, &points.bg_points}) {
        for (const auto& pt : *list) {
            if (!pred.probs().contains(pt.row, pt.col)) {
                throw Error(Errc::OutOfBounds, "point (" + std::to_string(pt.row) + "," +
                                                   std::to_string(pt.col) + ") outside prediction");
            }
        }
    }

    double value = 0.0;
    if (weights.consistency != 0.0) {
        std::vector<double> ga;
        std::vector<double> gb;
        if (!grad_pred.empty()) ga.assign(pred.size(), 0.0);
        if (!grad_rot_back.empty()) gb.assign(pred.size(), 0.0);
        value += weights.consistency * consistency_loss(pred, pred_rot_back, ga, gb);
        for (std::size_t i = 0; i < ga.size(); ++i) grad_pred[i] += weights.consistency * ga[i];
        for (std::size_t i = 0; i < gb.size(); ++i) grad_rot_back[i] += weights.consistency * gb[i];
    }

    const std::size_t n_points = points.fg_points.size() + points.bg_points.size();
    if (weights.use_point_bce && weights.point_bce != 0.0 && n_points > 0) {
        const double scale = weights.point_bce / static_cast<double>(n_points);
        double sum = 0.0;
        auto add = [&](const PixelCoord& pt, double t) {
            const auto i = static_cast<std::size_t>(pt.row) * pred.width() + pt.col;
            const double p = pred.probs()[i];
            sum += bce_term(p, t);
            if (!grad_pred.empty()) grad_pred[i] += scale * bce_term_derivative(p, t) * pred.squash_derivative(i);
        };
        for (const auto& pt : points.fg_points) add(pt, 1.0);
        for (const auto& pt : points.bg_points) add(pt, 0.0);
        value += scale * sum;
    }
    return value;
}

double LossBreakdown::component(SupervisionKind kind) const noexcept {
    return const_cast<LossBreakdown*>(this)->component(kind);
}

double& LossBreakdown::component(SupervisionKind kind) noexcept {
    switch (kind) {
        case SupervisionKind::Pixel: return l_pixel;
        case SupervisionKind::Polygon: return l_polygon;
        case SupervisionKind::Box: return l_box;
        case SupervisionKind::Scribble: return l_scribble;
        case SupervisionKind::Point: return l_points;
    }
    return l_total;
}

LossBreakdown total_loss(std::span<const KindLoss> terms) {
    LossBreakdown out;
    bool seen[std::size(kAllKinds)] = {};
    for (const auto& term : terms) {
        auto& flag = seen[static_cast<std::size_t>(term.kind)];
        if (flag) {
            throw Error(Errc::InvalidConfig, "loss for kind '" + std::string(to_string(term.kind)) +
                                                 "' supplied twice");
        }
        flag = true;
        out.component(term.kind) = term.value;
    }
    out.l_total = out.component_sum();
    return out;
}

}  // namespace mixsup
