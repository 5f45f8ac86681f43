#pragma once

#include <span>
#include <vector>

#include "mixsup/annotations.hpp"
#include "mixsup/grid.hpp"

namespace mixsup {

/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] wherever a
/// logarithm is taken.
inline constexpr double kProbEpsilon = 1e-7;
inline constexpr double kDiceSmoothing = 1.0;

/// Per-pixel foreground prediction. Carries the logits it was squashed from so
/// gradients can be taken with respect to them.
class PredictionMap {
public:
    PredictionMap() = default;

    static PredictionMap from_logits(Grid<double> logits);
    /// Builds the map whose (clamped) probabilities equal `probs`.
    static PredictionMap from_probs(const Grid<double>& probs);
    static PredictionMap constant(int height, int width, double prob);

    [[nodiscard]] int height() const noexcept { return logits_.height(); }
    [[nodiscard]] int width() const noexcept { return logits_.width(); }
    [[nodiscard]] std::size_t size() const noexcept { return logits_.size(); }
    [[nodiscard]] const Grid<double>& logits() const noexcept { return logits_; }
    [[nodiscard]] const Grid<double>& probs() const noexcept { return probs_; }
    [[nodiscard]] double prob(int row, int col) const noexcept { return probs_(row, col); }

    /// d prob / d logit at flat index i (zero where the clamp is active).
    [[nodiscard]] double squash_derivative(std::size_t i) const noexcept;

private:
    Grid<double> logits_;
    Grid<double> probs_;
};

PredictionMap rotate90(const PredictionMap& pred, int quarter_turns);

// Each loss below returns its value and, when `grad_logits` is non-empty,
// ADDS d loss / d logits into it (size height*width).

double bce_loss(const PredictionMap& pred, const DenseMask& target, std::span<double> grad_logits = {});
double dice_loss(const PredictionMap& pred, const DenseMask& target, std::span<double> grad_logits = {});
/// BCE + Dice; the loss for pixel- and polygon-supervised samples.
double dense_loss(const PredictionMap& pred, const DenseMask& target, std::span<double> grad_logits = {});

/// Mask-to-box transform result. `source` maps every output pixel back to the
/// input pixel it was selected from, for routing gradients.
struct BoxProjection {
    PredictionMap map;
    std::vector<std::size_t> source;
};

/// B[i,j] = min(max_j' P[i,j'], max_i' P[i',j]). Computed on logits (the
/// squash is monotone, so the selection is the same as on probabilities).
BoxProjection m2b_with_source(const PredictionMap& pred);
PredictionMap m2b(const PredictionMap& pred);

double box_loss(const PredictionMap& pred, const BoxLabel& box, std::span<double> grad_logits = {});

/// min(-log p, -log(1-p)) on the clamped probability.
double uncertainty_loss(double p);
/// d uncertainty_loss / d p (subgradient 0 at p = 0.5).
double uncertainty_loss_derivative(double p);

struct ScribbleLossWeights {
    double uncertainty = 1.0;
};

/// Mean BCE over labeled pixels + weight * mean uncertainty over unlabeled
/// pixels (zero when every pixel is labeled). Throws NoLabeledPixels.
double scribble_loss(const PredictionMap& pred, const ScribbleLabel& scribble,
                     const ScribbleLossWeights& weights = {}, std::span<double> grad_logits = {});

/// Mean squared difference of two probability maps.
double consistency_loss(const PredictionMap& a, const PredictionMap& b,
                        std::span<double> grad_a = {}, std::span<double> grad_b = {});

struct PointLossWeights {
    double consistency = 1.0;  ///< weight on the rotation-consistency MSE
    double point_bce = 1.0;    ///< weight on BCE at the annotated points
    bool use_point_bce = true;
};

/// consistency weight * consistency_loss(pred, pred_rot_back)
///   + point weight * mean BCE at the annotated points (fg -> 1, bg -> 0).
/// `pred_rot_back` is the prediction on the rotated input, already rotated
/// back into the original frame.
double point_loss(const PredictionMap& pred, const PredictionMap& pred_rot_back,
                  const PointLabel& points, const PointLossWeights& weights = {},
                  std::span<double> grad_pred = {}, std::span<double> grad_rot_back = {});

/// Per-kind loss values and their unweighted sum.
struct LossBreakdown {
    double l_pixel = 0.0;
    double l_polygon = 0.0;
    double l_box = 0.0;
    double l_scribble = 0.0;
    double l_points = 0.0;
    double l_total = 0.0;

    [[nodiscard]] double component(SupervisionKind kind) const noexcept;
    double& component(SupervisionKind kind) noexcept;
    [[nodiscard]] double component_sum() const noexcept {
        return l_pixel + l_polygon + l_box + l_scribble + l_points;
    }
};

/// One loss value for one supervision kind.
struct KindLoss {
    SupervisionKind kind;
    double value;
};

/// Populates a breakdown from the kinds present (absent kinds stay 0) and
/// sets l_total to the component sum. A kind listed twice is an error
/// (InvalidConfig).
LossBreakdown total_loss(std::span<const KindLoss> terms);

}  // namespace mixsup
