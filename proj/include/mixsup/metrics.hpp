#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mixsup/annotations.hpp"
#include "mixsup/data.hpp"
#include "mixsup/losses.hpp"

namespace mixsup {

class Model;
struct TrainHistory;

inline constexpr double kDefaultThreshold = 0.5;

/// 1 where prob > threshold (strict). Threshold must lie in (0, 1).
DenseMask binarize(const PredictionMap& pred, double threshold = kDefaultThreshold);

/// 2|P∩G| / (|P|+|G|); 1.0 when both are empty.
double dice_coeff(const DenseMask& pred, const DenseMask& gt);
/// |P∩G| / |P∪G|; 1.0 when both are empty.
double iou(const DenseMask& pred, const DenseMask& gt);

struct WeightedValue {
    double count = 0.0;
    double value = 0.0;
};

/// Σ count·value / Σ count. Throws EmptyInput, or InvalidConfig for a
/// non-positive count.
double weighted_average(std::span<const WeightedValue> items);

struct DatasetMetrics {
    std::string name;
    std::size_t count = 0;
    double dice = 0.0;
    double iou = 0.0;
    friend bool operator==(const DatasetMetrics&, const DatasetMetrics&) = default;
};

struct MetricsReport {
    std::vector<DatasetMetrics> datasets;
    double wavg_dice = 0.0;
    double wavg_iou = 0.0;
    double threshold = kDefaultThreshold;
    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Maps an image (any size) to a prediction of the same size.
using Predictor = std::function<PredictionMap(const ImageTensor&)>;

/// Wraps a model: images whose sides are not multiples of 16 are resized to
/// the nearest multiple, and the probabilities are resized back bilinearly.
Predictor model_predictor(const Model& model);

/// Per-image Dice/IoU at native resolution, macro-averaged per dataset,
/// then count-weighted across datasets. Test datasets must be pixel-kind.
MetricsReport evaluate(const Predictor& predictor, std::span<const Dataset> test_sets,
                       double threshold = kDefaultThreshold);

/// Dataset order used by report.csv: the five polyp benchmarks in their
/// customary order, then everything else in input order.
std::vector<std::size_t> report_row_order(const MetricsReport& report);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// Writes report.json, report.csv, metrics_bar.png and, when `history` is
/// non-null and nonempty, training_curve.png into out_dir (created if needed).
void emit_report(const MetricsReport& report, const std::filesystem::path& out_dir,
                 const TrainHistory* history = nullptr);

}  // namespace mixsup
