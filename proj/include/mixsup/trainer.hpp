#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixsup/checkpoint.hpp"
#include "mixsup/data.hpp"
#include "mixsup/losses.hpp"
#include "mixsup/model.hpp"

namespace mixsup {

/// Loss-term weights. All 1.0 reproduces the plain unweighted total.
struct LossWeights {
    double uncertainty = 1.0;  ///< unlabeled-pixel term of the scribble loss
    double consistency = 1.0;  ///< rotation-consistency term of the point loss
    double point_bce = 1.0;    ///< BCE at annotated points
    bool use_point_bce = true;
};

enum class LrSchedule { Constant, Poly };

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 4;
    int iterations = 2000;
    std::vector<int> size_set{64, 80, 96};
    std::uint64_t seed = 0;
    LossWeights weights;
    int checkpoint_every = 500;  ///< 0 disables intermediate checkpoints
    int val_every = 0;           ///< 0: validate only after the last step
    LrSchedule schedule = LrSchedule::Constant;
    double poly_power = 0.9;
    double grad_clip = 0.0;  ///< global-norm clip; 0 disables
    SamplingMode sampling = SamplingMode::RoundRobin;
    ModelConfig model;

    /// Throws InvalidConfig.
    void validate() const;
    [[nodiscard]] double learning_rate_at(int step) const;
};

struct StepRecord {
    int step = 0;  ///< 1-based count of completed updates
    SupervisionKind kind = SupervisionKind::Pixel;
    LossBreakdown losses;
    std::optional<double> val_dice;
};

struct TrainHistory {
    std::vector<StepRecord> steps;

    /// Columns step,kind,l_pixel,l_polygon,l_box,l_scribble,l_points,l_total,val_dice
    /// (val_dice empty when not evaluated at that step).
    [[nodiscard]] std::string to_csv() const;
    static TrainHistory from_csv(const std::string& text);
    void save_csv(const std::filesystem::path& path) const;
    static TrainHistory load_csv(const std::filesystem::path& path);
};

/// SGD with heavy-ball momentum: v <- momentum*v + g; p <- p - lr*v.
class SgdMomentum {
public:
    SgdMomentum(std::size_t parameter_count, double momentum);
    SgdMomentum(std::vector<float> velocity, double momentum);

    void step(std::span<float> parameters, std::span<const float> gradient, double learning_rate);
    [[nodiscard]] const std::vector<float>& velocity() const noexcept { return velocity_; }

private:
    std::vector<float> velocity_;
    double momentum_;
};

/// The consistency pass turns point-sample inputs a quarter counterclockwise;
/// its prediction is turned three more quarters to land back in the original
/// frame. Kept as named helpers so the bookkeeping can be checked in isolation.
ImageTensor rotate_for_consistency(const ImageTensor& image);
PredictionMap rotate_back(const PredictionMap& rotated_prediction);

/// Loss of one sample for its kind; adds scale * d loss / d params into
/// grad_params. Point samples run a second forward pass on the image turned a
/// quarter counterclockwise and compare the prediction turned back.
double sample_loss(const Model& model, const LabeledSample& sample, const LossWeights& weights,
                   double scale, std::span<float> grad_params);

/// One SGD update on a single-kind batch (mean loss over the batch). The
/// returned breakdown has only `kind` populated. Throws NonFiniteLoss.
LossBreakdown train_step(Model& model, std::span<const LabeledSample* const> batch, SupervisionKind kind,
                         SgdMomentum& optimizer, double learning_rate, const LossWeights& weights,
                         double grad_clip = 0.0, int step_index = 0);

struct TrainOptions {
    std::optional<Checkpoint> resume;
    TrainHistory prior_history;  ///< prepended to the returned history on resume
    std::function<void(const Checkpoint&)> on_checkpoint;
    std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainHistory history;
    double final_val_dice = 0.0;  ///< wAVG Dice on the validation sets (0 if none)
};

/// Runs steps (resume step + 1) .. config.iterations. Batches are a pure
/// function of (seed, step), so a resumed run reproduces an uninterrupted one.
TrainResult train(const TrainConfig& config, std::span<const Dataset> train_sets,
                  std::span<const Dataset> val_sets, const TrainOptions& options = {});

}  // namespace mixsup
