#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mixsup/grid.hpp"
#include "mixsup/kernels.hpp"
#include "mixsup/losses.hpp"

namespace mixsup {

struct ModelConfig {
    std::array<int, 4> stage_channels{16, 32, 64, 128};
    int fusion_channels = 32;
    int input_channels = 3;

    /// Stage i runs at 1/2^(i+1) of the input, so inputs must divide by 16.
    static constexpr int kInputSizeDivisor = 16;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Exact number of learnable scalars for `config`.
std::size_t parameter_count(const ModelConfig& config);

enum class KernelBackend { Serial, Parallel };

/// Activations cached by one forward pass, consumed by Model::backward.
struct ForwardPass {
    ImageTensor input;
    std::array<Grid<float>, 4> stages;      // post-ReLU, 1/2 .. 1/16
    std::array<Grid<float>, 3> projected;   // 1×1 projections of stages 1..3
    Grid<float> fused;                      // post-ReLU sum at 1/4 resolution
    Grid<float> low_logits;                 // 1 channel, 1/4 resolution
    PredictionMap prediction;               // full resolution
};

/// Pyramid encoder-decoder: four stride-2 3×3 conv stages (ReLU), 1×1
/// projections of the 1/4, 1/8 and 1/16 maps to a common width, bilinear
/// upsampling to 1/4 resolution, sum + ReLU, a 1×1 prediction layer and a
/// final bilinear upsample of the logits to the input size.
class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);
    Model(const ModelConfig& config, std::vector<float> parameters);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::span<float> parameters() noexcept { return params_; }
    [[nodiscard]] std::span<const float> parameters() const noexcept { return params_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }

    void set_backend(KernelBackend backend) noexcept { backend_ = backend; }
    [[nodiscard]] KernelBackend backend() const noexcept { return backend_; }

    /// Throws Error(BadSize) unless height and width divide by 16 and the
    /// channel count matches the config.
    [[nodiscard]] ForwardPass forward(const ImageTensor& image) const;
    [[nodiscard]] PredictionMap predict(const ImageTensor& image) const;

    /// Adds d loss / d parameters into `grad_params` given d loss / d logits
    /// at full resolution.
    void backward(const ForwardPass& pass, std::span<const double> grad_logits,
                  std::span<float> grad_params) const;

    /// Internal feature sizes (height, width) of the four stages for an input.
    static std::array<std::array<int, 2>, 4> stage_sizes(int height, int width);

private:
    struct Layer {
        kernels::ConvShape shape;  // spatial extent filled per call
        std::size_t weight_offset = 0;
        std::size_t bias_offset = 0;
    };

    void build_layout();
    void init_parameters(std::uint64_t seed);
    [[nodiscard]] kernels::ConvShape sized(const Layer& layer, int in_h, int in_w) const;
    void conv_forward(const Layer& layer, const Grid<float>& in, Grid<float>& out) const;
    void conv_backward(const Layer& layer, const Grid<float>& in, std::span<const float> grad_out,
                       std::span<float> grad_in, std::span<float> grad_params) const;
    void resize(const Grid<float>& in, Grid<float>& out) const;
    void resize_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                         std::span<const float> grad_out, std::span<float> grad_in) const;

    ModelConfig config_;
    std::array<Layer, 4> encoder_{};
    std::array<Layer, 3> projection_{};
    Layer head_{};
    std::vector<float> params_;
    KernelBackend backend_ = KernelBackend::Parallel;
};

}  // namespace mixsup
