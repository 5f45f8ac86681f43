#include "mixsup/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mixsup/error.hpp"

namespace mixsup {

void ModelConfig::validate() const {
    for (int c : stage_channels) {
        if (c <= 0) throw Error(Errc::InvalidConfig, "stage channel counts must be positive");
    }
    if (fusion_channels <= 0) throw Error(Errc::InvalidConfig, "fusion_channels must be positive");
    if (input_channels <= 0) throw Error(Errc::InvalidConfig, "input_channels must be positive");
}

std::size_t parameter_count(const ModelConfig& config) {
    config.validate();
    std::size_t total = 0;
    int in = config.input_channels;
    for (int c : config.stage_channels) {
        total += static_cast<std::size_t>(c) * in * 9 + c;
        in = c;
    }
    for (int i = 1; i < 4; ++i) {
        total += static_cast<std::size_t>(config.fusion_channels) * config.stage_channels[i] + config.fusion_channels;
    }
    total += static_cast<std::size_t>(config.fusion_channels) + 1;
    return total;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    build_layout();
    init_parameters(seed);
}

Model::Model(const ModelConfig& config, std::vector<float> parameters)
    : config_(config) {
    config_.validate();
    build_layout();
    if (parameters.size() != params_.size()) {
        throw Error(Errc::BadCheckpoint, "parameter count " + std::to_string(parameters.size()) +
                                             " does not match config (" + std::to_string(params_.size()) + ")");
    }
    params_ = std::move(parameters);
}

void Model::build_layout() {
    std::size_t offset = 0;
    auto make = [&offset](int in, int out, int kernel, int stride, int pad) {
        Layer layer;
        layer.shape = {in, out, kernel, stride, pad, 1, 1};
        layer.weight_offset = offset;
        offset += static_cast<std::size_t>(layer.shape.weight_count());
        layer.bias_offset = offset;
        offset += static_cast<std::size_t>(out);
        return layer;
    };
    int in = config_.input_channels;
    for (int i = 0; i < 4; ++i) {
        encoder_[i] = make(in, config_.stage_channels[i], 3, 2, 1);
        in = config_.stage_channels[i];
    }
    for (int i = 0; i < 3; ++i) projection_[i] = make(config_.stage_channels[i + 1], config_.fusion_channels, 1, 1, 0);
    head_ = make(config_.fusion_channels, 1, 1, 1, 0);
    params_.assign(offset, 0.0f);
}

void Model::init_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&](const Layer& layer, double gain) {
        const double std_dev = std::sqrt(gain / layer.shape.patch_size());
        std::normal_distribution<double> dist(0.0, std_dev);
        for (int i = 0; i < layer.shape.weight_count(); ++i) {
            params_[layer.weight_offset + static_cast<std::size_t>(i)] = static_cast<float>(dist(rng));
        }
    };
    for (const auto& layer : encoder_) fill(layer, 2.0);
    for (const auto& layer : projection_) fill(layer, 1.0);
    fill(head_, 1.0);
}

std::array<std::array<int, 2>, 4> Model::stage_sizes(int height, int width) {
    std::array<std::array<int, 2>, 4> out{};
    for (int i = 0; i < 4; ++i) {
        height = (height + 1) / 2;
        width = (width + 1) / 2;
        out[static_cast<std::size_t>(i)] = {height, width};
    }
    return out;
}

kernels::ConvShape Model::sized(const Layer& layer, int in_h, int in_w) const {
    auto s = layer.shape;
    s.in_h = in_h;
    s.in_w = in_w;
    return s;
}

void Model::conv_forward(const Layer& layer, const Grid<float>& in, Grid<float>& out) const {
    const auto s = sized(layer, in.height(), in.width());
    out = Grid<float>(s.out_h(), s.out_w(), s.out_channels);
    const std::span<const float> all(params_);
    const auto w = all.subspan(layer.weight_offset, static_cast<std::size_t>(s.weight_count()));
    const auto b = all.subspan(layer.bias_offset, static_cast<std::size_t>(s.out_channels));
    if (backend_ == KernelBackend::Serial) kernels::serial::conv2d_forward(s, in.values(), w, b, out.values());
    else kernels::parallel::conv2d_forward(s, in.values(), w, b, out.values());
}

void Model::conv_backward(const Layer& layer, const Grid<float>& in, std::span<const float> grad_out,
                          std::span<float> grad_in, std::span<float> grad_params) const {
    const auto s = sized(layer, in.height(), in.width());
    const std::span<const float> all(params_);
    const auto w = all.subspan(layer.weight_offset, static_cast<std::size_t>(s.weight_count()));
    const auto gw = grad_params.subspan(layer.weight_offset, static_cast<std::size_t>(s.weight_count()));
    const auto gb = grad_params.subspan(layer.bias_offset, static_cast<std::size_t>(s.out_channels));
    if (backend_ == KernelBackend::Serial) kernels::serial::conv2d_backward(s, in.values(), w, grad_out, grad_in, gw, gb);
    else kernels::parallel::conv2d_backward(s, in.values(), w, grad_out, grad_in, gw, gb);
}

void Model::resize(const Grid<float>& in, Grid<float>& out) const {
    if (backend_ == KernelBackend::Serial) {
        kernels::serial::bilinear_resize(in.channels(), in.height(), in.width(), in.values(), out.height(),
                                         out.width(), out.values());
    } else {
        kernels::parallel::bilinear_resize(in.channels(), in.height(), in.width(), in.values(), out.height(),
                                           out.width(), out.values());
    }
}

void Model::resize_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                            std::span<const float> grad_out, std::span<float> grad_in) const {
    if (backend_ == KernelBackend::Serial) {
        kernels::serial::bilinear_resize_backward(channels, in_h, in_w, out_h, out_w, grad_out, grad_in);
    } else {
        kernels::parallel::bilinear_resize_backward(channels, in_h, in_w, out_h, out_w, grad_out, grad_in);
    }
}

namespace {

void relu_inplace(Grid<float>& g) {
    for (auto& v : g.values()) v = std::max(v, 0.0f);
}

// Zeroes gradient where the forward activation was clipped.
void relu_backward(const Grid<float>& activation, std::span<float> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (activation[i] <= 0.0f) grad[i] = 0.0f;
    }
}

}  // namespace

ForwardPass Model::forward(const ImageTensor& image) const {
    constexpr int kDiv = ModelConfig::kInputSizeDivisor;
    if (image.height() <= 0 || image.width() <= 0 || image.height() % kDiv != 0 || image.width() % kDiv != 0) {
        throw Error(Errc::BadSize, "input " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                                       " is not divisible by " + std::to_string(kDiv));
    }
    if (image.channels() != config_.input_channels) {
        throw Error(Errc::BadSize, "input has " + std::to_string(image.channels()) + " channels, model expects " +
                                       std::to_string(config_.input_channels));
    }
    ForwardPass pass;
    pass.input = image;
    const Grid<float>* prev = &pass.input;
    for (std::size_t i = 0; i < 4; ++i) {
        conv_forward(encoder_[i], *prev, pass.stages[i]);
        relu_inplace(pass.stages[i]);
        prev = &pass.stages[i];
    }
    for (std::size_t i = 0; i < 3; ++i) conv_forward(projection_[i], pass.stages[i + 1], pass.projected[i]);

    const int h4 = pass.stages[1].height();
    const int w4 = pass.stages[1].width();
    pass.fused = pass.projected[0];
    Grid<float> up(h4, w4, config_.fusion_channels);
    for (std::size_t i = 1; i < 3; ++i) {
        resize(pass.projected[i], up);
        for (std::size_t k = 0; k < up.size(); ++k) pass.fused[k] += up[k];
    }
    relu_inplace(pass.fused);
    conv_forward(head_, pass.fused, pass.low_logits);

    Grid<float> full(image.height(), image.width(), 1);
    resize(pass.low_logits, full);
    Grid<double> logits(image.height(), image.width());
    for (std::size_t k = 0; k < full.size(); ++k) logits[k] = full[k];
    pass.prediction = PredictionMap::from_logits(std::move(logits));
    return pass;
}

PredictionMap Model::predict(const ImageTensor& image) const { return forward(image).prediction; }

void Model::backward(const ForwardPass& pass, std::span<const double> grad_logits,
                     std::span<float> grad_params) const {
    if (grad_logits.size() != pass.prediction.size() || grad_params.size() != params_.size()) {
        throw Error(Errc::ShapeMismatch, "gradient buffers do not match the forward pass");
    }
    const int h = pass.input.height();
    const int w = pass.input.width();
    std::vector<float> g_full(grad_logits.begin(), grad_logits.end());

    const int h4 = pass.fused.height();
    const int w4 = pass.fused.width();
    std::vector<float> g_low(static_cast<std::size_t>(h4) * w4);
    resize_backward(1, h4, w4, h, w, g_full, g_low);

    std::vector<float> g_fused(pass.fused.size());
    conv_backward(head_, pass.fused, g_low, g_fused, grad_params);
    relu_backward(pass.fused, g_fused);

    std::array<std::vector<float>, 4> g_stage;
    for (std::size_t i = 0; i < 4; ++i) g_stage[i].assign(pass.stages[i].size(), 0.0f);

    std::vector<float> g_proj;
    std::vector<float> g_in;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& proj = pass.projected[i];
        if (i == 0) {
            g_proj = g_fused;
        } else {
            g_proj.assign(proj.size(), 0.0f);
            resize_backward(proj.channels(), proj.height(), proj.width(), h4, w4, g_fused, g_proj);
        }
        g_in.assign(pass.stages[i + 1].size(), 0.0f);
        conv_backward(projection_[i], pass.stages[i + 1], g_proj, g_in, grad_params);
        auto& dst = g_stage[i + 1];
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g_in[k];
    }

    for (std::size_t i = 4; i-- > 0;) {
        relu_backward(pass.stages[i], g_stage[i]);
        const Grid<float>& in = i == 0 ? pass.input : pass.stages[i - 1];
        if (i == 0) {
            conv_backward(encoder_[i], in, g_stage[i], {}, grad_params);
        } else {
            g_in.assign(in.size(), 0.0f);
            conv_backward(encoder_[i], in, g_stage[i], g_in, grad_params);
            auto& dst = g_stage[i - 1];
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g_in[k];
        }
    }
}

}  // namespace mixsup
