#pragma once

#include <span>

// Dense compute kernels used by the model. Two implementations with the same
// signatures:
//   serial::   direct loops, kept as the reference the tests compare against;
//   parallel:: im2col + GEMM with OpenMP over output channels / planes.
// Both are deterministic: every output element is reduced in a fixed order
// by a single thread, so results do not depend on the thread count.

namespace mixsup::kernels {

struct ConvShape {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;  // square kernel
    int stride = 1;
    int pad = 0;
    int in_h = 1;
    int in_w = 1;

    [[nodiscard]] int out_h() const noexcept { return (in_h + 2 * pad - kernel) / stride + 1; }
    [[nodiscard]] int out_w() const noexcept { return (in_w + 2 * pad - kernel) / stride + 1; }
    [[nodiscard]] int patch_size() const noexcept { return in_channels * kernel * kernel; }
    [[nodiscard]] int weight_count() const noexcept { return out_channels * patch_size(); }
};

// Layouts: input C×H×W, weight Co×Ci×k×k, output Co×Ho×Wo, all row-major.
// grad_* outputs named "accumulate" are added to; grad_input is overwritten
// and may be empty to skip it.

namespace serial {

void conv2d_forward(const ConvShape& shape, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> output);

void conv2d_backward(const ConvShape& shape, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> grad_output, std::span<float> grad_input,
                     std::span<float> grad_weight_accumulate, std::span<float> grad_bias_accumulate);

/// Half-pixel-centre bilinear resampling of `channels` planes in_h×in_w -> out_h×out_w.
void bilinear_resize(int channels, int in_h, int in_w, std::span<const float> input, int out_h, int out_w,
                     std::span<float> output);

/// Adjoint of bilinear_resize: scatters grad_output back onto grad_input (overwritten).
void bilinear_resize_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const float> grad_output, std::span<float> grad_input);

}  // namespace serial

namespace parallel {

void conv2d_forward(const ConvShape& shape, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> output);

void conv2d_backward(const ConvShape& shape, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> grad_output, std::span<float> grad_input,
                     std::span<float> grad_weight_accumulate, std::span<float> grad_bias_accumulate);

void bilinear_resize(int channels, int in_h, int in_w, std::span<const float> input, int out_h, int out_w,
                     std::span<float> output);

void bilinear_resize_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const float> grad_output, std::span<float> grad_input);

/// C(m×n) = A(m×k)·B(k×n) [+ C if accumulate]. Exposed for benchmarking.
void gemm_nn(int m, int n, int k, std::span<const float> a, std::span<const float> b, std::span<float> c,
             bool accumulate);
/// C(m×k) += A(m×n)·B(k×n)^T
void gemm_nt_accumulate(int m, int n, int k, std::span<const float> a, std::span<const float> b,
                        std::span<float> c);
/// C(k×n) = A(m×k)^T·B(m×n)
void gemm_tn(int m, int n, int k, std::span<const float> a, std::span<const float> b, std::span<float> c);

}  // namespace parallel

int max_threads();

}  // namespace mixsup::kernels
