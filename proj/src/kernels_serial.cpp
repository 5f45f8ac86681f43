#include <algorithm>
#include <cmath>

#include "mixsup/kernels.hpp"

namespace mixsup::kernels::serial {

void conv2d_forward(const ConvShape& s, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> output) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    for (int co = 0; co < s.out_channels; ++co) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                float acc = bias.empty() ? 0.0f : bias[co];
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        const int iy = y * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= s.in_h) continue;
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            const int ix = x * s.stride - s.pad + kx;
                            if (ix < 0 || ix >= s.in_w) continue;
                            acc += weight[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx] *
                                   input[(ci * s.in_h + iy) * s.in_w + ix];
                        }
                    }
                }
                output[(co * oh + y) * ow + x] = acc;
            }
        }
    }
}

void conv2d_backward(const ConvShape& s, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> grad_output, std::span<float> grad_input,
                     std::span<float> grad_weight, std::span<float> grad_bias) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), 0.0f);
    for (int co = 0; co < s.out_channels; ++co) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const float g = grad_output[(co * oh + y) * ow + x];
                if (!grad_bias.empty()) grad_bias[co] += g;
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        const int iy = y * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= s.in_h) continue;
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            const int ix = x * s.stride - s.pad + kx;
                            if (ix < 0 || ix >= s.in_w) continue;
                            const int wi = ((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx;
                            const int ii = (ci * s.in_h + iy) * s.in_w + ix;
                            grad_weight[wi] += g * input[ii];
                            if (!grad_input.empty()) grad_input[ii] += g * weight[wi];
                        }
                    }
                }
            }
        }
    }
}

namespace {

struct Tap {
    int i0;
    int i1;
    float w1;  // weight of i1; i0 gets 1 - w1
};

Tap source_tap(int dst, int in_size, int out_size) {
    const float scale = static_cast<float>(in_size) / static_cast<float>(out_size);
    float src = (static_cast<float>(dst) + 0.5f) * scale - 0.5f;
    src = std::max(src, 0.0f);
    int i0 = static_cast<int>(std::floor(src));
    i0 = std::min(i0, in_size - 1);
    const int i1 = std::min(i0 + 1, in_size - 1);
    return {i0, i1, src - static_cast<float>(i0)};
}

}  // namespace

void bilinear_resize(int channels, int in_h, int in_w, std::span<const float> input, int out_h, int out_w,
                     std::span<float> output) {
    for (int c = 0; c < channels; ++c) {
        const float* in = input.data() + static_cast<std::size_t>(c) * in_h * in_w;
        float* out = output.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const Tap ty = source_tap(y, in_h, out_h);
            for (int x = 0; x < out_w; ++x) {
                const Tap tx = source_tap(x, in_w, out_w);
                const float top = in[ty.i0 * in_w + tx.i0] * (1.0f - tx.w1) + in[ty.i0 * in_w + tx.i1] * tx.w1;
                const float bot = in[ty.i1 * in_w + tx.i0] * (1.0f - tx.w1) + in[ty.i1 * in_w + tx.i1] * tx.w1;
                out[y * out_w + x] = top * (1.0f - ty.w1) + bot * ty.w1;
            }
        }
    }
}

void bilinear_resize_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const float> grad_output, std::span<float> grad_input) {
    std::fill(grad_input.begin(), grad_input.end(), 0.0f);
    for (int c = 0; c < channels; ++c) {
        float* gin = grad_input.data() + static_cast<std::size_t>(c) * in_h * in_w;
        const float* gout = grad_output.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const Tap ty = source_tap(y, in_h, out_h);
            for (int x = 0; x < out_w; ++x) {
                const Tap tx = source_tap(x, in_w, out_w);
                const float g = gout[y * out_w + x];
                gin[ty.i0 * in_w + tx.i0] += g * (1.0f - ty.w1) * (1.0f - tx.w1);
                gin[ty.i0 * in_w + tx.i1] += g * (1.0f - ty.w1) * tx.w1;
                gin[ty.i1 * in_w + tx.i0] += g * ty.w1 * (1.0f - tx.w1);
                gin[ty.i1 * in_w + tx.i1] += g * ty.w1 * tx.w1;
            }
        }
    }
}

}  // namespace mixsup::kernels::serial
