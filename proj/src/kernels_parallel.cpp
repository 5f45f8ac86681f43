#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mixsup/kernels.hpp"

namespace mixsup::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace parallel {

namespace {

std::vector<float>& scratch() {
    thread_local std::vector<float> buffer;
    return buffer;
}

// cols is (Ci·k·k) × (Ho·Wo); out-of-image taps are zero.
void im2col(const ConvShape& s, const float* input, float* cols) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    const int n = oh * ow;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < s.patch_size(); ++row) {
        const int kx = row % s.kernel;
        const int ky = (row / s.kernel) % s.kernel;
        const int ci = row / (s.kernel * s.kernel);
        float* dst = cols + static_cast<std::size_t>(row) * n;
        const float* plane = input + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
        for (int y = 0; y < oh; ++y) {
            const int iy = y * s.stride - s.pad + ky;
            float* line = dst + y * ow;
            if (iy < 0 || iy >= s.in_h) {
                std::fill(line, line + ow, 0.0f);
                continue;
            }
            const float* src = plane + iy * s.in_w;
            for (int x = 0; x < ow; ++x) {
                const int ix = x * s.stride - s.pad + kx;
                line[x] = (ix >= 0 && ix < s.in_w) ? src[ix] : 0.0f;
            }
        }
    }
}

// Adjoint of im2col; parallel over input channels so each plane has one writer.
void col2im(const ConvShape& s, const float* cols, float* grad_input) {
    const int oh = s.out_h();
    const int ow = s.out_w();
    const int n = oh * ow;
    const int kk = s.kernel * s.kernel;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < s.in_channels; ++ci) {
        float* plane = grad_input + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
        std::fill(plane, plane + static_cast<std::size_t>(s.in_h) * s.in_w, 0.0f);
        for (int k = 0; k < kk; ++k) {
            const int kx = k % s.kernel;
            const int ky = k / s.kernel;
            const float* src = cols + static_cast<std::size_t>(ci * kk + k) * n;
            for (int y = 0; y < oh; ++y) {
                const int iy = y * s.stride - s.pad + ky;
                if (iy < 0 || iy >= s.in_h) continue;
                float* line = plane + iy * s.in_w;
                for (int x = 0; x < ow; ++x) {
                    const int ix = x * s.stride - s.pad + kx;
                    if (ix >= 0 && ix < s.in_w) line[ix] += src[y * ow + x];
                }
            }
        }
    }
}

struct Tap {
    int i0;
    int i1;
    float w1;
};

std::vector<Tap> taps(int in_size, int out_size) {
    std::vector<Tap> out(static_cast<std::size_t>(out_size));
    const float scale = static_cast<float>(in_size) / static_cast<float>(out_size);
    for (int d = 0; d < out_size; ++d) {
        float src = std::max((static_cast<float>(d) + 0.5f) * scale - 0.5f, 0.0f);
        int i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
        out[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, in_size - 1), src - static_cast<float>(i0)};
    }
    return out;
}

}  // namespace

void gemm_nn(int m, int n, int k, std::span<const float> a, std::span<const float> b, std::span<float> c,
             bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        float* crow = c.data() + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0f);
        const float* arow = a.data() + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b.data() + static_cast<std::size_t>(p) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_accumulate(int m, int n, int k, std::span<const float> a, std::span<const float> b,
                        std::span<float> c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const float* arow = a.data() + static_cast<std::size_t>(i) * n;
        float* crow = c.data() + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float* brow = b.data() + static_cast<std::size_t>(p) * n;
            float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
            for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

void gemm_tn(int m, int n, int k, std::span<const float> a, std::span<const float> b, std::span<float> c) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < k; ++p) {
        float* crow = c.data() + static_cast<std::size_t>(p) * n;
        std::fill(crow, crow + n, 0.0f);
        for (int i = 0; i < m; ++i) {
            const float av = a[static_cast<std::size_t>(i) * k + p];
            const float* brow = b.data() + static_cast<std::size_t>(i) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void conv2d_forward(const ConvShape& s, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> output) {
    const int n = s.out_h() * s.out_w();
    const bool pointwise = s.kernel == 1 && s.stride == 1 && s.pad == 0;
    std::span<const float> cols = input;
    if (!pointwise) {
        auto& buf = scratch();
        buf.resize(static_cast<std::size_t>(s.patch_size()) * n);
        im2col(s, input.data(), buf.data());
        cols = buf;
    }
    if (!bias.empty()) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < s.out_channels; ++co) {
            std::fill_n(output.data() + static_cast<std::size_t>(co) * n, n, bias[co]);
        }
    }
    gemm_nn(s.out_channels, n, s.patch_size(), weight, cols, output, !bias.empty());
}

void conv2d_backward(const ConvShape& s, std::span<const float> input, std::span<const float> weight,
                     std::span<const float> grad_output, std::span<float> grad_input,
                     std::span<float> grad_weight, std::span<float> grad_bias) {
    const int n = s.out_h() * s.out_w();
    const bool pointwise = s.kernel == 1 && s.stride == 1 && s.pad == 0;
    std::span<const float> cols = input;
    auto& buf = scratch();
    if (!pointwise) {
        buf.resize(static_cast<std::size_t>(s.patch_size()) * n);
        im2col(s, input.data(), buf.data());
        cols = buf;
    }
    if (!grad_bias.empty()) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < s.out_channels; ++co) {
            const float* g = grad_output.data() + static_cast<std::size_t>(co) * n;
            float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
            for (int j = 0; j < n; ++j) acc += g[j];
            grad_bias[co] += acc;
        }
    }
    gemm_nt_accumulate(s.out_channels, n, s.patch_size(), grad_output, cols, grad_weight);
    if (grad_input.empty()) return;
    if (pointwise) {
        gemm_tn(s.out_channels, n, s.patch_size(), weight, grad_output, grad_input);
        return;
    }
    // cols is no longer needed; reuse the buffer for d cols.
    gemm_tn(s.out_channels, n, s.patch_size(), weight, grad_output, buf);
    col2im(s, buf.data(), grad_input.data());
}

void bilinear_resize(int channels, int in_h, int in_w, std::span<const float> input, int out_h, int out_w,
                     std::span<float> output) {
    const auto ty = taps(in_h, out_h);
    const auto tx = taps(in_w, out_w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            const float* in = input.data() + static_cast<std::size_t>(c) * in_h * in_w;
            float* out = output.data() + (static_cast<std::size_t>(c) * out_h + y) * out_w;
            const Tap& vy = ty[static_cast<std::size_t>(y)];
            const float* r0 = in + vy.i0 * in_w;
            const float* r1 = in + vy.i1 * in_w;
            for (int x = 0; x < out_w; ++x) {
                const Tap& vx = tx[static_cast<std::size_t>(x)];
                const float top = r0[vx.i0] * (1.0f - vx.w1) + r0[vx.i1] * vx.w1;
                const float bot = r1[vx.i0] * (1.0f - vx.w1) + r1[vx.i1] * vx.w1;
                out[x] = top * (1.0f - vy.w1) + bot * vy.w1;
            }
        }
    }
}

void bilinear_resize_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const float> grad_output, std::span<float> grad_input) {
    const auto ty = taps(in_h, out_h);
    const auto tx = taps(in_w, out_w);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
        float* gin = grad_input.data() + static_cast<std::size_t>(c) * in_h * in_w;
        std::fill(gin, gin + static_cast<std::size_t>(in_h) * in_w, 0.0f);
        const float* gout = grad_output.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const Tap& vy = ty[static_cast<std::size_t>(y)];
            float* r0 = gin + vy.i0 * in_w;
            float* r1 = gin + vy.i1 * in_w;
            for (int x = 0; x < out_w; ++x) {
                const Tap& vx = tx[static_cast<std::size_t>(x)];
                const float g = gout[y * out_w + x];
                const float gt = g * (1.0f - vy.w1);
                const float gb = g * vy.w1;
                r0[vx.i0] += gt * (1.0f - vx.w1);
                r0[vx.i1] += gt * vx.w1;
                r1[vx.i0] += gb * (1.0f - vx.w1);
                r1[vx.i1] += gb * vx.w1;
            }
        }
    }
}

}  // namespace parallel
}  // namespace mixsup::kernels
