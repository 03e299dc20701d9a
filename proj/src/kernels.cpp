#include "antn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace antn::kernels {

void ConvShape::validate() const {
    if (kernel != 1 && kernel != 3) throw ConfigError("conv kernel must be 1 or 3, got " + std::to_string(kernel));
    if (in_channels <= 0 || out_channels <= 0) throw ConfigError("conv channel counts must be positive");
}

namespace {

void check_conv_args(const Tensor4& input, std::span<const double> weights, const ConvShape& shape) {
    shape.validate();
    if (input.c != shape.in_channels) {
        throw ConfigError("conv: input has " + std::to_string(input.c) + " channels, layer expects " +
                          std::to_string(shape.in_channels));
    }
    if (weights.size() != shape.weight_count()) throw ConfigError("conv: weight count mismatch");
}

void check_even(const Tensor4& t, const char* what) {
    if (t.h % 2 != 0 || t.w % 2 != 0) {
        throw ConfigError(std::string(what) + ": spatial dims must be even, got " + std::to_string(t.h) + "x" +
                          std::to_string(t.w));
    }
}

} // namespace

Tensor4 conv2d_forward(const Tensor4& input, std::span<const double> weights, std::span<const double> bias,
                       const ConvShape& shape) {
    check_conv_args(input, weights, shape);
    if (bias.size() != static_cast<std::size_t>(shape.out_channels)) throw ConfigError("conv: bias count mismatch");

    const int k = shape.kernel;
    const int r = k / 2;
    const int cin = shape.in_channels;
    const int cout = shape.out_channels;
    const int H = input.h;
    const int W = input.w;
    Tensor4 out(input.n, H, W, cout);

    const double* in = input.data.data();
    const double* wt = weights.data();
    const double* bs = bias.data();
    double* od = out.data.data();
    const int rows = input.n * H;

#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int b = row / H;
        const int y = row % H;
        for (int x = 0; x < W; ++x) {
            double* o = od + ((static_cast<std::size_t>(b) * H + y) * W + x) * cout;
            for (int oc = 0; oc < cout; ++oc) o[oc] = bs[oc];
            for (int ky = 0; ky < k; ++ky) {
                const int iy = y + ky - r;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = x + kx - r;
                    if (ix < 0 || ix >= W) continue;
                    const double* ip = in + ((static_cast<std::size_t>(b) * H + iy) * W + ix) * cin;
                    const double* wp = wt + static_cast<std::size_t>(ky * k + kx) * cin * cout;
                    for (int ic = 0; ic < cin; ++ic) {
                        const double v = ip[ic];
                        const double* wr = wp + static_cast<std::size_t>(ic) * cout;
#pragma omp simd
                        for (int oc = 0; oc < cout; ++oc) o[oc] += v * wr[oc];
                    }
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor4& input, std::span<const double> weights, const ConvShape& shape,
                     const Tensor4& upstream, Tensor4* grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias) {
    check_conv_args(input, weights, shape);
    const int k = shape.kernel;
    const int r = k / 2;
    const int cin = shape.in_channels;
    const int cout = shape.out_channels;
    const int H = input.h;
    const int W = input.w;
    if (upstream.n != input.n || upstream.h != H || upstream.w != W || upstream.c != cout) {
        throw ConfigError("conv backward: upstream gradient shape mismatch");
    }
    if (grad_weights.size() != shape.weight_count() || grad_bias.size() != static_cast<std::size_t>(cout)) {
        throw ConfigError("conv backward: gradient buffer size mismatch");
    }

    const double* in = input.data.data();
    const double* wt = weights.data();
    const double* up = upstream.data.data();
    const int rows = input.n * H;

    if (grad_input != nullptr) {
        *grad_input = Tensor4(input.n, H, W, cin);
        double* gi = grad_input->data.data();
        // gin(b,iy,ix,i) = sum over taps of up(b, iy - ky + r, ix - kx + r, o) * w[ky,kx,i,o]
#pragma omp parallel for schedule(static)
        for (int row = 0; row < rows; ++row) {
            const int b = row / H;
            const int iy = row % H;
            for (int ix = 0; ix < W; ++ix) {
                double* g = gi + ((static_cast<std::size_t>(b) * H + iy) * W + ix) * cin;
                for (int ky = 0; ky < k; ++ky) {
                    const int y = iy - ky + r;
                    if (y < 0 || y >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int x = ix - kx + r;
                        if (x < 0 || x >= W) continue;
                        const double* u = up + ((static_cast<std::size_t>(b) * H + y) * W + x) * cout;
                        const double* wp = wt + static_cast<std::size_t>(ky * k + kx) * cin * cout;
                        for (int ic = 0; ic < cin; ++ic) {
                            const double* wr = wp + static_cast<std::size_t>(ic) * cout;
                            double s = 0.0;
#pragma omp simd reduction(+ : s)
                            for (int oc = 0; oc < cout; ++oc) s += u[oc] * wr[oc];
                            g[ic] += s;
                        }
                    }
                }
            }
        }
    }

    // Each tap owns its slice of grad_weights.
    double* gw = grad_weights.data();
    const int taps = k * k;
#pragma omp parallel for schedule(static)
    for (int tap = 0; tap < taps; ++tap) {
        const int ky = tap / k;
        const int kx = tap % k;
        double* gt = gw + static_cast<std::size_t>(tap) * cin * cout;
        for (int b = 0; b < input.n; ++b) {
            const int y0 = std::max(0, r - ky);
            const int y1 = std::min(H, H + r - ky);
            const int x0 = std::max(0, r - kx);
            const int x1 = std::min(W, W + r - kx);
            for (int y = y0; y < y1; ++y) {
                const int iy = y + ky - r;
                for (int x = x0; x < x1; ++x) {
                    const int ix = x + kx - r;
                    const double* ip = in + ((static_cast<std::size_t>(b) * H + iy) * W + ix) * cin;
                    const double* u = up + ((static_cast<std::size_t>(b) * H + y) * W + x) * cout;
                    for (int ic = 0; ic < cin; ++ic) {
                        const double v = ip[ic];
                        double* gr = gt + static_cast<std::size_t>(ic) * cout;
#pragma omp simd
                        for (int oc = 0; oc < cout; ++oc) gr[oc] += v * u[oc];
                    }
                }
            }
        }
    }

    const std::size_t pix = upstream.pixels();
    for (std::size_t p = 0; p < pix; ++p) {
        const double* u = up + p * cout;
        for (int oc = 0; oc < cout; ++oc) grad_bias[oc] += u[oc];
    }
}

Tensor4 relu_forward(const Tensor4& input) {
    Tensor4 out = input;
    const std::size_t n = out.size();
    double* d = out.data.data();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) d[i] = d[i] > 0.0 ? d[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& output, const Tensor4& upstream) {
    if (!output.same_shape(upstream)) throw ConfigError("relu backward: shape mismatch");
    Tensor4 g = upstream;
    const std::size_t n = g.size();
    const double* o = output.data.data();
    double* d = g.data.data();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) d[i] = o[i] > 0.0 ? d[i] : 0.0;
    return g;
}

Tensor4 maxpool2_forward(const Tensor4& input) {
    check_even(input, "maxpool2");
    const int C = input.c;
    Tensor4 out(input.n, input.h / 2, input.w / 2, C);
    const int rows = out.n * out.h;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int b = row / out.h;
        const int y = row % out.h;
        for (int x = 0; x < out.w; ++x) {
            const double* p00 = &input.data[input.index(b, 2 * y, 2 * x, 0)];
            const double* p01 = p00 + C;
            const double* p10 = &input.data[input.index(b, 2 * y + 1, 2 * x, 0)];
            const double* p11 = p10 + C;
            double* o = &out.data[out.index(b, y, x, 0)];
            for (int ch = 0; ch < C; ++ch) {
                o[ch] = std::max(std::max(p00[ch], p01[ch]), std::max(p10[ch], p11[ch]));
            }
        }
    }
    return out;
}

Tensor4 maxpool2_backward(const Tensor4& input, const Tensor4& upstream) {
    check_even(input, "maxpool2 backward");
    if (upstream.n != input.n || upstream.h * 2 != input.h || upstream.w * 2 != input.w || upstream.c != input.c) {
        throw ConfigError("maxpool2 backward: upstream shape mismatch");
    }
    const int C = input.c;
    Tensor4 g(input.n, input.h, input.w, C);
    const int rows = upstream.n * upstream.h;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int b = row / upstream.h;
        const int y = row % upstream.h;
        for (int x = 0; x < upstream.w; ++x) {
            for (int ch = 0; ch < C; ++ch) {
                int by = 2 * y;
                int bx = 2 * x;
                double best = input(b, by, bx, ch);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const double v = input(b, 2 * y + dy, 2 * x + dx, ch);
                        if (v > best) {
                            best = v;
                            by = 2 * y + dy;
                            bx = 2 * x + dx;
                        }
                    }
                }
                g(b, by, bx, ch) = upstream(b, y, x, ch);
            }
        }
    }
    return g;
}

Tensor4 upsample2_forward(const Tensor4& input) {
    const int C = input.c;
    Tensor4 out(input.n, input.h * 2, input.w * 2, C);
    const int rows = out.n * out.h;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int b = row / out.h;
        const int y = row % out.h;
        for (int x = 0; x < out.w; ++x) {
            const double* s = &input.data[input.index(b, y / 2, x / 2, 0)];
            std::copy(s, s + C, &out.data[out.index(b, y, x, 0)]);
        }
    }
    return out;
}

Tensor4 upsample2_backward(const Tensor4& upstream) {
    check_even(upstream, "upsample2 backward");
    const int C = upstream.c;
    Tensor4 g(upstream.n, upstream.h / 2, upstream.w / 2, C);
    const int rows = g.n * g.h;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < rows; ++row) {
        const int b = row / g.h;
        const int y = row % g.h;
        for (int x = 0; x < g.w; ++x) {
            double* o = &g.data[g.index(b, y, x, 0)];
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const double* u = &upstream.data[upstream.index(b, 2 * y + dy, 2 * x + dx, 0)];
                    for (int ch = 0; ch < C; ++ch) o[ch] += u[ch];
                }
            }
        }
    }
    return g;
}

Tensor4 concat_channels(const Tensor4& first, const Tensor4& second) {
    if (first.n != second.n || first.h != second.h || first.w != second.w) {
        throw ConfigError("concat: spatial dims differ");
    }
    Tensor4 out(first.n, first.h, first.w, first.c + second.c);
    const std::size_t pix = first.pixels();
    for (std::size_t p = 0; p < pix; ++p) {
        auto a = first.pixel(p);
        auto b = second.pixel(p);
        double* o = out.data.data() + p * out.c;
        std::copy(a.begin(), a.end(), o);
        std::copy(b.begin(), b.end(), o + first.c);
    }
    return out;
}

void split_channels(const Tensor4& upstream, int first_channels, Tensor4& grad_first, Tensor4& grad_second) {
    if (first_channels < 0 || first_channels > upstream.c) throw ConfigError("split: bad channel count");
    grad_first = Tensor4(upstream.n, upstream.h, upstream.w, first_channels);
    grad_second = Tensor4(upstream.n, upstream.h, upstream.w, upstream.c - first_channels);
    const std::size_t pix = upstream.pixels();
    for (std::size_t p = 0; p < pix; ++p) {
        auto u = upstream.pixel(p);
        std::copy(u.begin(), u.begin() + first_channels, grad_first.data.data() + p * grad_first.c);
        std::copy(u.begin() + first_channels, u.end(), grad_second.data.data() + p * grad_second.c);
    }
}

void set_thread_limit(int threads) {
    if (threads > 0) omp_set_num_threads(threads);
}

void apply_thread_env() {
    if (const char* env = std::getenv("ANTN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) set_thread_limit(static_cast<int>(v));
    }
}

} // namespace antn::kernels
