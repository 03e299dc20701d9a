// Serial reference kernels: direct transcriptions of the defining sums.

#include "antn/kernels.hpp"

#include <string>

namespace antn::kernels::reference {

namespace {

double at_or_zero(const Tensor4& t, int b, int y, int x, int ch) {
    if (y < 0 || y >= t.h || x < 0 || x >= t.w) return 0.0;
    return t(b, y, x, ch);
}

std::size_t widx(const ConvShape& s, int ky, int kx, int i, int o) {
    return ((static_cast<std::size_t>(ky) * s.kernel + kx) * s.in_channels + i) * s.out_channels + o;
}

} // namespace

Tensor4 conv2d_forward(const Tensor4& input, std::span<const double> weights, std::span<const double> bias,
                       const ConvShape& shape) {
    shape.validate();
    if (input.c != shape.in_channels || weights.size() != shape.weight_count() ||
        bias.size() != static_cast<std::size_t>(shape.out_channels)) {
        throw ConfigError("reference conv: shape mismatch");
    }
    const int r = shape.kernel / 2;
    Tensor4 out(input.n, input.h, input.w, shape.out_channels);
    for (int b = 0; b < input.n; ++b)
        for (int o = 0; o < shape.out_channels; ++o)
            for (int y = 0; y < input.h; ++y)
                for (int x = 0; x < input.w; ++x) {
                    double s = bias[o];
                    for (int ky = 0; ky < shape.kernel; ++ky)
                        for (int kx = 0; kx < shape.kernel; ++kx)
                            for (int i = 0; i < shape.in_channels; ++i)
                                s += at_or_zero(input, b, y + ky - r, x + kx - r, i) * weights[widx(shape, ky, kx, i, o)];
                    out(b, y, x, o) = s;
                }
    return out;
}

void conv2d_backward(const Tensor4& input, std::span<const double> weights, const ConvShape& shape,
                     const Tensor4& upstream, Tensor4* grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias) {
    shape.validate();
    if (input.c != shape.in_channels || upstream.c != shape.out_channels || upstream.h != input.h ||
        upstream.w != input.w || upstream.n != input.n || grad_weights.size() != shape.weight_count()) {
        throw ConfigError("reference conv backward: shape mismatch");
    }
    const int r = shape.kernel / 2;
    if (grad_input != nullptr) *grad_input = Tensor4(input.n, input.h, input.w, input.c);
    for (int b = 0; b < input.n; ++b)
        for (int y = 0; y < input.h; ++y)
            for (int x = 0; x < input.w; ++x)
                for (int o = 0; o < shape.out_channels; ++o) {
                    const double g = upstream(b, y, x, o);
                    grad_bias[o] += g;
                    for (int ky = 0; ky < shape.kernel; ++ky)
                        for (int kx = 0; kx < shape.kernel; ++kx) {
                            const int iy = y + ky - r;
                            const int ix = x + kx - r;
                            if (iy < 0 || iy >= input.h || ix < 0 || ix >= input.w) continue;
                            for (int i = 0; i < shape.in_channels; ++i) {
                                grad_weights[widx(shape, ky, kx, i, o)] += input(b, iy, ix, i) * g;
                                if (grad_input != nullptr) {
                                    (*grad_input)(b, iy, ix, i) += weights[widx(shape, ky, kx, i, o)] * g;
                                }
                            }
                        }
                }
}

Tensor4 maxpool2_forward(const Tensor4& input) {
    if (input.h % 2 || input.w % 2) throw ConfigError("reference maxpool2: odd dims");
    Tensor4 out(input.n, input.h / 2, input.w / 2, input.c);
    for (int b = 0; b < out.n; ++b)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                for (int ch = 0; ch < out.c; ++ch) {
                    double m = input(b, 2 * y, 2 * x, ch);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            if (input(b, 2 * y + dy, 2 * x + dx, ch) > m) m = input(b, 2 * y + dy, 2 * x + dx, ch);
                    out(b, y, x, ch) = m;
                }
    return out;
}

Tensor4 maxpool2_backward(const Tensor4& input, const Tensor4& upstream) {
    if (input.h % 2 || input.w % 2) throw ConfigError("reference maxpool2 backward: odd dims");
    Tensor4 g(input.n, input.h, input.w, input.c);
    for (int b = 0; b < upstream.n; ++b)
        for (int y = 0; y < upstream.h; ++y)
            for (int x = 0; x < upstream.w; ++x)
                for (int ch = 0; ch < upstream.c; ++ch) {
                    int best_dy = 0, best_dx = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            if (input(b, 2 * y + dy, 2 * x + dx, ch) > input(b, 2 * y + best_dy, 2 * x + best_dx, ch)) {
                                best_dy = dy;
                                best_dx = dx;
                            }
                    g(b, 2 * y + best_dy, 2 * x + best_dx, ch) += upstream(b, y, x, ch);
                }
    return g;
}

Tensor4 upsample2_forward(const Tensor4& input) {
    Tensor4 out(input.n, input.h * 2, input.w * 2, input.c);
    for (int b = 0; b < out.n; ++b)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                for (int ch = 0; ch < out.c; ++ch) out(b, y, x, ch) = input(b, y / 2, x / 2, ch);
    return out;
}

Tensor4 upsample2_backward(const Tensor4& upstream) {
    if (upstream.h % 2 || upstream.w % 2) throw ConfigError("reference upsample2 backward: odd dims");
    Tensor4 g(upstream.n, upstream.h / 2, upstream.w / 2, upstream.c);
    for (int b = 0; b < upstream.n; ++b)
        for (int y = 0; y < upstream.h; ++y)
            for (int x = 0; x < upstream.w; ++x)
                for (int ch = 0; ch < upstream.c; ++ch) g(b, y / 2, x / 2, ch) += upstream(b, y, x, ch);
    return g;
}

} // namespace antn::kernels::reference
