#include "antn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace antn {

namespace {

constexpr double kMinStep = 1e-9;
constexpr double kDenominatorFloor = 1e-8;

struct Pattern {
    std::vector<std::uint8_t> bits;
    bool operator==(const Pattern&) const = default;
};

ExtendedTensor widen(const Tensor4& t) {
    ExtendedTensor e{t.n, t.h, t.w, t.c, std::vector<long double>(t.data.begin(), t.data.end())};
    return e;
}

// Serial long-double interpreter of the layer graph. Records the relu sign
// pattern and the maxpool winners so that probes crossing a kink can be detected.
ExtendedTensor forward_extended(const Network& net, const Tensor4& input, Pattern& pat) {
    pat.bits.clear();
    const auto& layers = net.layers();
    const ParamStore& params = net.params();
    std::vector<ExtendedTensor> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(widen(input));
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const LayerSpec& l = layers[li];
        const ExtendedTensor& x = acts.back();
        ExtendedTensor y{x.n, x.h, x.w, x.c, {}};
        switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: {
            const int k = l.kind == LayerKind::conv3x3 ? 3 : 1;
            const int r = k / 2;
            const auto w = params.weights(net.slot_of(li));
            const auto b = params.bias(net.slot_of(li));
            y.c = l.out_channels;
            y.data.assign(static_cast<std::size_t>(y.n) * y.h * y.w * y.c, 0.0L);
            for (int bi = 0; bi < x.n; ++bi)
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx)
                        for (int o = 0; o < y.c; ++o) {
                            long double s = b[static_cast<std::size_t>(o)];
                            for (int dy = 0; dy < k; ++dy)
                                for (int dx = 0; dx < k; ++dx) {
                                    const int sy = yy + dy - r, sx = xx + dx - r;
                                    if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                                    for (int i = 0; i < x.c; ++i) {
                                        s += x.at(bi, sy, sx, i) *
                                             w[((static_cast<std::size_t>(dy) * k + dx) * x.c + i) * y.c + o];
                                    }
                                }
                            y.at(bi, yy, xx, o) = s;
                        }
            break;
        }
        case LayerKind::relu:
            y.data = x.data;
            for (long double& v : y.data) {
                pat.bits.push_back(v > 0.0L ? 1 : 0);
                if (!(v > 0.0L)) v = 0.0L;
            }
            break;
        case LayerKind::maxpool2:
            y.h = x.h / 2;
            y.w = x.w / 2;
            y.data.assign(static_cast<std::size_t>(y.n) * y.h * y.w * y.c, 0.0L);
            for (int bi = 0; bi < x.n; ++bi)
                for (int yy = 0; yy < y.h; ++yy)
                    for (int xx = 0; xx < y.w; ++xx)
                        for (int ch = 0; ch < x.c; ++ch) {
                            std::uint8_t best = 0;
                            long double bv = x.at(bi, 2 * yy, 2 * xx, ch);
                            for (std::uint8_t q = 1; q < 4; ++q) {
                                const long double v = x.at(bi, 2 * yy + q / 2, 2 * xx + q % 2, ch);
                                if (v > bv) {
                                    bv = v;
                                    best = q;
                                }
                            }
                            pat.bits.push_back(best);
                            y.at(bi, yy, xx, ch) = bv;
                        }
            break;
        case LayerKind::upsample2:
            y.h = x.h * 2;
            y.w = x.w * 2;
            y.data.assign(static_cast<std::size_t>(y.n) * y.h * y.w * y.c, 0.0L);
            for (int bi = 0; bi < y.n; ++bi)
                for (int yy = 0; yy < y.h; ++yy)
                    for (int xx = 0; xx < y.w; ++xx)
                        for (int ch = 0; ch < y.c; ++ch) y.at(bi, yy, xx, ch) = x.at(bi, yy / 2, xx / 2, ch);
            break;
        case LayerKind::concat_skip: {
            const ExtendedTensor& s = acts[static_cast<std::size_t>(l.skip_from) + 1];
            y.c = x.c + s.c;
            y.data.reserve(static_cast<std::size_t>(y.n) * y.h * y.w * y.c);
            for (std::size_t p = 0; p < static_cast<std::size_t>(x.n) * x.h * x.w; ++p) {
                for (int ch = 0; ch < x.c; ++ch) y.data.push_back(x.data[p * x.c + ch]);
                for (int ch = 0; ch < s.c; ++ch) y.data.push_back(s.data[p * s.c + ch]);
            }
            break;
        }
        }
        acts.push_back(std::move(y));
    }
    return std::move(acts.back());
}

double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kDenominatorFloor});
}

// Central difference along one coordinate `slot`, shrinking the step while
// the probe straddles a kink. The quotient uses the step actually realised in
// double arithmetic.
template <typename Eval>
double probe(double& slot, double step, const Pattern& base, const Eval& eval, std::size_t& retries) {
    const double orig = slot;
    double h = step;
    bool retried = false;
    for (;;) {
        const double up = orig + h;
        const double down = orig - h;
        slot = up;
        Pattern pp, pm;
        const long double lp = eval(pp);
        slot = down;
        const long double lm = eval(pm);
        slot = orig;
        if ((pp == base && pm == base) || h / 10.0 < kMinStep) {
            if (retried) ++retries;
            return static_cast<double>((lp - lm) / (static_cast<long double>(up) - static_cast<long double>(down)));
        }
        h /= 10.0;
        retried = true;
    }
}

template <typename Coordinates>
GradCheckResult run_check(Network& net, const Tensor4& input, const OutputValue& value, double step,
                          const std::vector<double>& analytic, Coordinates coords,
                          const std::function<const Tensor4&()>& current_input) {
    GradCheckResult res;
    Pattern base;
    forward_extended(net, input, base);
    auto eval = [&](Pattern& pat) { return value(forward_extended(net, current_input(), pat)); };
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double numeric = probe(coords(i), step, base, eval, res.kink_retries);
        res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic[i], numeric));
        ++res.checked;
    }
    return res;
}

} // namespace

long double ExtendedTensor::at(int b, int y, int x, int ch) const {
    return data[((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch];
}

long double& ExtendedTensor::at(int b, int y, int x, int ch) {
    return data[((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch];
}

ExtendedTensor forward_extended(const Network& net, const Tensor4& input) {
    Pattern unused;
    return forward_extended(net, input, unused);
}

GradCheckResult finite_diff_check(Network& net, const Tensor4& input, const OutputLoss& loss, const OutputValue& value,
                                  double step) {
    net.params().zero_grad();
    Network::Trace trace;
    const Tensor4 out = net.forward(input, &trace);
    net.backward(trace, loss(out).grad);
    const std::vector<double> analytic(net.params().grads().begin(), net.params().grads().end());
    net.params().zero_grad();

    auto values = net.params().values();
    return run_check(
        net, input, value, step, analytic, [&](std::size_t i) -> double& { return values[i]; },
        [&]() -> const Tensor4& { return input; });
}

GradCheckResult finite_diff_input_check(Network& net, const Tensor4& input, const OutputLoss& loss,
                                        const OutputValue& value, double step) {
    net.params().zero_grad();
    Network::Trace trace;
    const Tensor4 out = net.forward(input, &trace);
    const Tensor4 analytic = net.backward(trace, loss(out).grad, true);
    net.params().zero_grad();

    Tensor4 x = input;
    return run_check(
        net, input, value, step, analytic.data, [&](std::size_t i) -> double& { return x.data[i]; },
        [&]() -> const Tensor4& { return x; });
}

} // namespace antn
