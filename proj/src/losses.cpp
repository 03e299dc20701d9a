#include "antn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace antn {

Tensor4 softmax_groups(const Tensor4& logits, int group) {
    if (group <= 0 || logits.c % group != 0) {
        throw ConfigError("softmax: channel count " + std::to_string(logits.c) + " not divisible by group " +
                          std::to_string(group));
    }
    Tensor4 out = logits;
    const std::size_t groups = logits.size() / group;
    double* d = out.data.data();
    for (std::size_t g = 0; g < groups; ++g) {
        double* z = d + g * group;
        const double m = *std::max_element(z, z + group);
        double s = 0.0;
        for (int k = 0; k < group; ++k) {
            z[k] = std::exp(z[k] - m);
            s += z[k];
        }
        for (int k = 0; k < group; ++k) z[k] /= s;
    }
    return out;
}

Tensor4 sigmoid(const Tensor4& logits) {
    Tensor4 out = logits;
    for (double& v : out.data) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return out;
}

double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }

LossAndGrad weighted_cross_entropy(const ProbabilityField& pred, const ProbabilityField& weights) {
    if (!pred.same_shape(weights)) throw ConfigError("weighted_cross_entropy: shape mismatch");
    LossAndGrad r;
    r.grad = Tensor4(pred.n, pred.h, pred.w, pred.c);
    const std::size_t n = pred.pixels();
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        auto pr = pred.pixel(p);
        auto wt = weights.pixel(p);
        auto g = r.grad.pixel(p);
        double wsum = 0.0;
        double acc = 0.0;
        for (int k = 0; k < pred.c; ++k) {
            acc -= wt[k] * clamped_log(pr[k]);
            wsum += wt[k];
        }
        total += acc;
        for (int k = 0; k < pred.c; ++k) g[k] = (pr[k] * wsum - wt[k]) * inv_n;
    }
    r.loss = total * inv_n;
    return r;
}

LossAndGrad label_cross_entropy(const ProbabilityField& pred, const LabelField& labels) {
    if (pred.h != labels.h || pred.w != labels.w) throw ConfigError("label_cross_entropy: shape mismatch");
    labels.validate(pred.c);
    LossAndGrad r;
    r.grad = pred;
    const std::size_t n = pred.pixels();
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const int y = labels.labels[p];
        auto g = r.grad.pixel(p);
        total -= clamped_log(g[y]);
        g[y] -= 1.0;
        for (double& v : g) v *= inv_n;
    }
    r.loss = total * inv_n;
    return r;
}

} // namespace antn
