#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "antn/grad_check.hpp"
#include "antn/losses.hpp"
#include "antn/segnets.hpp"
#include "antn/tensor.hpp"
#include "antn/trainer.hpp"

namespace antn::testing {

inline Tensor4 random_tensor(std::mt19937_64& rng, int n, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor4 t(n, h, w, c);
    for (double& v : t.data) v = u(rng);
    return t;
}

/// Random per-pixel distributions; `concentration` < 1 gives peaky rows.
inline ProbabilityField random_simplex(std::mt19937_64& rng, int h, int w, int c, double concentration = 1.0) {
    std::gamma_distribution<double> g(concentration, 1.0);
    ProbabilityField p = Tensor4::image(h, w, c);
    for (std::size_t px = 0; px < p.pixels(); ++px) {
        double s = 0.0;
        for (int k = 0; k < c; ++k) s += p.data[px * c + k] = g(rng) + 1e-300;
        for (int k = 0; k < c; ++k) p.data[px * c + k] /= s;
    }
    return p;
}

inline LabelField random_labels(std::mt19937_64& rng, int h, int w, int classes) {
    std::uniform_int_distribution<int> u(0, classes - 1);
    LabelField l(h, w);
    for (auto& v : l.labels) v = u(rng);
    return l;
}

/// Puts every parameter in general position: small random biases so that no
/// pre-activation sits exactly on a relu kink.
inline void randomize_biases(ParamStore& params, std::mt19937_64& rng, double scale = 0.05) {
    std::normal_distribution<double> d(0.0, scale);
    for (std::size_t i = 0; i < params.slot_count(); ++i)
        for (double& b : params.bias(i)) b = d(rng);
}

/// Long-double log-softmax of channels [offset, offset + group) at pixel p.
inline long double log_softmax_at(const ExtendedTensor& z, std::size_t p, int offset, int group, int k) {
    const long double* row = z.data.data() + p * static_cast<std::size_t>(z.c) + offset;
    long double m = row[0];
    for (int j = 1; j < group; ++j) m = std::max(m, row[j]);
    long double s = 0.0L;
    for (int j = 0; j < group; ++j) s += std::exp(row[j] - m);
    return row[k] - m - std::log(s);
}

/// -(1/N) sum_n sum_y w[n,y] log softmax(z)[n,y], in long double.
inline long double wce_value(const ExtendedTensor& z, const ProbabilityField& weights) {
    const int C = weights.c;
    const std::size_t n = weights.pixels();
    long double total = 0.0L;
    for (std::size_t p = 0; p < n; ++p)
        for (int y = 0; y < C; ++y) total -= weights.data[p * C + y] * log_softmax_at(z, p, 0, C, y);
    return total / static_cast<long double>(n);
}

/// -(1/N) sum_n sum_y post[n,y] log T_n[y, obs_n], in long double, for either readout.
inline long double transition_value(const ExtendedTensor& z, ReadoutMode mode, const LabelField& observed,
                                    const ProbabilityField& posterior) {
    const int C = posterior.c;
    const std::size_t n = observed.size();
    long double total = 0.0L;
    for (std::size_t p = 0; p < n; ++p) {
        const int k = observed.labels[p];
        for (int y = 0; y < C; ++y) {
            long double logt;
            if (mode == ReadoutMode::row_softmax) {
                logt = log_softmax_at(z, p, y * C, C, k);
            } else {
                const long double v = z.data[p * static_cast<std::size_t>(z.c) + y * C + k];
                logt = -std::log1p(std::exp(-v));
            }
            total -= posterior.data[p * C + y] * logt;
        }
    }
    return total / static_cast<long double>(n);
}

/// Weighted cross-entropy of softmax(output) as a gradient-check loss.
inline OutputLoss wce_loss(const ProbabilityField& weights) {
    return [weights](const Tensor4& out) { return weighted_cross_entropy(softmax_groups(out, out.c), weights); };
}

inline OutputValue wce_ext(const ProbabilityField& weights) {
    return [weights](const ExtendedTensor& out) { return wce_value(out, weights); };
}

/// Straight-line Bayes posterior over y for one pixel: prior(y) * prod_s col_s(y), normalised.
inline std::vector<double> brute_posterior(const std::vector<double>& prior, const std::vector<std::vector<double>>& cols) {
    const std::size_t C = prior.size();
    std::vector<double> joint(C);
    double z = 0.0;
    for (std::size_t y = 0; y < C; ++y) {
        double v = prior[y];
        for (const auto& col : cols) v = v * col[y];
        joint[y] = v;
        z = z + v;
    }
    for (std::size_t y = 0; y < C; ++y) joint[y] = joint[y] / z;
    return joint;
}

/// Between-class score sum_k S_k^2 / W_k of a threshold tuple, by direct
/// summation over bins. Class k covers bins (t[k-1], t[k]].
inline double otsu_score_direct(const std::vector<double>& hist, const std::vector<int>& t) {
    double score = 0.0;
    int lo = 0;
    for (std::size_t k = 0; k <= t.size(); ++k) {
        const int hi = k < t.size() ? t[k] : static_cast<int>(hist.size()) - 1;
        double w = 0.0, s = 0.0;
        for (int b = lo; b <= hi; ++b) {
            w += hist[static_cast<std::size_t>(b)];
            s += b * hist[static_cast<std::size_t>(b)];
        }
        if (w > 0.0) score += s * s / w;
        lo = hi + 1;
    }
    return score;
}

/// Enumerates every strictly increasing tuple in lexicographic order and keeps
/// the first one whose score exceeds all earlier ones by more than `eps`
/// relative; returns it.
inline std::vector<int> otsu_oracle(const std::vector<double>& hist, int classes) {
    const int bins = static_cast<int>(hist.size());
    const int m = classes - 1;
    std::vector<int> t(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) t[static_cast<std::size_t>(i)] = i;
    std::vector<int> best;
    double best_score = -1.0;
    for (;;) {
        const double s = otsu_score_direct(hist, t);
        if (best.empty() || s > best_score * (1.0 + 1e-12) + 1e-300) {
            best_score = s;
            best = t;
        }
        int i = m - 1;
        while (i >= 0 && t[static_cast<std::size_t>(i)] == bins - 2 - (m - 1 - i)) --i;
        if (i < 0) break;
        ++t[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < m; ++j) t[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(j - 1)] + 1;
    }
    return best;
}

/// One-pixel EM problem with bare logit tables standing in for the three
/// networks: clean logits z (C), transition logits A1, A2 (C x C, row softmax).
struct LogitTableEm {
    int C;
    int obs1;
    int obs2;
    Tensor4 clean_logits;  // 1x1x1xC
    Tensor4 t1_logits;     // 1x1x1xC*C
    Tensor4 t2_logits;

    LogitTableEm(int classes, int o1, int o2, std::mt19937_64& rng)
        : C(classes), obs1(o1), obs2(o2),
          clean_logits(random_tensor(rng, 1, 1, 1, classes, -2.0, 2.0)),
          t1_logits(random_tensor(rng, 1, 1, 1, classes * classes, -2.0, 2.0)),
          t2_logits(random_tensor(rng, 1, 1, 1, classes * classes, -2.0, 2.0)) {}

    [[nodiscard]] ProbabilityField clean() const { return softmax_groups(clean_logits, C); }
    [[nodiscard]] ProbabilityField column(const Tensor4& t_logits, int obs) const {
        ProbabilityField col = Tensor4::image(1, 1, C);
        const Tensor4 t = softmax_groups(t_logits, C);
        for (int y = 0; y < C; ++y) col.data[static_cast<std::size_t>(y)] = t.data[static_cast<std::size_t>(y * C + obs)];
        return col;
    }
    [[nodiscard]] double L3() const {
        return marginal_log_likelihood(clean(), column(t1_logits, obs1), column(t2_logits, obs2), Likelihood::L3);
    }

    /// Transition M-step for both tables from single-source posteriors.
    void transition_step(double lr) {
        const ProbabilityField p = clean();
        const LabelField o1(1, 1, obs1), o2(1, 1, obs2);
        const ProbabilityField post1 = e_step_single(p, column(t1_logits, obs1)).posterior;
        const ProbabilityField post2 = e_step_single(p, column(t2_logits, obs2)).posterior;
        const LossAndGrad g1 =
            transition_observed_loss(softmax_groups(t1_logits, C), ReadoutMode::row_softmax, o1, post1);
        const LossAndGrad g2 =
            transition_observed_loss(softmax_groups(t2_logits, C), ReadoutMode::row_softmax, o2, post2);
        for (std::size_t i = 0; i < t1_logits.size(); ++i) {
            t1_logits.data[i] -= lr * g1.grad.data[i];
            t2_logits.data[i] -= lr * g2.grad.data[i];
        }
    }

    /// Clean M-step from the joint posterior.
    void clean_step(double lr) {
        const ProbabilityField p = clean();
        const ProbabilityField post = e_step_joint(p, column(t1_logits, obs1), column(t2_logits, obs2)).posterior;
        const LossAndGrad g = weighted_cross_entropy(p, post);
        for (std::size_t i = 0; i < clean_logits.size(); ++i) clean_logits.data[i] -= lr * g.grad.data[i];
    }
};

} // namespace antn::testing
