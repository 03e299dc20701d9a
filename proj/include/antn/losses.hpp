#pragma once

#include "antn/tensor.hpp"

namespace antn {

inline constexpr double kLogClamp = 1e-12;

/// Softmax over consecutive groups of `group` channels at every pixel,
/// computed with max subtraction.
Tensor4 softmax_groups(const Tensor4& logits, int group);

/// Elementwise logistic function.
Tensor4 sigmoid(const Tensor4& logits);

/// log(max(p, 1e-12)).
double clamped_log(double p);

struct LossAndGrad {
    double loss = 0.0;
    Tensor4 grad;  // with respect to the pre-softmax logits
};

/// -(1/N) sum_n sum_y weights[n,y] * log pred[n,y], where pred = softmax(logits)
/// over all C channels and each weights row sums to 1.
LossAndGrad weighted_cross_entropy(const ProbabilityField& pred, const ProbabilityField& weights);

/// Standard per-pixel cross-entropy against hard labels (one-hot weights).
LossAndGrad label_cross_entropy(const ProbabilityField& pred, const LabelField& labels);

} // namespace antn
