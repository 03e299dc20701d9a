#pragma once

#include <functional>

#include "antn/losses.hpp"
#include "antn/network.hpp"

namespace antn {

/// Maps a network output to a scalar loss and its gradient with respect to that output.
using OutputLoss = std::function<LossAndGrad(const Tensor4& output)>;

/// Network output evaluated in long double.
struct ExtendedTensor {
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<long double> data;

    [[nodiscard]] long double at(int b, int y, int x, int ch) const;
    long double& at(int b, int y, int x, int ch);
};

/// The same loss as an OutputLoss, evaluated on an extended-precision output.
using OutputValue = std::function<long double(const ExtendedTensor& output)>;

/// Serial long-double evaluation of the whole layer graph.
ExtendedTensor forward_extended(const Network& net, const Tensor4& input);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose +-step crossed a relu/maxpool switch and were re-probed with a smaller step.
    std::size_t kink_retries = 0;
};

/// Central finite differences (step 1e-5) against the analytic parameter
/// gradients. Relative error per coordinate is |a - b| / max(|a|, |b|, 1e-8).
///
/// The difference quotient is computed from a separate long-double forward
/// pass so that its rounding error stays well below the tolerance even for
/// gradients near the 1e-8 floor. A probe whose +-step flips any relu sign or
/// maxpool winner is not measuring a derivative; such coordinates are
/// re-probed with the step divided by 10 (down to 1e-9) until the activation
/// pattern is stable on both sides.
GradCheckResult finite_diff_check(Network& net, const Tensor4& input, const OutputLoss& loss,
                                  const OutputValue& value, double step = 1e-5);

/// Same check for the gradient with respect to the network input.
GradCheckResult finite_diff_input_check(Network& net, const Tensor4& input, const OutputLoss& loss,
                                        const OutputValue& value, double step = 1e-5);

} // namespace antn
