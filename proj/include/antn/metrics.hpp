#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "antn/segnets.hpp"
#include "antn/tensor.hpp"

namespace antn {

/// Returned by clean_noisy_ratio when every pixel agrees.
inline constexpr double kInfiniteRatio = std::numeric_limits<double>::infinity();

double pixel_accuracy(const LabelField& pred, const LabelField& truth);

/// -(1/N) sum_n log pred[n, reference_n], log clamped at 1e-12.
double cross_entropy_curve(const ProbabilityField& pred, const LabelField& reference);

/// Agreement counts between a posterior's argmax and a noisy label set.
struct AgreementCount {
    std::size_t agree = 0;
    std::size_t disagree = 0;

    AgreementCount& operator+=(const AgreementCount& o) {
        agree += o.agree;
        disagree += o.disagree;
        return *this;
    }
    /// agree / disagree, +inf when nothing disagrees.
    [[nodiscard]] double ratio() const {
        return disagree == 0 ? kInfiniteRatio : static_cast<double>(agree) / static_cast<double>(disagree);
    }
};

AgreementCount count_agreement(const LabelField& estimate, const LabelField& noisy);

/// #{argmax posterior == noisy} / #{argmax posterior != noisy}; ties in the
/// argmax go to the lowest class index.
double clean_noisy_ratio(const ProbabilityField& posterior, const LabelField& noisy);

/// C x C matrix, rows = true class, columns = noisy class.
struct TransitionMatrix {
    int classes = 0;
    std::vector<double> values;
    std::vector<bool> row_defined;

    TransitionMatrix() = default;
    explicit TransitionMatrix(int c) : classes(c), values(static_cast<std::size_t>(c) * c, 0.0), row_defined(c, true) {}
    double& operator()(int y, int k) { return values[static_cast<std::size_t>(y) * classes + k]; }
    double operator()(int y, int k) const { return values[static_cast<std::size_t>(y) * classes + k]; }
};

/// Empirical transition counts pooled over all given label pairs. Rows whose
/// true class never occurs are flagged undefined.
TransitionMatrix expected_transition(std::span<const LabelField> clean, std::span<const LabelField> noisy, int classes);
TransitionMatrix expected_transition(const LabelField& clean, const LabelField& noisy, int classes);

/// Mean of the per-pixel transition matrices over all pixels of all images.
/// Uniform-remainder nets need the observed labels for each image.
TransitionMatrix average_transition(const TransitionNet& net, std::span<const Tensor4> images,
                                    std::span<const LabelField> observed = {});
/// Mean of per-pixel matrices already computed.
TransitionMatrix average_transition(std::span<const TransitionField> fields);

/// Frobenius distance over rows defined in both matrices.
double frobenius_distance(const TransitionMatrix& a, const TransitionMatrix& b);

/// Within-segment CIELAB scatter divided by the pixel-pair-weighted distance
/// between segment means (lower is better). nullopt when fewer than two
/// segments are non-empty; +inf when all segment means coincide.
std::optional<double> uniformity_disparity(const Tensor4& image, const LabelField& seg);

} // namespace antn
