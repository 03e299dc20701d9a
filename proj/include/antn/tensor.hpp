#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace antn {

/// Raised when shapes, layer descriptions, or options do not fit together.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when input data (files, label values) is malformed.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense n x h x w x c array of doubles, row-major (channels fastest).
///
/// Images are stored with n = 1 and c = 3 in [0,1]; per-pixel probability
/// fields use c = C; network activations use whatever the layer produces.
struct Tensor4 {
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_, double fill = 0.0)
        : n(n_), h(h_), w(w_), c(c_),
          data(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {
        if (n_ < 0 || h_ < 0 || w_ < 0 || c_ < 0) {
            throw ConfigError("Tensor4: negative dimension");
        }
    }

    static Tensor4 image(int h, int w, int c, double fill = 0.0) { return Tensor4(1, h, w, c, fill); }

    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] std::size_t pixels() const { return static_cast<std::size_t>(n) * h * w; }

    [[nodiscard]] std::size_t index(int b, int y, int x, int ch) const {
        return ((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch;
    }
    double& operator()(int b, int y, int x, int ch) { return data[index(b, y, x, ch)]; }
    double operator()(int b, int y, int x, int ch) const { return data[index(b, y, x, ch)]; }

    /// Channel vector of one pixel (flat pixel index over n*h*w).
    std::span<double> pixel(std::size_t p) { return {data.data() + p * c, static_cast<std::size_t>(c)}; }
    [[nodiscard]] std::span<const double> pixel(std::size_t p) const {
        return {data.data() + p * c, static_cast<std::size_t>(c)};
    }

    [[nodiscard]] bool same_shape(const Tensor4& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }
    [[nodiscard]] bool all_finite() const;
};

/// Per-pixel class probabilities, h x w x C (stored as a Tensor4 with n = 1).
using ProbabilityField = Tensor4;

/// Hard per-pixel class indices in {0..C-1}.
struct LabelField {
    int h = 0;
    int w = 0;
    std::vector<std::int32_t> labels;

    LabelField() = default;
    LabelField(int h_, int w_, std::int32_t fill = 0)
        : h(h_), w(w_), labels(static_cast<std::size_t>(h_) * w_, fill) {}

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    std::int32_t& operator()(int y, int x) { return labels[static_cast<std::size_t>(y) * w + x]; }
    std::int32_t operator()(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
    bool operator==(const LabelField&) const = default;

    /// Throws DataError if any label lies outside {0..classes-1}.
    void validate(int classes) const;
};

/// Per-pixel C x C row-stochastic matrices: at(p, y, k) = Pr_p(noisy = k | true = y).
struct TransitionField {
    int h = 0;
    int w = 0;
    int classes = 0;
    std::vector<double> data;

    TransitionField() = default;
    TransitionField(int h_, int w_, int classes_, double fill = 0.0)
        : h(h_), w(w_), classes(classes_),
          data(static_cast<std::size_t>(h_) * w_ * classes_ * classes_, fill) {}

    [[nodiscard]] std::size_t pixels() const { return static_cast<std::size_t>(h) * w; }
    double& at(std::size_t p, int y, int k) {
        return data[(p * classes + y) * classes + k];
    }
    [[nodiscard]] double at(std::size_t p, int y, int k) const {
        return data[(p * classes + y) * classes + k];
    }
};

/// Argmax per pixel, ties resolved to the lowest class index.
LabelField argmax_labels(const ProbabilityField& probs);

/// One-hot probability field for the given labels.
ProbabilityField one_hot(const LabelField& labels, int classes);

} // namespace antn
