#pragma once

// The three component networks: a clean-label predictor Pr(y|X) and per-source
// pixel-wise transition predictors Pr_n(noisy | y, X). All share the same
// mini encoder-decoder trunk and differ only in the head and its normalisation.

#include <cstdint>
#include <random>

#include "antn/losses.hpp"
#include "antn/network.hpp"

namespace antn {

struct MiniUNetSpec {
    int base_filters = 16;
    int depth = 2;  // resolution levels; fixed
    int in_channels = 3;
    int num_classes = 4;

    void validate() const;
    bool operator==(const MiniUNetSpec&) const = default;
};

/// Two-level encoder-decoder: [conv3 relu conv3 relu] pool [conv3 relu conv3 relu]
/// upsample concat-skip [conv3 relu conv3 relu] conv1 -> head_channels.
std::vector<LayerSpec> mini_unet_layers(const MiniUNetSpec& spec, int head_channels);

enum class ReadoutMode : std::uint8_t { row_softmax = 0, uniform_remainder = 1 };

/// Forward state kept for a later backward pass.
struct NetPass {
    Network::Trace trace;
    Tensor4 out;  // normalised head output (softmax probabilities or sigmoids)
};

class CleanNet {
public:
    CleanNet() = default;
    CleanNet(const MiniUNetSpec& spec, std::uint64_t seed);

    [[nodiscard]] const MiniUNetSpec& spec() const { return spec_; }
    [[nodiscard]] int classes() const { return spec_.num_classes; }
    Network& network() { return net_; }
    [[nodiscard]] const Network& network() const { return net_; }
    ParamStore& params() { return net_.params(); }
    [[nodiscard]] const ParamStore& params() const { return net_.params(); }

    /// Per-pixel class distribution (h x w x C).
    [[nodiscard]] ProbabilityField predict(const Tensor4& image) const;
    [[nodiscard]] NetPass forward(const Tensor4& image) const;
    /// Accumulates parameter gradients from a gradient with respect to the head logits.
    void backward(const NetPass& pass, const Tensor4& grad_logits);

private:
    MiniUNetSpec spec_;
    Network net_;
};

class TransitionNet {
public:
    TransitionNet() = default;
    TransitionNet(const MiniUNetSpec& spec, ReadoutMode mode, std::uint64_t seed);

    [[nodiscard]] const MiniUNetSpec& spec() const { return spec_; }
    [[nodiscard]] ReadoutMode mode() const { return mode_; }
    [[nodiscard]] int classes() const { return spec_.num_classes; }
    Network& network() { return net_; }
    [[nodiscard]] const Network& network() const { return net_; }
    ParamStore& params() { return net_.params(); }
    [[nodiscard]] const ParamStore& params() const { return net_.params(); }

    /// Per-pixel row-stochastic C x C matrices. Uniform-remainder mode needs the
    /// observed noisy labels to place p on the observed column.
    [[nodiscard]] TransitionField predict(const Tensor4& image, const LabelField* observed = nullptr) const;
    [[nodiscard]] NetPass forward(const Tensor4& image) const;
    /// Pr_n(observed | y) for every y, read from a forward pass.
    [[nodiscard]] ProbabilityField observed_column(const NetPass& pass, const LabelField& observed) const;
    /// -(1/N) sum_n sum_y posterior[n,y] log Pr_n(observed_n | y) and its gradient
    /// with respect to the head logits.
    [[nodiscard]] LossAndGrad observed_loss(const NetPass& pass, const LabelField& observed,
                                            const ProbabilityField& posterior) const;
    void backward(const NetPass& pass, const Tensor4& grad_logits);

    /// Sets the head bias so that at zero head weights every row puts extra
    /// mass on its own class: row-softmax biases the diagonal logits by
    /// `logit`; uniform-remainder sets the diagonal sigmoids to +logit and the
    /// rest to -logit.
    void set_diagonal_bias(double logit);
    /// Copies every layer below the head from `clean` and zeroes the head weights.
    void copy_trunk_from(const CleanNet& clean);

private:
    MiniUNetSpec spec_;
    ReadoutMode mode_ = ReadoutMode::row_softmax;
    Network net_;
};

/// Converts a head output (C*C channels per pixel) to a TransitionField.
TransitionField transition_field_from(const Tensor4& head_out, int classes, ReadoutMode mode,
                                      const LabelField* observed);

/// Observed-column loss on a normalised transition head output (C*C channels):
/// -(1/N) sum_n sum_y posterior[n,y] log Pr_n(observed_n | y), with the gradient
/// with respect to the head logits for the given readout.
LossAndGrad transition_observed_loss(const Tensor4& head_out, ReadoutMode mode, const LabelField& observed,
                                     const ProbabilityField& posterior);

/// Column [Pr_n(observed|y=0), ..., Pr_n(observed|y=C-1)] at every pixel.
ProbabilityField observed_column(const TransitionField& tf, const LabelField& noisy);

/// Uniform-remainder row value: p at the observed column, (1-p)/(C-1) elsewhere.
inline double remainder_value(double p, int classes) { return (1.0 - p) / static_cast<double>(classes - 1); }

} // namespace antn
