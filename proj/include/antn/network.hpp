#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "antn/kernels.hpp"
#include "antn/tensor.hpp"

namespace antn {

enum class LayerKind : std::uint8_t { conv3x3, conv1x1, relu, maxpool2, upsample2, concat_skip };

std::string_view to_string(LayerKind kind);

/// One layer of a feed-forward graph. Convolutions use same-zero padding.
/// concat_skip appends the output of layer `skip_from` after the current
/// activation's channels.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int in_channels = 0;
    int out_channels = 0;
    int skip_from = -1;

    [[nodiscard]] bool has_params() const { return kind == LayerKind::conv3x3 || kind == LayerKind::conv1x1; }
    [[nodiscard]] kernels::ConvShape conv_shape() const {
        return {kind == LayerKind::conv3x3 ? 3 : 1, in_channels, out_channels};
    }
};

/// Flat parameter storage with per-layer views and matching gradient accumulators.
class ParamStore {
public:
    struct Slot {
        std::size_t weight_offset = 0;
        std::size_t weight_count = 0;
        std::size_t bias_offset = 0;
        std::size_t bias_count = 0;
    };

    /// Registers a layer's weight/bias block; returns the slot index.
    std::size_t add(std::size_t weight_count, std::size_t bias_count);

    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] const Slot& slot(std::size_t i) const { return slots_[i]; }
    [[nodiscard]] std::size_t slot_count() const { return slots_.size(); }

    std::span<double> values() { return values_; }
    [[nodiscard]] std::span<const double> values() const { return values_; }
    std::span<double> grads() { return grads_; }
    [[nodiscard]] std::span<const double> grads() const { return grads_; }

    std::span<double> weights(std::size_t i) { return {values_.data() + slots_[i].weight_offset, slots_[i].weight_count}; }
    [[nodiscard]] std::span<const double> weights(std::size_t i) const {
        return {values_.data() + slots_[i].weight_offset, slots_[i].weight_count};
    }
    std::span<double> bias(std::size_t i) { return {values_.data() + slots_[i].bias_offset, slots_[i].bias_count}; }
    [[nodiscard]] std::span<const double> bias(std::size_t i) const {
        return {values_.data() + slots_[i].bias_offset, slots_[i].bias_count};
    }
    std::span<double> weight_grads(std::size_t i) { return {grads_.data() + slots_[i].weight_offset, slots_[i].weight_count}; }
    std::span<double> bias_grads(std::size_t i) { return {grads_.data() + slots_[i].bias_offset, slots_[i].bias_count}; }

    void zero_grad();
    /// Replaces all parameter values; the count must match.
    void assign(std::span<const double> values);

private:
    std::vector<Slot> slots_;
    std::vector<double> values_;
    std::vector<double> grads_;
};

/// p <- p - lr * grad for every parameter, then zeroes the gradients.
void sgd_step(ParamStore& params, double lr);

/// Fixed layer graph with exact reverse-mode gradients.
class Network {
public:
    /// Activations recorded by forward(); acts[0] is the input, acts[i+1] the output of layer i.
    struct Trace {
        std::vector<Tensor4> acts;
    };

    Network() = default;
    Network(std::vector<LayerSpec> layers, int input_channels);

    [[nodiscard]] const std::vector<LayerSpec>& layers() const { return layers_; }
    [[nodiscard]] int input_channels() const { return input_channels_; }
    [[nodiscard]] int output_channels() const;
    /// Number of 2x poolings not undone before the output (spatial dims must divide 2^depth).
    [[nodiscard]] int pool_depth() const { return pool_depth_; }

    ParamStore& params() { return params_; }
    [[nodiscard]] const ParamStore& params() const { return params_; }
    /// Parameter slot of a convolution layer.
    [[nodiscard]] std::size_t slot_of(std::size_t layer) const { return slot_of_[layer]; }

    /// He-normal weights, zero biases.
    void init_he(std::mt19937_64& rng);

    Tensor4 forward(const Tensor4& input, Trace* trace = nullptr) const;
    /// Accumulates parameter gradients. Returns the gradient with respect to the
    /// input when want_input_grad is set (an empty tensor otherwise if the first
    /// layer is a convolution).
    Tensor4 backward(const Trace& trace, const Tensor4& grad_output, bool want_input_grad = false);

private:
    std::vector<LayerSpec> layers_;
    std::vector<std::size_t> slot_of_;  // param slot per layer (unused for parameter-free layers)
    int input_channels_ = 0;
    int pool_depth_ = 0;
    ParamStore params_;
};

} // namespace antn
