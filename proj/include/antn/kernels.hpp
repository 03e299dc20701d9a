#pragma once

// Layer kernels for the encoder-decoder networks.
//
// Two implementations with identical contracts:
//   antn::kernels            OpenMP-parallel, cache-friendly loop order (used by training)
//   antn::kernels::reference straightforward serial loops (kept for tests and the benchmark)
//
// Convolution weights are laid out [ky][kx][in][out], bias [out], padding is
// "same" with zeros outside the image. The parallel kernels partition work so
// that every output element is accumulated by exactly one thread in a fixed
// order; results are bit-identical for any thread count.

#include <span>

#include "antn/tensor.hpp"

namespace antn::kernels {

struct ConvShape {
    int kernel = 3;  // 1 or 3
    int in_channels = 0;
    int out_channels = 0;

    [[nodiscard]] std::size_t weight_count() const {
        return static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels;
    }
    void validate() const;
};

Tensor4 conv2d_forward(const Tensor4& input, std::span<const double> weights, std::span<const double> bias,
                       const ConvShape& shape);

/// Accumulates into grad_weights / grad_bias; writes grad_input when non-null.
void conv2d_backward(const Tensor4& input, std::span<const double> weights, const ConvShape& shape,
                     const Tensor4& upstream, Tensor4* grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias);

Tensor4 relu_forward(const Tensor4& input);
/// Gradient through relu given the forward *output*.
Tensor4 relu_backward(const Tensor4& output, const Tensor4& upstream);

/// 2x2 max pooling, stride 2. Requires even h and w.
Tensor4 maxpool2_forward(const Tensor4& input);
/// Routes each window's gradient to its first maximal element (row-major scan).
Tensor4 maxpool2_backward(const Tensor4& input, const Tensor4& upstream);

/// Nearest-neighbour 2x upsampling.
Tensor4 upsample2_forward(const Tensor4& input);
Tensor4 upsample2_backward(const Tensor4& upstream);

/// Stacks channels: [first..., second...].
Tensor4 concat_channels(const Tensor4& first, const Tensor4& second);
/// Splits an upstream gradient of a concat back into its two parts.
void split_channels(const Tensor4& upstream, int first_channels, Tensor4& grad_first, Tensor4& grad_second);

namespace reference {

Tensor4 conv2d_forward(const Tensor4& input, std::span<const double> weights, std::span<const double> bias,
                       const ConvShape& shape);
void conv2d_backward(const Tensor4& input, std::span<const double> weights, const ConvShape& shape,
                     const Tensor4& upstream, Tensor4* grad_input, std::span<double> grad_weights,
                     std::span<double> grad_bias);
Tensor4 maxpool2_forward(const Tensor4& input);
Tensor4 maxpool2_backward(const Tensor4& input, const Tensor4& upstream);
Tensor4 upsample2_forward(const Tensor4& input);
Tensor4 upsample2_backward(const Tensor4& upstream);

} // namespace reference

/// Caps the number of OpenMP worker threads; a value <= 0 leaves the runtime default.
void set_thread_limit(int threads);
/// Applies ANTN_THREADS from the environment if set.
void apply_thread_env();

} // namespace antn::kernels
