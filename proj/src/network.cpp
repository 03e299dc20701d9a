#include "antn/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace antn {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::conv1x1: return "conv1x1";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::upsample2: return "upsample2";
    case LayerKind::concat_skip: return "concat-skip";
    }
    return "unknown";
}

std::size_t ParamStore::add(std::size_t weight_count, std::size_t bias_count) {
    Slot s;
    s.weight_offset = values_.size();
    s.weight_count = weight_count;
    s.bias_offset = s.weight_offset + weight_count;
    s.bias_count = bias_count;
    values_.resize(values_.size() + weight_count + bias_count, 0.0);
    grads_.resize(values_.size(), 0.0);
    slots_.push_back(s);
    return slots_.size() - 1;
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void ParamStore::assign(std::span<const double> values) {
    if (values.size() != values_.size()) {
        throw ConfigError("parameter count mismatch: expected " + std::to_string(values_.size()) + ", got " +
                          std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), values_.begin());
}

void sgd_step(ParamStore& params, double lr) {
    auto v = params.values();
    auto g = params.grads();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    params.zero_grad();
}

Network::Network(std::vector<LayerSpec> layers, int input_channels)
    : layers_(std::move(layers)), slot_of_(layers_.size(), 0), input_channels_(input_channels) {
    if (input_channels <= 0) throw ConfigError("network: input channel count must be positive");
    std::vector<int> channels_after(layers_.size(), 0);
    std::vector<int> depth_after(layers_.size(), 0);
    int ch = input_channels;
    int depth = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        LayerSpec& l = layers_[i];
        const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
        if (l.in_channels != ch) {
            throw ConfigError(where + ": declared " + std::to_string(l.in_channels) + " input channels, receives " +
                              std::to_string(ch));
        }
        switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
            l.conv_shape().validate();
            slot_of_[i] = params_.add(l.conv_shape().weight_count(), static_cast<std::size_t>(l.out_channels));
            break;
        case LayerKind::relu:
        case LayerKind::upsample2:
        case LayerKind::maxpool2:
            if (l.out_channels != l.in_channels) throw ConfigError(where + ": must preserve channel count");
            if (l.kind == LayerKind::maxpool2) ++depth;
            if (l.kind == LayerKind::upsample2) --depth;
            break;
        case LayerKind::concat_skip: {
            if (l.skip_from < 0 || static_cast<std::size_t>(l.skip_from) >= i) {
                throw ConfigError(where + ": skip source must be an earlier layer");
            }
            if (depth_after[static_cast<std::size_t>(l.skip_from)] != depth) {
                throw ConfigError(where + ": skip source has a different resolution");
            }
            const int expect = l.in_channels + channels_after[static_cast<std::size_t>(l.skip_from)];
            if (l.out_channels != expect) throw ConfigError(where + ": output channels must equal the concatenation");
            break;
        }
        }
        ch = l.out_channels;
        channels_after[i] = ch;
        depth_after[i] = depth;
        pool_depth_ = std::max(pool_depth_, depth);
    }
}

int Network::output_channels() const { return layers_.empty() ? input_channels_ : layers_.back().out_channels; }

void Network::init_he(std::mt19937_64& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        if (!l.has_params()) continue;
        const auto shape = l.conv_shape();
        const double fan_in = static_cast<double>(shape.kernel * shape.kernel * shape.in_channels);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (double& w : params_.weights(slot_of_[i])) w = dist(rng);
        for (double& b : params_.bias(slot_of_[i])) b = 0.0;
    }
}

Tensor4 Network::forward(const Tensor4& input, Trace* trace) const {
    if (input.c != input_channels_) {
        throw ConfigError("network expects " + std::to_string(input_channels_) + " input channels, got " +
                          std::to_string(input.c));
    }
    const int div = 1 << pool_depth_;
    if (input.h % div != 0 || input.w % div != 0) {
        throw ConfigError("input dims " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                          " not divisible by " + std::to_string(div));
    }
    Trace local;
    Trace& t = trace != nullptr ? *trace : local;
    t.acts.clear();
    t.acts.reserve(layers_.size() + 1);
    t.acts.push_back(input);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        const Tensor4& x = t.acts.back();
        Tensor4 y;
        switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
            y = kernels::conv2d_forward(x, params_.weights(slot_of_[i]), params_.bias(slot_of_[i]), l.conv_shape());
            break;
        case LayerKind::relu: y = kernels::relu_forward(x); break;
        case LayerKind::maxpool2: y = kernels::maxpool2_forward(x); break;
        case LayerKind::upsample2: y = kernels::upsample2_forward(x); break;
        case LayerKind::concat_skip:
            y = kernels::concat_channels(x, t.acts[static_cast<std::size_t>(l.skip_from) + 1]);
            break;
        }
        t.acts.push_back(std::move(y));
    }
    return t.acts.back();
}

Tensor4 Network::backward(const Trace& trace, const Tensor4& grad_output, bool want_input_grad) {
    if (trace.acts.size() != layers_.size() + 1) throw ConfigError("backward: trace does not match network");
    if (!grad_output.same_shape(trace.acts.back())) throw ConfigError("backward: gradient shape mismatch");
    std::vector<Tensor4> skip_grad(layers_.size() + 1);
    Tensor4 g = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        if (!skip_grad[i + 1].data.empty()) {
            auto& s = skip_grad[i + 1].data;
            for (std::size_t k = 0; k < s.size(); ++k) g.data[k] += s[k];
        }
        const LayerSpec& l = layers_[i];
        const Tensor4& x = trace.acts[i];
        switch (l.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1: {
            Tensor4 gin;
            const std::size_t s = slot_of_[i];
            kernels::conv2d_backward(x, params_.weights(s), l.conv_shape(), g, (i == 0 && !want_input_grad) ? nullptr : &gin,
                                     params_.weight_grads(s), params_.bias_grads(s));
            g = std::move(gin);
            break;
        }
        case LayerKind::relu: g = kernels::relu_backward(trace.acts[i + 1], g); break;
        case LayerKind::maxpool2: g = kernels::maxpool2_backward(x, g); break;
        case LayerKind::upsample2: g = kernels::upsample2_backward(g); break;
        case LayerKind::concat_skip: {
            Tensor4 first, second;
            kernels::split_channels(g, l.in_channels, first, second);
            Tensor4& dst = skip_grad[static_cast<std::size_t>(l.skip_from) + 1];
            if (dst.data.empty()) {
                dst = std::move(second);
            } else {
                for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += second.data[k];
            }
            g = std::move(first);
            break;
        }
        }
    }
    return g;
}

} // namespace antn
