#include "antn/segnets.hpp"

#include <algorithm>
#include <string>

namespace antn {

void MiniUNetSpec::validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (num_classes > 256) throw ConfigError("num_classes must be <= 256");
    if (base_filters < 2) throw ConfigError("base_filters must be >= 2");
    if (depth != 2) throw ConfigError("only depth 2 is supported");
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
}

std::vector<LayerSpec> mini_unet_layers(const MiniUNetSpec& spec, int head_channels) {
    spec.validate();
    const int f = spec.base_filters;
    using K = LayerKind;
    return {
        {K::conv3x3, spec.in_channels, f},
        {K::relu, f, f},
        {K::conv3x3, f, f},
        {K::relu, f, f},  // 3: skip source
        {K::maxpool2, f, f},
        {K::conv3x3, f, 2 * f},
        {K::relu, 2 * f, 2 * f},
        {K::conv3x3, 2 * f, 2 * f},
        {K::relu, 2 * f, 2 * f},
        {K::upsample2, 2 * f, 2 * f},
        {K::concat_skip, 2 * f, 3 * f, 3},
        {K::conv3x3, 3 * f, f},
        {K::relu, f, f},
        {K::conv3x3, f, f},
        {K::relu, f, f},
        {K::conv1x1, f, head_channels},
    };
}

namespace {

std::mt19937_64 seeded(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

void check_image(const Tensor4& image) {
    if (image.n != 1) throw ConfigError("expected a single image (n = 1)");
    if (image.h % 2 != 0 || image.w % 2 != 0) {
        throw ConfigError("image dims " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                          " must be divisible by 2");
    }
}

} // namespace

CleanNet::CleanNet(const MiniUNetSpec& spec, std::uint64_t seed)
    : spec_(spec), net_(mini_unet_layers(spec, spec.num_classes), spec.in_channels) {
    auto rng = seeded(seed);
    net_.init_he(rng);
}

NetPass CleanNet::forward(const Tensor4& image) const {
    check_image(image);
    NetPass pass;
    const Tensor4 logits = net_.forward(image, &pass.trace);
    pass.out = softmax_groups(logits, spec_.num_classes);
    return pass;
}

ProbabilityField CleanNet::predict(const Tensor4& image) const { return forward(image).out; }

void CleanNet::backward(const NetPass& pass, const Tensor4& grad_logits) { net_.backward(pass.trace, grad_logits); }

TransitionNet::TransitionNet(const MiniUNetSpec& spec, ReadoutMode mode, std::uint64_t seed)
    : spec_(spec), mode_(mode), net_(mini_unet_layers(spec, spec.num_classes * spec.num_classes), spec.in_channels) {
    auto rng = seeded(seed);
    net_.init_he(rng);
}

void TransitionNet::set_diagonal_bias(double logit) {
    const int C = spec_.num_classes;
    auto b = net_.params().bias(net_.params().slot_count() - 1);
    for (int y = 0; y < C; ++y)
        for (int k = 0; k < C; ++k) {
            const double off = mode_ == ReadoutMode::row_softmax ? 0.0 : -logit;
            b[static_cast<std::size_t>(y * C + k)] = y == k ? logit : off;
        }
}

void TransitionNet::copy_trunk_from(const CleanNet& clean) {
    if (clean.spec().base_filters != spec_.base_filters || clean.classes() != spec_.num_classes) {
        throw ConfigError("copy_trunk_from: network shapes differ");
    }
    ParamStore& dst = net_.params();
    const ParamStore& src = clean.params();
    const std::size_t head = dst.slot_count() - 1;
    for (std::size_t i = 0; i < head; ++i) {
        std::ranges::copy(src.weights(i), dst.weights(i).begin());
        std::ranges::copy(src.bias(i), dst.bias(i).begin());
    }
    std::ranges::fill(dst.weights(head), 0.0);
}

NetPass TransitionNet::forward(const Tensor4& image) const {
    check_image(image);
    NetPass pass;
    const Tensor4 logits = net_.forward(image, &pass.trace);
    pass.out = mode_ == ReadoutMode::row_softmax ? softmax_groups(logits, spec_.num_classes) : sigmoid(logits);
    return pass;
}

TransitionField TransitionNet::predict(const Tensor4& image, const LabelField* observed) const {
    return transition_field_from(forward(image).out, spec_.num_classes, mode_, observed);
}

ProbabilityField TransitionNet::observed_column(const NetPass& pass, const LabelField& observed) const {
    const int C = spec_.num_classes;
    if (observed.h != pass.out.h || observed.w != pass.out.w) throw DataError("observed labels: shape mismatch");
    observed.validate(C);
    ProbabilityField col = Tensor4::image(observed.h, observed.w, C);
    for (std::size_t p = 0; p < observed.size(); ++p) {
        const int k = observed.labels[p];
        auto o = pass.out.pixel(p);
        for (int y = 0; y < C; ++y) col.data[p * C + y] = o[static_cast<std::size_t>(y) * C + k];
    }
    return col;
}

LossAndGrad TransitionNet::observed_loss(const NetPass& pass, const LabelField& observed,
                                         const ProbabilityField& posterior) const {
    return transition_observed_loss(pass.out, mode_, observed, posterior);
}

void TransitionNet::backward(const NetPass& pass, const Tensor4& grad_logits) {
    net_.backward(pass.trace, grad_logits);
}

TransitionField transition_field_from(const Tensor4& head_out, int classes, ReadoutMode mode,
                                      const LabelField* observed) {
    const int C = classes;
    if (head_out.c != C * C) throw ConfigError("transition head must have C*C channels");
    TransitionField tf(head_out.h, head_out.w, C);
    if (mode == ReadoutMode::row_softmax) {
        tf.data = head_out.data;
        return tf;
    }
    if (observed == nullptr) throw ConfigError("uniform-remainder readout needs the observed noisy labels");
    if (observed->h != head_out.h || observed->w != head_out.w) throw DataError("observed labels: shape mismatch");
    observed->validate(C);
    for (std::size_t p = 0; p < tf.pixels(); ++p) {
        const int k = observed->labels[p];
        auto o = head_out.pixel(p);
        for (int y = 0; y < C; ++y) {
            const double pk = o[static_cast<std::size_t>(y) * C + k];
            const double rest = remainder_value(pk, C);
            for (int j = 0; j < C; ++j) tf.at(p, y, j) = j == k ? pk : rest;
        }
    }
    return tf;
}

LossAndGrad transition_observed_loss(const Tensor4& head_out, ReadoutMode mode, const LabelField& observed,
                                     const ProbabilityField& posterior) {
    const int C = posterior.c;
    if (head_out.c != C * C || head_out.h != observed.h || head_out.w != observed.w || posterior.h != observed.h ||
        posterior.w != observed.w) {
        throw ConfigError("transition_observed_loss: shape mismatch");
    }
    observed.validate(C);
    LossAndGrad r;
    r.grad = Tensor4(1, head_out.h, head_out.w, C * C);
    const std::size_t n = observed.size();
    if (n == 0) return r;
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const int k = observed.labels[p];
        auto o = head_out.pixel(p);
        auto g = r.grad.pixel(p);
        for (int y = 0; y < C; ++y) {
            const double w = posterior.data[p * C + y];
            const std::size_t row = static_cast<std::size_t>(y) * C;
            total -= w * clamped_log(o[row + k]);
            if (mode == ReadoutMode::row_softmax) {
                for (int j = 0; j < C; ++j) g[row + j] = w * o[row + j] * inv_n;
                g[row + k] -= w * inv_n;
            } else {
                g[row + k] = -w * (1.0 - o[row + k]) * inv_n;
            }
        }
    }
    r.loss = total * inv_n;
    return r;
}

ProbabilityField observed_column(const TransitionField& tf, const LabelField& noisy) {
    if (tf.h != noisy.h || tf.w != noisy.w) throw DataError("observed_column: shape mismatch");
    noisy.validate(tf.classes);
    const int C = tf.classes;
    ProbabilityField col = Tensor4::image(tf.h, tf.w, C);
    for (std::size_t p = 0; p < tf.pixels(); ++p) {
        for (int y = 0; y < C; ++y) col.data[p * C + y] = tf.at(p, y, noisy.labels[p]);
    }
    return col;
}

} // namespace antn
