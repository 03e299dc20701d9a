#include "antn/metrics.hpp"

#include <cmath>
#include <map>

#include "antn/datagen.hpp"
#include "antn/losses.hpp"

namespace antn {

namespace {

void check_dims(const LabelField& a, const LabelField& b) {
    if (a.h != b.h || a.w != b.w) throw DataError("label maps have different dimensions");
}

} // namespace

double pixel_accuracy(const LabelField& pred, const LabelField& truth) {
    check_dims(pred, truth);
    if (pred.size() == 0) return 1.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred.labels[i] == truth.labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double cross_entropy_curve(const ProbabilityField& pred, const LabelField& reference) {
    if (pred.h != reference.h || pred.w != reference.w) throw DataError("cross_entropy: shape mismatch");
    reference.validate(pred.c);
    if (reference.size() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < reference.size(); ++p) total -= clamped_log(pred.data[p * pred.c + reference.labels[p]]);
    return total / static_cast<double>(reference.size());
}

AgreementCount count_agreement(const LabelField& estimate, const LabelField& noisy) {
    check_dims(estimate, noisy);
    AgreementCount c;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        if (estimate.labels[i] == noisy.labels[i]) {
            ++c.agree;
        } else {
            ++c.disagree;
        }
    }
    return c;
}

double clean_noisy_ratio(const ProbabilityField& posterior, const LabelField& noisy) {
    return count_agreement(argmax_labels(posterior), noisy).ratio();
}

TransitionMatrix expected_transition(std::span<const LabelField> clean, std::span<const LabelField> noisy, int classes) {
    if (clean.size() != noisy.size()) throw DataError("expected_transition: label set sizes differ");
    TransitionMatrix m(classes);
    std::vector<double> row_total(static_cast<std::size_t>(classes), 0.0);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        check_dims(clean[i], noisy[i]);
        clean[i].validate(classes);
        noisy[i].validate(classes);
        for (std::size_t p = 0; p < clean[i].size(); ++p) {
            m(clean[i].labels[p], noisy[i].labels[p]) += 1.0;
            row_total[static_cast<std::size_t>(clean[i].labels[p])] += 1.0;
        }
    }
    for (int y = 0; y < classes; ++y) {
        const double t = row_total[static_cast<std::size_t>(y)];
        m.row_defined[static_cast<std::size_t>(y)] = t > 0.0;
        for (int k = 0; k < classes; ++k) m(y, k) = t > 0.0 ? m(y, k) / t : 0.0;
    }
    return m;
}

TransitionMatrix expected_transition(const LabelField& clean, const LabelField& noisy, int classes) {
    return expected_transition(std::span(&clean, 1), std::span(&noisy, 1), classes);
}

TransitionMatrix average_transition(std::span<const TransitionField> fields) {
    if (fields.empty()) throw DataError("average_transition: no fields");
    const int C = fields.front().classes;
    TransitionMatrix m(C);
    std::size_t count = 0;
    for (const TransitionField& f : fields) {
        if (f.classes != C) throw DataError("average_transition: class count mismatch");
        for (std::size_t p = 0; p < f.pixels(); ++p)
            for (int y = 0; y < C; ++y)
                for (int k = 0; k < C; ++k) m(y, k) += f.at(p, y, k);
        count += f.pixels();
    }
    for (double& v : m.values) v /= static_cast<double>(count);
    return m;
}

TransitionMatrix average_transition(const TransitionNet& net, std::span<const Tensor4> images,
                                    std::span<const LabelField> observed) {
    if (net.mode() == ReadoutMode::uniform_remainder && observed.size() != images.size()) {
        throw ConfigError("average_transition: uniform-remainder readout needs observed labels per image");
    }
    const int C = net.classes();
    TransitionMatrix m(C);
    std::size_t count = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const TransitionField f = net.predict(images[i], observed.empty() ? nullptr : &observed[i]);
        for (std::size_t p = 0; p < f.pixels(); ++p)
            for (int y = 0; y < C; ++y)
                for (int k = 0; k < C; ++k) m(y, k) += f.at(p, y, k);
        count += f.pixels();
    }
    if (count == 0) throw DataError("average_transition: no pixels");
    for (double& v : m.values) v /= static_cast<double>(count);
    return m;
}

double frobenius_distance(const TransitionMatrix& a, const TransitionMatrix& b) {
    if (a.classes != b.classes) throw DataError("frobenius_distance: class count mismatch");
    double s = 0.0;
    for (int y = 0; y < a.classes; ++y) {
        if (!a.row_defined[static_cast<std::size_t>(y)] || !b.row_defined[static_cast<std::size_t>(y)]) continue;
        for (int k = 0; k < a.classes; ++k) s += (a(y, k) - b(y, k)) * (a(y, k) - b(y, k));
    }
    return std::sqrt(s);
}

std::optional<double> uniformity_disparity(const Tensor4& image, const LabelField& seg) {
    if (image.h != seg.h || image.w != seg.w || image.n != 1) throw DataError("uniformity_disparity: shape mismatch");
    const Tensor4 lab = rgb_to_cielab(image);
    struct Acc {
        double n = 0;
        Rgb sum{0, 0, 0};
    };
    std::map<int, Acc> seg_acc;
    for (std::size_t p = 0; p < seg.size(); ++p) {
        Acc& a = seg_acc[seg.labels[p]];
        a.n += 1;
        for (int ch = 0; ch < 3; ++ch) a.sum[ch] += lab.data[p * 3 + ch];
    }
    if (seg_acc.size() < 2) return std::nullopt;
    std::map<int, Rgb> mu;
    for (auto& [c, a] : seg_acc) mu[c] = {a.sum[0] / a.n, a.sum[1] / a.n, a.sum[2] / a.n};

    const double N = static_cast<double>(seg.size());
    std::map<int, double> scatter;
    for (std::size_t p = 0; p < seg.size(); ++p) {
        const Rgb& m = mu[seg.labels[p]];
        double d = 0.0;
        for (int ch = 0; ch < 3; ++ch) d += (lab.data[p * 3 + ch] - m[ch]) * (lab.data[p * 3 + ch] - m[ch]);
        scatter[seg.labels[p]] += std::sqrt(d);
    }
    double U = 0.0;
    for (auto& [c, a] : seg_acc) U += (a.n / N) * (scatter[c] / a.n);

    double num = 0.0, den = 0.0;
    for (auto i = seg_acc.begin(); i != seg_acc.end(); ++i)
        for (auto j = std::next(i); j != seg_acc.end(); ++j) {
            const double w = i->second.n * j->second.n;
            const Rgb& a = mu[i->first];
            const Rgb& b = mu[j->first];
            double d = 0.0;
            for (int ch = 0; ch < 3; ++ch) d += (a[ch] - b[ch]) * (a[ch] - b[ch]);
            num += w * std::sqrt(d);
            den += w;
        }
    const double D = num / den;
    if (D <= 0.0) return kInfiniteRatio;
    return U / D;
}

} // namespace antn
