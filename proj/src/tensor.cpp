#include "antn/tensor.hpp"

#include <cmath>

namespace antn {

bool Tensor4::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void LabelField::validate(int classes) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw DataError("label " + std::to_string(labels[i]) + " at pixel " + std::to_string(i) +
                            " outside [0," + std::to_string(classes) + ")");
        }
    }
}

LabelField argmax_labels(const ProbabilityField& probs) {
    LabelField out(probs.h, probs.w);
    const std::size_t n = static_cast<std::size_t>(probs.h) * probs.w;
    for (std::size_t p = 0; p < n; ++p) {
        auto row = probs.pixel(p);
        int best = 0;
        for (int k = 1; k < probs.c; ++k) {
            if (row[k] > row[best]) best = k;
        }
        out.labels[p] = best;
    }
    return out;
}

ProbabilityField one_hot(const LabelField& labels, int classes) {
    ProbabilityField out = Tensor4::image(labels.h, labels.w, classes);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        out.data[p * classes + labels.labels[p]] = 1.0;
    }
    return out;
}

} // namespace antn
