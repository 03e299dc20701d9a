#include <algorithm>

#include "antn/datagen.hpp"

namespace antn {

namespace {

void check_se(int se_size) {
    if (se_size < 1 || se_size % 2 == 0) throw ConfigError("structuring element size must be odd and >= 1");
}

} // namespace

LabelField erode_labels(const LabelField& labels, int se_size, int background) {
    check_se(se_size);
    const int r = se_size / 2;
    LabelField out = labels;
    for (int y = 0; y < labels.h; ++y)
        for (int x = 0; x < labels.w; ++x) {
            const int c = labels(y, x);
            if (c == background) continue;
            bool keep = true;
            for (int yy = std::max(0, y - r); keep && yy <= std::min(labels.h - 1, y + r); ++yy)
                for (int xx = std::max(0, x - r); xx <= std::min(labels.w - 1, x + r); ++xx)
                    if (labels(yy, xx) != c) {
                        keep = false;
                        break;
                    }
            if (!keep) out(y, x) = background;
        }
    return out;
}

LabelField dilate_labels(const LabelField& labels, int se_size, int background) {
    check_se(se_size);
    const int r = se_size / 2;
    LabelField out = labels;
    for (int y = 0; y < labels.h; ++y)
        for (int x = 0; x < labels.w; ++x) {
            int best = -1;
            for (int yy = std::max(0, y - r); yy <= std::min(labels.h - 1, y + r); ++yy)
                for (int xx = std::max(0, x - r); xx <= std::min(labels.w - 1, x + r); ++xx) {
                    const int c = labels(yy, xx);
                    if (c != background && (best < 0 || c < best)) best = c;
                }
            out(y, x) = best < 0 ? background : best;
        }
    return out;
}

} // namespace antn
