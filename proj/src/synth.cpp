#include <algorithm>
#include <cmath>
#include <random>

#include "antn/datagen.hpp"

namespace antn {

void SynthConfig::validate() const {
    if (image_size < 2 || image_size % 2 != 0) throw ConfigError("image_size must be even and >= 2");
    if (images_total < 0) throw ConfigError("images_total must be >= 0");
    if (radius_min < 0 || radius_max < radius_min) throw ConfigError("radius range is invalid");
    if (!(radius_max < image_size / 2.0)) throw ConfigError("radius_max must be below image_size/2");
    if (circles_min < 0 || circles_max < circles_min) throw ConfigError("circles_per_color range is invalid");
    if (intensity_std < 0) throw ConfigError("intensity_std must be >= 0");
    if (se_size < 1 || se_size % 2 == 0) throw ConfigError("se_size must be odd");
}

ClassPrototypes ClassPrototypes::defaults(int classes) {
    static const std::vector<Rgb> base{{200, 60, 60}, {60, 200, 60}, {60, 60, 200}, {200, 200, 200}};
    if (classes < 1 || classes > static_cast<int>(base.size())) {
        throw ConfigError("default prototypes exist for 1..4 classes; pass explicit prototypes for " +
                          std::to_string(classes));
    }
    return ClassPrototypes{{base.begin(), base.begin() + classes}};
}

int ClassPrototypes::nearest(const Rgb& rgb01) const {
    int best = 0;
    double best_d = INFINITY;
    for (int k = 0; k < classes(); ++k) {
        double d = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
            const double diff = rgb01[ch] * 255.0 - colors[k][ch];
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

void ClassPrototypes::validate() const {
    for (std::size_t i = 0; i < colors.size(); ++i)
        for (std::size_t j = i + 1; j < colors.size(); ++j)
            if (colors[i] == colors[j]) throw ConfigError("class prototypes must be pairwise distinct");
}

std::vector<SynthSample> gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const int S = cfg.image_size;
    std::vector<SynthSample> out;
    out.reserve(static_cast<std::size_t>(cfg.images_total));

    struct Circle {
        double cx, cy, r;
        int cls;
    };

    for (int img = 0; img < cfg.images_total; ++img) {
        std::vector<Circle> circles;
        std::uniform_int_distribution<int> count(cfg.circles_min, cfg.circles_max);
        std::uniform_real_distribution<double> pos(0.0, static_cast<double>(S));
        std::uniform_real_distribution<double> rad(cfg.radius_min, cfg.radius_max);
        for (int cls = 0; cls < kSynthBackground; ++cls) {
            const int n = count(rng);
            for (int i = 0; i < n; ++i) {
                const double cx = pos(rng);
                const double cy = pos(rng);
                circles.push_back({cx, cy, rad(rng), cls});
            }
        }
        std::shuffle(circles.begin(), circles.end(), rng);

        SynthSample s{Tensor4::image(S, S, 3), LabelField(S, S, kSynthBackground)};
        for (const Circle& c : circles) {
            const int y0 = std::max(0, static_cast<int>(std::floor(c.cy - c.r)));
            const int y1 = std::min(S - 1, static_cast<int>(std::ceil(c.cy + c.r)));
            const int x0 = std::max(0, static_cast<int>(std::floor(c.cx - c.r)));
            const int x1 = std::min(S - 1, static_cast<int>(std::ceil(c.cx + c.r)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dy = y + 0.5 - c.cy;
                    const double dx = x + 0.5 - c.cx;
                    if (dx * dx + dy * dy <= c.r * c.r) s.clean(y, x) = c.cls;
                }
        }

        std::normal_distribution<double> dominant(cfg.intensity_mean_dominant, cfg.intensity_std);
        std::normal_distribution<double> other(cfg.intensity_mean_other, cfg.intensity_std);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const int cls = s.clean(y, x);
                for (int ch = 0; ch < 3; ++ch) {
                    const bool is_dominant = cls == kSynthBackground || cls == ch;
                    const double v = is_dominant ? dominant(rng) : other(rng);
                    s.image(0, y, x, ch) = std::round(std::clamp(v, 0.0, 255.0)) / 255.0;
                }
            }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace antn
