// Off-the-shelf segmenters used as noisy label sources.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "antn/datagen.hpp"

namespace antn {

namespace {

double sq_dist(const Rgb& a, const Rgb& b) {
    double d = 0.0;
    for (int ch = 0; ch < 3; ++ch) d += (a[ch] - b[ch]) * (a[ch] - b[ch]);
    return d;
}

std::vector<Rgb> pixels_of(const Tensor4& image) {
    if (image.c != 3) throw ConfigError("expected an RGB image");
    std::vector<Rgb> pts(image.pixels());
    for (std::size_t p = 0; p < pts.size(); ++p) {
        auto px = image.pixel(p);
        pts[p] = {px[0], px[1], px[2]};
    }
    return pts;
}

} // namespace

KMeansResult kmeans_cluster(std::span<const Rgb> points, int k, std::uint64_t seed, int max_iter, double tol) {
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    KMeansResult res;
    res.assignment.assign(points.size(), 0);
    if (points.empty()) return res;
    std::mt19937_64 rng(seed);

    // k-means++ seeding
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    res.centers.push_back(points[pick(rng)]);
    std::vector<double> d2(points.size());
    while (static_cast<int>(res.centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Rgb& c : res.centers) best = std::min(best, sq_dist(points[i], c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            res.centers.push_back(points[pick(rng)]);
            continue;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        const double target = u(rng);
        double acc = 0.0;
        std::size_t chosen = points.size() - 1;
        for (std::size_t i = 0; i < points.size(); ++i) {
            acc += d2[i];
            if (acc >= target && d2[i] > 0.0) {
                chosen = i;
                break;
            }
        }
        res.centers.push_back(points[chosen]);
    }

    auto assign = [&] {
        for (std::size_t i = 0; i < points.size(); ++i) {
            int best = 0;
            double bd = sq_dist(points[i], res.centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(points[i], res.centers[static_cast<std::size_t>(c)]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            res.assignment[i] = best;
        }
    };
    auto objective = [&] {
        double j = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            j += sq_dist(points[i], res.centers[static_cast<std::size_t>(res.assignment[i])]);
        }
        return j;
    };

    for (int it = 0; it < max_iter; ++it) {
        assign();
        std::vector<Rgb> sum(static_cast<std::size_t>(k), Rgb{0, 0, 0});
        std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<std::size_t>(res.assignment[i]);
            for (int ch = 0; ch < 3; ++ch) sum[c][ch] += points[i][ch];
            ++count[c];
        }
        double moved = 0.0;
        for (std::size_t c = 0; c < sum.size(); ++c) {
            if (count[c] == 0) continue;  // empty cluster keeps its centre
            Rgb next;
            for (int ch = 0; ch < 3; ++ch) next[ch] = sum[c][ch] / static_cast<double>(count[c]);
            moved = std::max(moved, std::sqrt(sq_dist(next, res.centers[c])));
            res.centers[c] = next;
        }
        res.objective.push_back(objective());
        res.iterations = it + 1;
        if (moved < tol) break;
    }
    return res;
}

LabelField kmeans_segment(const Tensor4& image, int classes, const ClassPrototypes& prototypes, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("kmeans_segment: need at least 2 classes");
    prototypes.validate();
    const auto pts = pixels_of(image);
    const KMeansResult km = kmeans_cluster(pts, classes, seed);
    std::vector<int> cls_of_cluster(km.centers.size());
    for (std::size_t c = 0; c < km.centers.size(); ++c) cls_of_cluster[c] = prototypes.nearest(km.centers[c]);
    LabelField out(image.h, image.w);
    for (std::size_t p = 0; p < pts.size(); ++p) {
        out.labels[p] = cls_of_cluster[static_cast<std::size_t>(km.assignment[p])];
    }
    return out;
}

OtsuResult otsu_thresholds(std::span<const double> histogram, int classes) {
    const int bins = static_cast<int>(histogram.size());
    if (classes < 2) throw ConfigError("otsu: need at least 2 classes");
    if (bins < classes) throw ConfigError("otsu: fewer bins than classes");

    std::vector<double> cw(static_cast<std::size_t>(bins) + 1, 0.0);
    std::vector<double> cs(static_cast<std::size_t>(bins) + 1, 0.0);
    for (int b = 0; b < bins; ++b) {
        cw[b + 1] = cw[b] + histogram[b];
        cs[b + 1] = cs[b] + histogram[b] * b;
    }
    // Contribution of bins [lo, hi].
    auto term = [&](int lo, int hi) {
        const double w = cw[hi + 1] - cw[lo];
        if (w <= 0.0) return 0.0;
        const double s = cs[hi + 1] - cs[lo];
        return s * s / w;
    };

    OtsuResult best;
    best.score = -std::numeric_limits<double>::infinity();
    std::vector<int> t(static_cast<std::size_t>(classes - 1));
    const int cuts = classes - 1;
    std::function<void(int, int, double)> search = [&](int level, int lo, double partial) {
        if (level == cuts) {
            const double score = partial + term(lo, bins - 1);
            // Scores within 1e-12 relative are ties; the earlier tuple stays.
            if (best.thresholds.empty() || score > best.score + 1e-12 * std::abs(best.score)) {
                best.score = score;
                best.thresholds = t;
            }
            return;
        }
        // leave room for the remaining cuts
        for (int th = lo; th <= bins - 1 - (cuts - level); ++th) {
            t[static_cast<std::size_t>(level)] = th;
            search(level + 1, th + 1, partial + term(lo, th));
        }
    };
    search(0, 0, 0.0);
    return best;
}

int luminance_bin(std::span<const double> rgb) {
    const double lum = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
    return std::clamp(static_cast<int>(std::lround(lum * 255.0)), 0, 255);
}

LabelField otsu_segment(const Tensor4& image, int classes, const ClassPrototypes& prototypes,
                        std::vector<std::string>* warnings) {
    if (classes < 2) throw ConfigError("otsu_segment: need at least 2 classes");
    if (image.c != 3) throw ConfigError("otsu_segment: expected an RGB image");
    prototypes.validate();
    const std::size_t n = image.pixels();
    std::vector<int> bin(n);
    std::vector<double> hist(256, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        bin[p] = luminance_bin(image.pixel(p));
        hist[static_cast<std::size_t>(bin[p])] += 1.0;
    }
    const auto distinct = std::count_if(hist.begin(), hist.end(), [](double v) { return v > 0.0; });
    if (distinct < classes && warnings != nullptr) {
        warnings->push_back("otsu: only " + std::to_string(distinct) + " distinct luminance levels for " +
                            std::to_string(classes) + " classes; empty intervals merged");
    }
    const OtsuResult th = otsu_thresholds(hist, classes);

    auto interval_of = [&](int b) {
        int k = 0;
        while (k < classes - 1 && b > th.thresholds[static_cast<std::size_t>(k)]) ++k;
        return k;
    };
    std::vector<Rgb> mean(static_cast<std::size_t>(classes), Rgb{0, 0, 0});
    std::vector<double> count(static_cast<std::size_t>(classes), 0.0);
    std::vector<int> interval(n);
    for (std::size_t p = 0; p < n; ++p) {
        interval[p] = interval_of(bin[p]);
        auto px = image.pixel(p);
        auto& m = mean[static_cast<std::size_t>(interval[p])];
        for (int ch = 0; ch < 3; ++ch) m[ch] += px[ch];
        count[static_cast<std::size_t>(interval[p])] += 1.0;
    }
    std::vector<int> cls(static_cast<std::size_t>(classes), 0);
    for (std::size_t k = 0; k < cls.size(); ++k) {
        if (count[k] == 0.0) continue;
        for (int ch = 0; ch < 3; ++ch) mean[k][ch] /= count[k];
        cls[k] = prototypes.nearest(mean[k]);
    }
    LabelField out(image.h, image.w);
    for (std::size_t p = 0; p < n; ++p) out.labels[p] = cls[static_cast<std::size_t>(interval[p])];
    return out;
}

} // namespace antn
