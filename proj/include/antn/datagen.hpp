#pragma once

// Sources of training images and noisy labels: the synthetic circle
// generator, morphological label corruption, classical segmenters and
// Reinhard stain normalisation.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "antn/tensor.hpp"

namespace antn {

using Rgb = std::array<double, 3>;

struct SynthConfig {
    int image_size = 64;
    int images_total = 55;
    double radius_min = 8.0;
    double radius_max = 16.0;
    int circles_min = 2;  // per colour
    int circles_max = 4;
    double intensity_mean_dominant = 200.0;
    double intensity_mean_other = 60.0;
    double intensity_std = 50.0;
    int se_size = 5;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Reference colours (0..255 scale) indexed by class.
struct ClassPrototypes {
    std::vector<Rgb> colors;

    /// First `classes` of red, green, blue, white.
    static ClassPrototypes defaults(int classes);
    [[nodiscard]] int classes() const { return static_cast<int>(colors.size()); }
    /// Index of the prototype nearest (Euclidean) to an RGB triple given in [0,1].
    [[nodiscard]] int nearest(const Rgb& rgb01) const;
    void validate() const;
};

/// Number of classes of the synthetic data: red, green, blue objects and a white background.
inline constexpr int kSynthClasses = 4;
inline constexpr int kSynthBackground = 3;

struct SynthSample {
    Tensor4 image;  // 1 x S x S x 3, values k/255
    LabelField clean;
};

std::vector<SynthSample> gen_synthetic(const SynthConfig& cfg);

/// An object pixel keeps its class only if its whole k x k window (clipped at
/// the border) has that class; otherwise it becomes `background`.
LabelField erode_labels(const LabelField& labels, int se_size, int background = kSynthBackground);

/// A pixel takes the lowest object class present in its k x k window;
/// background only if the window is entirely background.
LabelField dilate_labels(const LabelField& labels, int se_size, int background = kSynthBackground);

struct KMeansResult {
    std::vector<Rgb> centers;
    std::vector<int> assignment;       // cluster per point
    std::vector<double> objective;     // within-cluster sum of squares after each Lloyd iteration
    int iterations = 0;
};

/// Lloyd iterations with k-means++ seeding; stops after max_iter iterations or
/// when no centre moves by more than tol.
KMeansResult kmeans_cluster(std::span<const Rgb> points, int k, std::uint64_t seed, int max_iter = 50,
                            double tol = 1e-4);

/// Clusters pixel colours into C groups and labels each cluster with its nearest prototype's class.
LabelField kmeans_segment(const Tensor4& image, int classes, const ClassPrototypes& prototypes, std::uint64_t seed);

struct OtsuResult {
    std::vector<int> thresholds;  // class k covers bins (t[k-1], t[k]]
    double score = 0.0;           // sum_k S_k^2 / W_k, monotone in the between-class variance
};

/// Exhaustive multi-level Otsu over all (classes-1)-tuples of increasing
/// thresholds; the lexicographically smallest tuple wins ties.
OtsuResult otsu_thresholds(std::span<const double> histogram, int classes);

/// Multi-level Otsu on 256-bin luminance (R+G+B)/3. Intervals are labelled by
/// the prototype nearest to their mean colour. Appends a message to `warnings`
/// when the image has fewer distinct luminance bins than classes.
LabelField otsu_segment(const Tensor4& image, int classes, const ClassPrototypes& prototypes,
                        std::vector<std::string>* warnings = nullptr);

/// 8-bit luminance bin of an RGB pixel in [0,1].
int luminance_bin(std::span<const double> rgb);

// Colour spaces. All operate per pixel on 3-channel tensors.

/// Reinhard's decorrelated l-alpha-beta space (log10 LMS); inputs in [0,1].
Tensor4 rgb_to_lalphabeta(const Tensor4& rgb);
Tensor4 lalphabeta_to_rgb(const Tensor4& lab);

/// CIELAB with the D65 white point and sRGB companding; inputs in [0,1].
Rgb srgb_to_cielab(const Rgb& rgb);
Tensor4 rgb_to_cielab(const Tensor4& rgb);

struct ChannelStats {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
};
ChannelStats channel_stats(const Tensor4& t);

/// Source statistics shifted/scaled to the reference's, in l-alpha-beta, before the inverse transform.
Tensor4 reinhard_transfer_lab(const Tensor4& source, const Tensor4& reference);
/// Full stain normalisation: transfer, convert back to RGB, clamp to [0,1].
Tensor4 reinhard_normalize(const Tensor4& source, const Tensor4& reference);

} // namespace antn
