#include <algorithm>
#include <cmath>

#include "antn/datagen.hpp"

namespace antn {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr Mat3 kRgbToLms{{{0.3811, 0.5783, 0.0402}, {0.1967, 0.7244, 0.0782}, {0.0241, 0.1288, 0.8444}}};

// Floor before log10 so black pixels stay finite.
constexpr double kLmsFloor = 1e-10;

Mat3 inverse(const Mat3& m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Mat3 r;
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

Rgb mul(const Mat3& m, const Rgb& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

void check_rgb(const Tensor4& t) {
    if (t.c != 3) throw ConfigError("expected a 3-channel image");
}

template <typename F>
Tensor4 map_pixels(const Tensor4& in, F f) {
    check_rgb(in);
    Tensor4 out(in.n, in.h, in.w, 3);
    for (std::size_t p = 0; p < in.pixels(); ++p) {
        auto px = in.pixel(p);
        const Rgb r = f(Rgb{px[0], px[1], px[2]});
        std::copy(r.begin(), r.end(), out.data.begin() + static_cast<std::ptrdiff_t>(p * 3));
    }
    return out;
}

} // namespace

Tensor4 rgb_to_lalphabeta(const Tensor4& rgb) {
    const double s3 = std::sqrt(3.0), s6 = std::sqrt(6.0), s2 = std::sqrt(2.0);
    return map_pixels(rgb, [&](const Rgb& c) {
        Rgb lms = mul(kRgbToLms, c);
        for (double& v : lms) v = std::log10(std::max(v, kLmsFloor));
        return Rgb{(lms[0] + lms[1] + lms[2]) / s3, (lms[0] + lms[1] - 2.0 * lms[2]) / s6, (lms[0] - lms[1]) / s2};
    });
}

Tensor4 lalphabeta_to_rgb(const Tensor4& lab) {
    static const Mat3 lms_to_rgb = inverse(kRgbToLms);
    const double s3 = std::sqrt(3.0), s6 = std::sqrt(6.0), s2 = std::sqrt(2.0);
    return map_pixels(lab, [&](const Rgb& c) {
        const double a = c[0] / s3, b = c[1] / s6, g = c[2] / s2;
        Rgb lms{a + b + g, a + b - g, a - 2.0 * b};
        for (double& v : lms) v = std::pow(10.0, v);
        return mul(lms_to_rgb, lms);
    });
}

Rgb srgb_to_cielab(const Rgb& rgb) {
    auto linear = [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
    const double r = linear(rgb[0]), g = linear(rgb[1]), b = linear(rgb[2]);
    const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    const double y = (0.2126729 * r + 0.7151522 * g + 0.0721750 * b) / 1.00000;
    const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    constexpr double d = 6.0 / 29.0;
    auto f = [](double t) { return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0; };
    const double fx = f(x), fy = f(y), fz = f(z);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Tensor4 rgb_to_cielab(const Tensor4& rgb) { return map_pixels(rgb, srgb_to_cielab); }

ChannelStats channel_stats(const Tensor4& t) {
    check_rgb(t);
    ChannelStats s;
    const std::size_t n = t.pixels();
    if (n == 0) return s;
    for (std::size_t p = 0; p < n; ++p)
        for (int ch = 0; ch < 3; ++ch) s.mean[ch] += t.data[p * 3 + ch];
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t p = 0; p < n; ++p)
        for (int ch = 0; ch < 3; ++ch) {
            const double d = t.data[p * 3 + ch] - s.mean[ch];
            s.stddev[ch] += d * d;
        }
    for (double& v : s.stddev) v = std::sqrt(v / static_cast<double>(n));
    return s;
}

Tensor4 reinhard_transfer_lab(const Tensor4& source, const Tensor4& reference) {
    Tensor4 src = rgb_to_lalphabeta(source);
    const ChannelStats ss = channel_stats(src);
    const ChannelStats rs = channel_stats(rgb_to_lalphabeta(reference));
    std::array<double, 3> scale{};
    // A spread at rounding level is a constant channel.
    for (int ch = 0; ch < 3; ++ch)
        scale[ch] = ss.stddev[ch] > 1e-12 * (1.0 + std::abs(ss.mean[ch])) ? rs.stddev[ch] / ss.stddev[ch] : 1.0;
    for (std::size_t p = 0; p < src.pixels(); ++p)
        for (int ch = 0; ch < 3; ++ch) {
            double& v = src.data[p * 3 + ch];
            v = (v - ss.mean[ch]) * scale[ch] + rs.mean[ch];
        }
    return src;
}

Tensor4 reinhard_normalize(const Tensor4& source, const Tensor4& reference) {
    Tensor4 out = lalphabeta_to_rgb(reinhard_transfer_lab(source, reference));
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

} // namespace antn
