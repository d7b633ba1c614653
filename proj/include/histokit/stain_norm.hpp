#pragma once

// Reinhard color transfer in the decorrelated l-alpha-beta space.
//
// RGB (0..255) -> LMS:            LMS -> l-alpha-beta (after log10):
//   | 0.381100 0.578300 0.040200 |    l     = (L + M + S) / sqrt(3)
//   | 0.196700 0.724400 0.078200 |    alpha = (L + M - 2S) / sqrt(6)
//   | 0.024100 0.128800 0.844400 |    beta  = (L - M) / sqrt(2)
//
// The inverse direction uses the exact inverse of the RGB->LMS matrix (computed once) so the
// round trip is limited only by 8-bit quantization. LMS values are floored at 1e-6 before
// the logarithm.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "histokit/error.hpp"
#include "histokit/raster.hpp"

namespace histokit::stain {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Lab = std::array<double, 3>;

inline constexpr Mat3 kRgbToLms{{{0.3811, 0.5783, 0.0402}, {0.1967, 0.7244, 0.0782}, {0.0241, 0.1288, 0.8444}}};
inline constexpr double kLogFloor = 1e-6;

namespace detail {

inline Mat3 invert(const Mat3& m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Mat3 inv{};
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

inline const Mat3& lms_to_rgb_matrix() {
    static const Mat3 inv = invert(kRgbToLms);
    return inv;
}

inline std::array<double, 3> apply(const Mat3& m, const std::array<double, 3>& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

} // namespace detail

struct LabPlane {
    int width = 0;
    int height = 0;
    std::vector<Lab> values;
};

struct StainStats {
    std::array<double, 3> mean{};
    std::array<double, 3> stdev{};
};

inline Lab rgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto lms = detail::apply(kRgbToLms, {double(r), double(g), double(b)});
    for (auto& v : lms) v = std::log10(std::max(v, kLogFloor));
    static const double s3 = 1.0 / std::sqrt(3.0);
    static const double s6 = 1.0 / std::sqrt(6.0);
    static const double s2 = 1.0 / std::sqrt(2.0);
    return {s3 * (lms[0] + lms[1] + lms[2]), s6 * (lms[0] + lms[1] - 2.0 * lms[2]), s2 * (lms[0] - lms[1])};
}

/// Inverse of rgb_to_lab before quantization: RGB as real values, not clamped.
inline std::array<double, 3> lab_to_rgb_real(const Lab& lab) {
    static const double a = std::sqrt(3.0) / 3.0;
    static const double b = std::sqrt(6.0) / 6.0;
    static const double c = std::sqrt(2.0) / 2.0;
    const double l = a * lab[0];
    const double al = b * lab[1];
    const double be = c * lab[2];
    std::array<double, 3> lms{l + al + be, l + al - be, l - 2.0 * al};
    for (auto& v : lms) v = std::pow(10.0, v);
    return detail::apply(detail::lms_to_rgb_matrix(), lms);
}

inline std::uint8_t quantize(double v) {
    if (!(v > 0.0)) return 0; // also catches NaN
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v));
}

inline LabPlane rgb_to_lab(const RgbImage& image) {
    LabPlane plane{image.width(), image.height(), std::vector<Lab>(image.pixels())};
    auto px = image.bytes();
    for (std::size_t i = 0; i < plane.values.size(); ++i) {
        plane.values[i] = rgb_to_lab(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    }
    return plane;
}

inline RgbImage lab_to_rgb(const LabPlane& plane) {
    RgbImage out(plane.width, plane.height);
    auto px = out.bytes();
    for (std::size_t i = 0; i < plane.values.size(); ++i) {
        auto rgb = lab_to_rgb_real(plane.values[i]);
        for (int k = 0; k < 3; ++k) px[3 * i + k] = quantize(rgb[k]);
    }
    return out;
}

/// Per-channel mean and population standard deviation.
inline StainStats compute_stats(const LabPlane& plane) {
    StainStats s;
    const double n = static_cast<double>(plane.values.size());
    if (plane.values.empty()) return s;
    for (const auto& v : plane.values)
        for (int k = 0; k < 3; ++k) s.mean[k] += v[k];
    for (int k = 0; k < 3; ++k) s.mean[k] /= n;
    for (const auto& v : plane.values)
        for (int k = 0; k < 3; ++k) s.stdev[k] += (v[k] - s.mean[k]) * (v[k] - s.mean[k]);
    for (int k = 0; k < 3; ++k) s.stdev[k] = std::sqrt(s.stdev[k] / n);
    return s;
}

inline StainStats compute_stats(const RgbImage& image) { return compute_stats(rgb_to_lab(image)); }

/// Channel-wise affine transfer of `plane` onto `target`; a zero source spread collapses the
/// channel to the target mean.
inline LabPlane transfer_stats(const LabPlane& plane, const StainStats& target) {
    for (double s : target.stdev)
        if (!(s >= 0.0)) throw Error("target standard deviations must be >= 0");
    const StainStats src = compute_stats(plane);
    std::array<double, 3> scale{};
    for (int k = 0; k < 3; ++k) {
        // a constant channel can still show a rounding-level spread around its computed mean
        const bool constant = std::all_of(plane.values.begin(), plane.values.end(),
                                          [&](const Lab& v) { return v[k] == plane.values.front()[k]; });
        scale[k] = !constant && src.stdev[k] > 0.0 ? target.stdev[k] / src.stdev[k] : 0.0;
    }
    LabPlane out{plane.width, plane.height, plane.values};
    for (auto& v : out.values)
        for (int k = 0; k < 3; ++k) v[k] = (v[k] - src.mean[k]) * scale[k] + target.mean[k];
    return out;
}

inline RgbImage reinhard_normalize(const RgbImage& source, const StainStats& target) {
    return lab_to_rgb(transfer_stats(rgb_to_lab(source), target));
}

inline StainStats stats_from_json(const nlohmann::json& j) {
    StainStats s;
    try {
        s.mean = {j.at("l_mean").get<double>(), j.at("a_mean").get<double>(), j.at("b_mean").get<double>()};
        s.stdev = {j.at("l_std").get<double>(), j.at("a_std").get<double>(), j.at("b_std").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid stain stats: ") + e.what());
    }
    for (double v : s.stdev)
        if (!(v >= 0.0)) throw Error("invalid stain stats: standard deviations must be >= 0");
    return s;
}

inline nlohmann::json stats_to_json(const StainStats& s) {
    return {{"l_mean", s.mean[0]}, {"a_mean", s.mean[1]}, {"b_mean", s.mean[2]},
            {"l_std", s.stdev[0]},  {"a_std", s.stdev[1]},  {"b_std", s.stdev[2]}};
}

inline StainStats load_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed stats file " + path.string() + ": " + e.what());
    }
    return stats_from_json(j);
}

} // namespace histokit::stain
