#pragma once

// Slide features from the LUAD and LUSC probability channels.
//
// Schema (50 values, fixed order):
//    0..3   LUAD mean, median, variance, positive-patch fraction
//    4..7   LUSC mean, median, variance, positive-patch fraction
//    8      positive-count ratio  n_luad / (n_luad + n_lusc + eps)
//    9      mean ratio            mean_luad / (mean_luad + mean_lusc + eps)
//   10..39  top-5 component areas, channel-major then threshold {0.5, 0.7, 0.9}
//   40..45  total suprathreshold area per channel per threshold
//   46..49  component count per channel at thresholds {0.5, 0.9}
// Areas are fractions of rows*cols; components are 4-connected cells with p > threshold.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/morphology.hpp"
#include "histokit/probmap.hpp"

namespace histokit::wsi {

inline constexpr std::size_t kFeatureCount = 50;
inline constexpr double kFeatureEps = 1e-9;
inline constexpr std::array<double, 3> kAreaThresholds{0.5, 0.7, 0.9};
inline constexpr std::array<double, 2> kCountThresholds{0.5, 0.9};

struct FeatureVector {
    std::string slide_id;
    std::array<double, kFeatureCount> values{};
    std::optional<SlideClass> label;
};

inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        const char* ch[] = {"luad", "lusc"};
        for (const char* c : ch)
            for (const char* s : {"mean", "median", "variance", "positive_fraction"}) n.push_back(std::string(c) + "_" + s);
        n.push_back("positive_count_ratio");
        n.push_back("mean_ratio");
        auto tname = [](double t) { return std::to_string(static_cast<int>(std::lround(t * 10))); };
        for (const char* c : ch)
            for (double t : kAreaThresholds)
                for (int k = 1; k <= 5; ++k) n.push_back(std::string(c) + "_top" + std::to_string(k) + "_area_t0" + tname(t));
        for (const char* c : ch)
            for (double t : kAreaThresholds) n.push_back(std::string(c) + "_total_area_t0" + tname(t));
        for (const char* c : ch)
            for (double t : kCountThresholds) n.push_back(std::string(c) + "_components_t0" + tname(t));
        return n;
    }();
    return names;
}

struct PatchCounts {
    std::size_t nd = 0;
    std::size_t luad = 0;
    std::size_t lusc = 0;
};

/// Argmax class of one patch; ties resolve ND, then LUAD, then LUSC.
inline ClassIndex argmax_class(const ProbabilityMap& map, std::size_t patch) {
    const float nd = map.at(patch, ClassIndex::ND);
    const float luad = map.at(patch, ClassIndex::LUAD);
    const float lusc = map.at(patch, ClassIndex::LUSC);
    ClassIndex best = ClassIndex::ND;
    float v = nd;
    if (luad > v) {
        best = ClassIndex::LUAD;
        v = luad;
    }
    if (lusc > v) best = ClassIndex::LUSC;
    return best;
}

inline PatchCounts positive_patch_counts(const ProbabilityMap& map) {
    PatchCounts c;
    for (std::size_t i = 0; i < map.patches(); ++i) {
        switch (argmax_class(map, i)) {
        case ClassIndex::ND: ++c.nd; break;
        case ClassIndex::LUAD: ++c.luad; break;
        case ClassIndex::LUSC: ++c.lusc; break;
        }
    }
    return c;
}

inline double channel_mean(const ProbabilityMap& map, ClassIndex c) {
    double s = 0.0;
    for (std::size_t i = 0; i < map.patches(); ++i) s += map.at(i, c);
    return s / static_cast<double>(map.patches());
}

/// Slide label by patch majority; count ties fall back to the larger mean probability, then LUAD.
inline SlideClass max_vote(const ProbabilityMap& map) {
    const auto c = positive_patch_counts(map);
    if (c.luad > c.lusc) return SlideClass::LUAD;
    if (c.lusc > c.luad) return SlideClass::LUSC;
    const double mluad = channel_mean(map, ClassIndex::LUAD);
    const double mlusc = channel_mean(map, ClassIndex::LUSC);
    return mlusc > mluad ? SlideClass::LUSC : SlideClass::LUAD;
}

namespace detail {

struct ChannelStats {
    double mean = 0, median = 0, variance = 0;
};

inline ChannelStats channel_stats(std::vector<double> v) {
    ChannelStats s;
    const double n = static_cast<double>(v.size());
    // Sorted first so the sums, and therefore the results, ignore patch order.
    std::sort(v.begin(), v.end());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.variance = ss / n;
    const std::size_t m = v.size() / 2;
    s.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    return s;
}

struct ComponentSummary {
    std::vector<std::size_t> areas; // descending
    std::size_t total = 0;
};

inline ComponentSummary threshold_components(const ProbabilityMap& map, ClassIndex c, double threshold) {
    BinaryMask above(map.cols, map.rows);
    for (std::size_t i = 0; i < map.patches(); ++i) above[i] = map.at(i, c) > threshold ? 1 : 0;
    const auto comps = connected_components(above, Connectivity::Four);
    ComponentSummary out;
    out.areas.assign(comps.count, 0);
    for (Label id : comps.labels.values())
        if (id) ++out.areas[id - 1];
    std::sort(out.areas.begin(), out.areas.end(), std::greater<>());
    out.total = count_foreground(above);
    return out;
}

} // namespace detail

inline FeatureVector extract_features(const ProbabilityMap& map) {
    map.validate();
    FeatureVector fv;
    fv.slide_id = map.slide_id;
    auto& f = fv.values;
    const double n = static_cast<double>(map.patches());
    const auto counts = positive_patch_counts(map);
    const ClassIndex channels[2] = {ClassIndex::LUAD, ClassIndex::LUSC};

    std::array<double, 2> means{};
    for (int ci = 0; ci < 2; ++ci) {
        std::vector<double> v(map.patches());
        for (std::size_t i = 0; i < map.patches(); ++i) v[i] = map.at(i, channels[ci]);
        const auto s = detail::channel_stats(std::move(v));
        means[ci] = s.mean;
        const std::size_t positives = ci == 0 ? counts.luad : counts.lusc;
        f[4 * ci + 0] = s.mean;
        f[4 * ci + 1] = s.median;
        f[4 * ci + 2] = s.variance;
        f[4 * ci + 3] = static_cast<double>(positives) / n;
    }
    f[8] = static_cast<double>(counts.luad) / (static_cast<double>(counts.luad + counts.lusc) + kFeatureEps);
    f[9] = means[0] / (means[0] + means[1] + kFeatureEps);

    std::size_t top = 10, total = 40, count = 46;
    for (int ci = 0; ci < 2; ++ci) {
        for (double t : kAreaThresholds) {
            const auto comps = detail::threshold_components(map, channels[ci], t);
            for (std::size_t k = 0; k < 5; ++k) f[top++] = k < comps.areas.size() ? static_cast<double>(comps.areas[k]) / n : 0.0;
            f[total++] = static_cast<double>(comps.total) / n;
        }
        for (double t : kCountThresholds) {
            f[count++] = static_cast<double>(detail::threshold_components(map, channels[ci], t).areas.size());
        }
    }
    return fv;
}

/// Fisher ratio (mu_luad - mu_lusc)^2 / (var_luad + var_lusc + eps) per feature.
inline std::array<double, kFeatureCount> fisher_scores(const std::vector<FeatureVector>& train) {
    std::array<double, kFeatureCount> score{};
    std::size_t n_luad = 0, n_lusc = 0;
    for (const auto& fv : train) {
        if (!fv.label) throw Error("feature selection needs labeled slides (" + fv.slide_id + " has no label)");
        (*fv.label == SlideClass::LUAD ? n_luad : n_lusc)++;
    }
    if (n_luad == 0 || n_lusc == 0) throw Error("feature selection needs both LUAD and LUSC slides");
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
        double mean[2] = {0, 0}, var[2] = {0, 0};
        const double cnt[2] = {static_cast<double>(n_luad), static_cast<double>(n_lusc)};
        for (const auto& fv : train) mean[*fv.label == SlideClass::LUSC] += fv.values[j];
        for (int k = 0; k < 2; ++k) mean[k] /= cnt[k];
        for (const auto& fv : train) {
            const int k = *fv.label == SlideClass::LUSC;
            var[k] += (fv.values[j] - mean[k]) * (fv.values[j] - mean[k]);
        }
        for (int k = 0; k < 2; ++k) var[k] /= cnt[k];
        score[j] = (mean[0] - mean[1]) * (mean[0] - mean[1]) / (var[0] + var[1] + kFeatureEps);
    }
    return score;
}

/// The k most separable feature indices, best first; equal scores keep the lower index first.
inline std::vector<std::size_t> select_features(const std::vector<FeatureVector>& train, std::size_t k = 25) {
    if (k > kFeatureCount) throw Error("cannot select more than 50 features");
    const auto score = fisher_scores(train);
    std::vector<std::size_t> idx(kFeatureCount);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    idx.resize(k);
    return idx;
}

} // namespace histokit::wsi
