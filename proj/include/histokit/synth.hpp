#pragma once

// Synthetic fixtures and brute-force oracles.
//
// Tiles: elliptical nuclei on a pink background, placed with bounded overlap. Pixels claimed
// by an earlier nucleus stay with it, so later nuclei lie underneath. Ground truth borders
// are extract_boundaries(labels, 2). These are geometric stand-ins, not realistic texture.
//
// Probability maps: the true class occupies a few large contiguous blobs, the other
// diagnostic class many small ones, over an ND background with additive noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histokit/error.hpp"
#include "histokit/morphology.hpp"
#include "histokit/patch_pipeline.hpp"
#include "histokit/probmap.hpp"
#include "histokit/raster.hpp"
#include "histokit/rng.hpp"

namespace histokit::synth {

struct SynthTileSpec {
    int width = 256;
    int height = 256;
    int count_min = 4;
    int count_max = 10;
    double radius_min = 7.0;
    double radius_max = 12.0;
    double overlap_min = 0.0; // fraction of a new nucleus lying under earlier ones
    double overlap_max = 0.12;
    double stain_jitter = 12.0; // max per-channel color offset
    int border_thickness = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (width < 8 || height < 8) throw Error("synthetic tile must be at least 8x8");
        if (count_min < 0 || count_max < count_min) throw Error("invalid nucleus count range");
        if (radius_min < 2.0 || radius_max < radius_min) throw Error("invalid radius range (radii must be >= 2 px)");
        if (overlap_min < 0.0 || overlap_max < overlap_min || overlap_max >= 1.0) throw Error("invalid overlap range");
        if (stain_jitter < 0.0) throw Error("stain jitter must be >= 0");
        if (2 * radius_max + 4 > std::min(width, height)) throw Error("nuclei do not fit in the tile");
    }
};

struct SynthTile {
    RgbImage image;
    LabeledMask labels;
    BinaryMask blob;
    BinaryMask border;
};

namespace detail {

struct Ellipse {
    double cy, cx, a, b, angle;

    [[nodiscard]] bool contains(int r, int c) const {
        const double dy = r - cy, dx = c - cx;
        const double u = dx * std::cos(angle) + dy * std::sin(angle);
        const double v = -dx * std::sin(angle) + dy * std::cos(angle);
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }

    template <typename Fn>
    void for_each_pixel(int height, int width, Fn&& fn) const {
        const double reach = std::max(a, b) + 1.0;
        const int r0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
        const int r1 = std::min(height - 1, static_cast<int>(std::ceil(cy + reach)));
        const int c0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
        const int c1 = std::min(width - 1, static_cast<int>(std::ceil(cx + reach)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                if (contains(r, c)) fn(r, c);
    }
};

inline bool four_connected(const std::vector<Pixel>& pixels, int height, int width) {
    if (pixels.empty()) return false;
    BinaryMask m(width, height);
    for (const auto& p : pixels) m(p.row, p.col) = 1;
    return connected_components(m, Connectivity::Four).count == 1;
}

} // namespace detail

inline SynthTile gen_synthetic_tile(const SynthTileSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int h = spec.height, w = spec.width;
    LabeledMask labels(w, h);
    std::vector<detail::Ellipse> placed;
    const int target = static_cast<int>(rng.between(spec.count_min, spec.count_max));
    const double margin = spec.radius_max + 2.0;
    constexpr int kMaxTries = 400;

    for (int n = 0; n < target; ++n) {
        bool ok = false;
        for (int attempt = 0; attempt < kMaxTries && !ok; ++attempt) {
            detail::Ellipse e{};
            e.a = rng.uniform(spec.radius_min, spec.radius_max);
            e.b = rng.uniform(spec.radius_min, spec.radius_max);
            e.angle = rng.uniform(0.0, std::numbers::pi);
            const bool near = !placed.empty() && (spec.overlap_min > 0.0 || (spec.overlap_max > 0.0 && rng.chance(0.5)));
            if (near) {
                const auto& other = placed[rng.below(placed.size())];
                const double dist = (0.5 * (e.a + e.b) + 0.5 * (other.a + other.b)) * rng.uniform(0.7, 1.0);
                const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
                e.cy = other.cy + dist * std::sin(dir);
                e.cx = other.cx + dist * std::cos(dir);
                if (e.cy < margin || e.cx < margin || e.cy > h - 1 - margin || e.cx > w - 1 - margin) continue;
            } else {
                e.cy = rng.uniform(margin, h - 1 - margin);
                e.cx = rng.uniform(margin, w - 1 - margin);
            }
            std::vector<Pixel> visible;
            std::size_t area = 0;
            e.for_each_pixel(h, w, [&](int r, int c) {
                ++area;
                if (labels(r, c) == 0) visible.push_back({r, c});
            });
            if (area == 0) continue;
            const double overlap = 1.0 - static_cast<double>(visible.size()) / static_cast<double>(area);
            // the first nucleus has nothing to overlap, so only the upper bound applies to it
            if ((!placed.empty() && overlap < spec.overlap_min) || overlap > spec.overlap_max) continue;
            if (!detail::four_connected(visible, h, w)) continue;
            const Label id = static_cast<Label>(placed.size() + 1);
            for (const auto& p : visible) labels(p.row, p.col) = id;
            placed.push_back(e);
            ok = true;
        }
        if (!ok) {
            throw Error("could not place nucleus " + std::to_string(n + 1) + " of " + std::to_string(target) +
                        " after " + std::to_string(kMaxTries) + " tries");
        }
    }

    SynthTile tile{RgbImage(w, h), labels, binarize(labels), patches::extract_boundaries(labels, spec.border_thickness)};
    const std::array<double, 3> background{236.0, 198.0, 214.0};
    const std::array<double, 3> nucleus{92.0, 58.0, 142.0};
    std::vector<std::array<double, 3>> colors(placed.size() + 1, background);
    for (std::size_t i = 1; i < colors.size(); ++i)
        for (int k = 0; k < 3; ++k) colors[i][k] = nucleus[k] + rng.uniform(-spec.stain_jitter, spec.stain_jitter);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < 3; ++k) {
                tile.image.at(r, c)[k] = static_cast<std::uint8_t>(std::clamp(std::lround(colors[labels(r, c)][k]), 0L, 255L));
            }
    return tile;
}

// ---------------------------------------------------------------------------------------

struct SynthSlideSpec {
    int rows = 24;
    int cols = 24;
    double coverage = 0.4;          // fraction of the grid that is diagnostic tissue
    double dominant_fraction = 0.5; // expected share of diagnostic area held by the true class
    double area_jitter = 0.3;       // each class area is scaled by U(1 - j, 1 + j)
    int true_blobs = 2;
    int distractor_blobs = 10;
    std::array<double, 2> true_intensity{0.6, 0.95};
    std::array<double, 2> distractor_intensity{0.6, 0.95};
    double noise = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (rows < 4 || cols < 4) throw Error("synthetic slide grid must be at least 4x4");
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!unit(coverage) || !unit(dominant_fraction) || !unit(area_jitter)) throw Error("slide fractions must lie in [0,1]");
        if (true_blobs < 1 || distractor_blobs < 1) throw Error("blob counts must be >= 1");
        for (const auto& r : {true_intensity, distractor_intensity})
            if (!(r[0] >= 0.0 && r[0] <= r[1] && r[1] <= 1.0)) throw Error("invalid blob intensity range");
        if (noise < 0.0) throw Error("noise must be >= 0");
    }
};

namespace detail {

// Grows `blobs` 4-connected regions of total `area` cells over free cells of `owner`.
inline void plant_blobs(Grid<std::uint8_t>& owner, std::uint8_t tag, std::size_t area, int blobs, Rng& rng) {
    const int h = owner.height(), w = owner.width();
    for (int b = 0; b < blobs; ++b) {
        const std::size_t size = area / blobs + (static_cast<std::size_t>(b) < area % blobs ? 1 : 0);
        if (size == 0) continue;
        std::vector<std::size_t> free_cells;
        for (std::size_t i = 0; i < owner.size(); ++i)
            if (owner[i] == 0) free_cells.push_back(i);
        if (free_cells.empty()) return;
        const std::size_t seed_cell = free_cells[rng.below(free_cells.size())];
        owner[seed_cell] = tag;
        std::vector<std::size_t> frontier;
        auto push_frontier = [&](std::size_t cell) {
            const int r = static_cast<int>(cell / w), c = static_cast<int>(cell % w);
            histokit::detail::for_each_neighbor(Connectivity::Four, r, c, h, w, [&](int nr, int nc) {
                const std::size_t j = owner.index(nr, nc);
                if (owner[j] == 0) frontier.push_back(j);
            });
        };
        push_frontier(seed_cell);
        std::size_t grown = 1;
        while (grown < size && !frontier.empty()) {
            const std::size_t k = rng.below(frontier.size());
            const std::size_t cell = frontier[k];
            frontier[k] = frontier.back();
            frontier.pop_back();
            if (owner[cell] != 0) continue;
            owner[cell] = tag;
            ++grown;
            push_frontier(cell);
        }
    }
}

} // namespace detail

inline wsi::ProbabilityMap gen_synthetic_probmap(const SynthSlideSpec& spec, wsi::SlideClass true_class) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t n = static_cast<std::size_t>(spec.rows) * spec.cols;
    const double diagnostic = spec.coverage * static_cast<double>(n);
    auto jittered = [&](double share) {
        const double scale = rng.uniform(1.0 - spec.area_jitter, 1.0 + spec.area_jitter);
        return static_cast<std::size_t>(std::clamp(std::llround(diagnostic * share * scale), 0LL, static_cast<long long>(n)));
    };
    const std::size_t true_area = jittered(spec.dominant_fraction);
    const std::size_t distractor_area = jittered(1.0 - spec.dominant_fraction);

    Grid<std::uint8_t> owner(spec.cols, spec.rows, 0);
    detail::plant_blobs(owner, 1, true_area, spec.true_blobs, rng);
    detail::plant_blobs(owner, 2, distractor_area, spec.distractor_blobs, rng);

    const int true_idx = true_class == wsi::SlideClass::LUAD ? 1 : 2;
    const int other_idx = 3 - true_idx;
    wsi::ProbabilityMap map;
    map.rows = spec.rows;
    map.cols = spec.cols;
    map.stride = 224;
    map.patch_size = 224;
    map.slide_id = "synthetic_" + std::to_string(spec.seed);
    map.values.resize(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 3> p{};
        if (owner[i] == 0) {
            p[0] = rng.uniform(0.7, 1.0);
            const double rest = 1.0 - p[0];
            p[1] = rest * rng.unit();
            p[2] = rest - p[1];
        } else {
            const auto& range = owner[i] == 1 ? spec.true_intensity : spec.distractor_intensity;
            const int c = owner[i] == 1 ? true_idx : other_idx;
            const int o = 3 - c;
            p[c] = rng.uniform(range[0], range[1]);
            const double rest = 1.0 - p[c];
            p[o] = rest * 0.5 * rng.unit();
            p[0] = rest - p[o];
        }
        double sum = 0.0;
        for (auto& v : p) {
            v += spec.noise * rng.unit();
            sum += v;
        }
        for (int k = 0; k < 3; ++k) map.values[i * 3 + k] = static_cast<float>(p[k] / sum);
    }
    return map;
}

// ---------------------------------------------------------------------------------------
// Oracles

/// Literal nested-loop transcription of the ensemble Dice pseudo-code over explicit pixel
/// sets; kept independent of the overlap-index implementation in seg_metrics.
inline double oracle_dice2(const LabeledMask& gt, const LabeledMask& pred) {
    require_same_shape(gt, pred, "ground truth and prediction");
    auto instance_set = [](const LabeledMask& m) {
        std::map<Label, std::vector<std::size_t>> set;
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i] != 0) set[m[i]].push_back(i);
        return set;
    };
    const auto Q = instance_set(gt);
    const auto P = instance_set(pred);
    std::uint64_t intersection_area = 0;
    std::uint64_t total_markup_area = 0;
    for (const auto& [qid, q] : Q) {
        for (const auto& [pid, p] : P) {
            std::uint64_t overlap = 0;
            auto a = q.begin();
            auto b = p.begin();
            while (a != q.end() && b != p.end()) {
                if (*a < *b) ++a;
                else if (*b < *a) ++b;
                else {
                    ++overlap;
                    ++a;
                    ++b;
                }
            }
            if (overlap > 0) {
                intersection_area += overlap;
                total_markup_area += q.size() + p.size();
            }
        }
    }
    if (total_markup_area == 0) return (Q.empty() && P.empty()) ? 1.0 : 0.0;
    return 2.0 * static_cast<double>(intersection_area) / static_cast<double>(total_markup_area);
}

/// Random instance mask: up to `max_instances` ellipses and rectangles painted in order,
/// later shapes overwriting earlier ones.
inline LabeledMask random_instance_mask(Rng& rng, int width, int height, int max_instances) {
    LabeledMask m(width, height);
    const int count = static_cast<int>(rng.between(0, max_instances));
    for (int i = 0; i < count; ++i) {
        const Label id = static_cast<Label>(rng.between(1, 60000));
        const double cy = rng.uniform(0, height), cx = rng.uniform(0, width);
        const double a = rng.uniform(1.0, std::max(2.0, width / 6.0)), b = rng.uniform(1.0, std::max(2.0, height / 6.0));
        if (rng.chance(0.5)) {
            detail::Ellipse{cy, cx, a, b, rng.uniform(0.0, std::numbers::pi)}.for_each_pixel(
                height, width, [&](int r, int c) { m(r, c) = id; });
        } else {
            for (int r = std::max(0, static_cast<int>(cy - b)); r < std::min(height, static_cast<int>(cy + b)); ++r)
                for (int c = std::max(0, static_cast<int>(cx - a)); c < std::min(width, static_cast<int>(cx + a)); ++c) m(r, c) = id;
        }
    }
    return m;
}

/// A ground truth mask and a related prediction: independent, shifted, or relabeled/split.
inline std::pair<LabeledMask, LabeledMask> random_mask_pair(std::uint64_t seed, int max_size = 256,
                                                            int max_instances = 40) {
    Rng rng(seed);
    const int w = static_cast<int>(rng.between(1, max_size));
    const int h = static_cast<int>(rng.between(1, max_size));
    LabeledMask gt = random_instance_mask(rng, w, h, max_instances);
    LabeledMask pred(w, h);
    switch (rng.below(3)) {
    case 0: pred = random_instance_mask(rng, w, h, max_instances); break;
    case 1: {
        const int dr = static_cast<int>(rng.between(-3, 3)), dc = static_cast<int>(rng.between(-3, 3));
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (gt.contains(r - dr, c - dc)) pred(r, c) = gt(r - dr, c - dc);
        break;
    }
    default:
        // every instance split along a random column parity, with dropouts
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const Label g = gt(r, c);
                if (g == 0) continue;
                pred(r, c) = (c / 4) % 2 ? g : g + 60001u;
            }
        for (auto& v : pred.values())
            if (rng.chance(0.05)) v = 0;
        break;
    }
    return {std::move(gt), std::move(pred)};
}

// ---------------------------------------------------------------------------------------
// Spec files (all fields optional; missing fields keep their defaults)

inline SynthTileSpec tile_spec_from_json(const nlohmann::json& j) {
    SynthTileSpec s;
    try {
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.count_min = j.value("count_min", s.count_min);
        s.count_max = j.value("count_max", s.count_max);
        s.radius_min = j.value("radius_min", s.radius_min);
        s.radius_max = j.value("radius_max", s.radius_max);
        s.overlap_min = j.value("overlap_min", s.overlap_min);
        s.overlap_max = j.value("overlap_max", s.overlap_max);
        s.stain_jitter = j.value("stain_jitter", s.stain_jitter);
        s.border_thickness = j.value("border_thickness", s.border_thickness);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid tile spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline SynthSlideSpec slide_spec_from_json(const nlohmann::json& j) {
    SynthSlideSpec s;
    try {
        s.rows = j.value("rows", s.rows);
        s.cols = j.value("cols", s.cols);
        s.coverage = j.value("coverage", s.coverage);
        s.dominant_fraction = j.value("dominant_fraction", s.dominant_fraction);
        s.area_jitter = j.value("area_jitter", s.area_jitter);
        s.true_blobs = j.value("true_blobs", s.true_blobs);
        s.distractor_blobs = j.value("distractor_blobs", s.distractor_blobs);
        s.true_intensity = j.value("true_intensity", s.true_intensity);
        s.distractor_intensity = j.value("distractor_intensity", s.distractor_intensity);
        s.noise = j.value("noise", s.noise);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid slide spec: ") + e.what());
    }
    s.validate();
    return s;
}

} // namespace histokit::synth
