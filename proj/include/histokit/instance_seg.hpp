#pragma once

// Nucleus instance segmentation from blob and border masks:
//   core   = blob AND NOT dilate(border)
//   cores  = marker-controlled watershed of the core distance map
//   labels = every removed blob pixel joins its closest core
//   output = labels with instances below the physical area threshold removed

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <set>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/morphology.hpp"
#include "histokit/raster.hpp"

namespace histokit::seg {

struct SegmentationConfig {
    int border_dilation_kernel = 3;
    double min_area_um2 = 13.0;
    Mpp mpp{0.25};
    int watershed_smoothing = 1; // box radius applied to the distance map; 0 disables
    double marker_dynamic = 1.0; // px; maxima shallower than this merge into a higher neighbor

    void validate() const {
        if (border_dilation_kernel < 1 || border_dilation_kernel % 2 == 0) {
            throw Error("border dilation kernel must be odd and >= 1");
        }
        if (!(min_area_um2 >= 0.0)) throw Error("min_area_um2 must be >= 0");
        if (watershed_smoothing < 0) throw Error("watershed smoothing radius must be >= 0");
        if (!(marker_dynamic >= 0.0)) throw Error("marker dynamic must be >= 0");
    }

    /// Smallest pixel area that survives the artifact filter.
    [[nodiscard]] double min_area_px() const { return mpp.area_px(min_area_um2); }
};

inline BinaryMask fuse_masks(const BinaryMask& blob, const BinaryMask& border, const SegmentationConfig& cfg) {
    require_same_shape(blob, border, "blob and border masks");
    cfg.validate();
    const BinaryMask grown = dilate(border, cfg.border_dilation_kernel);
    BinaryMask core(blob.width(), blob.height());
    for (std::size_t i = 0; i < core.size(); ++i) core[i] = (blob[i] && !grown[i]) ? 1 : 0;
    return core;
}

namespace detail {

// Distance map quantized to fixed point so that plateaus compare exactly.
inline Grid<std::int64_t> watershed_relief(const BinaryMask& core, int smoothing) {
    const auto d2 = squared_distance_transform(core);
    const int w = core.width();
    const int h = core.height();
    Grid<double> dist(w, h);
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = std::sqrt(d2[i]);

    if (smoothing > 0) {
        // Box mean over the clamped window, computed with an integral image.
        Grid<double> integral(w + 1, h + 1, 0.0);
        for (int r = 0; r < h; ++r) {
            double row_sum = 0.0;
            for (int c = 0; c < w; ++c) {
                row_sum += dist(r, c);
                integral(r + 1, c + 1) = integral(r, c + 1) + row_sum;
            }
        }
        Grid<double> smooth(w, h);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                if (!core(r, c)) continue;
                const int r0 = std::max(0, r - smoothing), r1 = std::min(h, r + smoothing + 1);
                const int c0 = std::max(0, c - smoothing), c1 = std::min(w, c + smoothing + 1);
                const double sum = integral(r1, c1) - integral(r0, c1) - integral(r1, c0) + integral(r0, c0);
                smooth(r, c) = sum / double((r1 - r0) * (c1 - c0));
            }
        }
        dist = std::move(smooth);
    }

    Grid<std::int64_t> relief(w, h, 0);
    for (std::size_t i = 0; i < relief.size(); ++i) {
        relief[i] = core[i] ? static_cast<std::int64_t>(std::llround(dist[i] * 65536.0)) : 0;
    }
    return relief;
}

} // namespace detail

/// Regional maxima of `relief` over the foreground of `core` (8-connected plateaus with no
/// strictly higher foreground neighbor), numbered 1..k in row-major order of first pixel.
inline LabeledMask regional_maxima(const Grid<std::int64_t>& relief, const BinaryMask& core) {
    const int w = core.width();
    const int h = core.height();
    LabeledMask markers(w, h);
    Grid<std::uint8_t> seen(w, h, 0);
    std::vector<Pixel> plateau;
    std::vector<Pixel> stack;
    Label next = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!core(r, c) || seen(r, c)) continue;
            const std::int64_t level = relief(r, c);
            plateau.clear();
            stack.assign(1, {r, c});
            seen(r, c) = 1;
            bool is_max = true;
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                plateau.push_back(p);
                histokit::detail::for_each_neighbor(Connectivity::Eight, p.row, p.col, h, w, [&](int nr, int nc) {
                    if (!core(nr, nc)) return;
                    const std::int64_t v = relief(nr, nc);
                    if (v > level) is_max = false;
                    else if (v == level && !seen(nr, nc)) {
                        seen(nr, nc) = 1;
                        stack.push_back({nr, nc});
                    }
                });
            }
            if (!is_max) continue;
            ++next;
            for (const Pixel& p : plateau) markers(p.row, p.col) = next;
        }
    }
    return markers;
}

/// Morphological reconstruction by dilation of (relief - h) under relief, confined to the core.
/// Regional maxima of the result are the maxima of `relief` whose dynamic is at least h.
inline Grid<std::int64_t> suppress_shallow_maxima(const Grid<std::int64_t>& relief, const BinaryMask& core,
                                                  std::int64_t h) {
    if (h <= 0) return relief;
    const int w = core.width();
    const int hgt = core.height();
    Grid<std::int64_t> rec(w, hgt, 0);
    std::priority_queue<std::pair<std::int64_t, std::size_t>> queue;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (!core[i]) continue;
        rec[i] = relief[i] - h;
        queue.push({rec[i], i});
    }
    while (!queue.empty()) {
        const auto [v, i] = queue.top();
        queue.pop();
        if (v != rec[i]) continue;
        const int r = static_cast<int>(i / w);
        const int c = static_cast<int>(i % w);
        histokit::detail::for_each_neighbor(Connectivity::Eight, r, c, hgt, w, [&](int nr, int nc) {
            if (!core(nr, nc)) return;
            const std::int64_t cand = std::min(v, relief(nr, nc));
            if (cand > rec(nr, nc)) {
                rec(nr, nc) = cand;
                queue.push({cand, rec.index(nr, nc)});
            }
        });
    }
    return rec;
}

/// Priority flood from the markers over the core foreground, highest relief first;
/// equal relief is served in order of queue entry. 8-connected.
inline LabeledMask flood(const Grid<std::int64_t>& relief, const BinaryMask& core, LabeledMask markers) {
    const int w = core.width();
    const int h = core.height();
    struct Item {
        std::int64_t value;
        std::uint64_t age;
        int row;
        int col;
        bool operator<(const Item& o) const {
            if (value != o.value) return value < o.value;
            return age > o.age;
        }
    };
    std::priority_queue<Item> queue;
    std::uint64_t age = 0;
    Grid<std::uint8_t> queued(w, h, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (markers(r, c) != 0) queued(r, c) = 1;

    auto push_neighbors = [&](int r, int c) {
        histokit::detail::for_each_neighbor(Connectivity::Eight, r, c, h, w, [&](int nr, int nc) {
            if (core(nr, nc) && !queued(nr, nc)) {
                queued(nr, nc) = 1;
                queue.push({relief(nr, nc), age++, nr, nc});
            }
        });
    };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (markers(r, c) != 0) push_neighbors(r, c);

    while (!queue.empty()) {
        const Item it = queue.top();
        queue.pop();
        // Take the label of the labeled neighbor with the highest relief (first in scan order on ties).
        Label chosen = 0;
        std::int64_t best = std::numeric_limits<std::int64_t>::min();
        histokit::detail::for_each_neighbor(Connectivity::Eight, it.row, it.col, h, w, [&](int nr, int nc) {
            const Label id = markers(nr, nc);
            if (id != 0 && relief(nr, nc) > best) {
                best = relief(nr, nc);
                chosen = id;
            }
        });
        markers(it.row, it.col) = chosen;
        push_neighbors(it.row, it.col);
    }
    return markers;
}

/// Splits the core mask into labeled cores; every core pixel receives exactly one nonzero id.
inline LabeledMask watershed_split(const BinaryMask& core, const SegmentationConfig& cfg) {
    cfg.validate();
    const auto relief = detail::watershed_relief(core, cfg.watershed_smoothing);
    const auto h = static_cast<std::int64_t>(std::llround(cfg.marker_dynamic * 65536.0));
    return flood(relief, core, regional_maxima(suppress_shallow_maxima(relief, core, h), core));
}

struct Assignment {
    LabeledMask labels;
    std::size_t dropped_pixels = 0; // blob pixels left unlabeled because no core exists
};

/// Gives every unlabeled blob pixel the id of its nearest core, preferring cores that
/// intersect the pixel's own blob component.
inline Assignment assign_boundary_pixels(const LabeledMask& cores, const BinaryMask& blob) {
    require_same_shape(cores, blob, "cores and blob mask");
    for (std::size_t i = 0; i < cores.size(); ++i) {
        if (cores[i] != 0 && !blob[i]) throw Error("core pixel outside the blob mask");
    }
    Assignment out{LabeledMask(blob.width(), blob.height()), 0};
    const bool any_core = std::any_of(cores.values().begin(), cores.values().end(), [](Label v) { return v != 0; });
    if (!any_core) {
        out.dropped_pixels = count_foreground(blob);
        return out;
    }

    const auto components = connected_components(blob, Connectivity::Eight);
    std::vector<std::set<Label>> candidates(components.count + 1);
    for (std::size_t i = 0; i < cores.size(); ++i) {
        if (cores[i] != 0) candidates[components.labels[i]].insert(cores[i]);
    }

    for (int r = 0; r < blob.height(); ++r) {
        for (int c = 0; c < blob.width(); ++c) {
            if (!blob(r, c)) continue;
            if (cores(r, c) != 0) {
                out.labels(r, c) = cores(r, c);
                continue;
            }
            const auto& allowed = candidates[components.labels(r, c)];
            std::optional<Label> id;
            if (!allowed.empty()) id = nearest_nonzero_if(cores, {r, c}, [&](Label l) { return allowed.count(l) > 0; });
            else id = nearest_nonzero(cores, {r, c});
            out.labels(r, c) = *id;
        }
    }
    return out;
}

struct FilterResult {
    LabeledMask labels;
    std::size_t removed_instances = 0;
};

/// Removes instances whose pixel area is below min_area_um2 / mpp^2. Survivor ids unchanged.
inline FilterResult filter_small_instances(const LabeledMask& labels, const SegmentationConfig& cfg) {
    cfg.validate();
    const double threshold = cfg.min_area_px();
    const auto areas = instance_areas(labels);
    std::set<Label> removed;
    for (const auto& [id, area] : areas)
        if (static_cast<double>(area) < threshold) removed.insert(id);
    FilterResult out{labels, removed.size()};
    if (removed.empty()) return out;
    for (auto& v : out.labels.values())
        if (v != 0 && removed.count(v)) v = 0;
    return out;
}

struct SegmentationReport {
    std::size_t cores = 0;
    std::size_t instances = 0;
    std::size_t filtered_instances = 0;
    std::size_t dropped_pixels = 0;
};

struct SegmentationResult {
    LabeledMask labels;
    SegmentationReport report;
};

inline SegmentationResult segment_instances(const BinaryMask& blob, const BinaryMask& border,
                                            const SegmentationConfig& cfg) {
    const auto core = fuse_masks(blob, border, cfg);
    const auto cores = watershed_split(core, cfg);
    auto assigned = assign_boundary_pixels(cores, blob);
    auto filtered = filter_small_instances(assigned.labels, cfg);
    SegmentationResult out{std::move(filtered.labels), {}};
    out.report.cores = instance_count(cores);
    out.report.instances = instance_count(out.labels);
    out.report.filtered_instances = filtered.removed_instances;
    out.report.dropped_pixels = assigned.dropped_pixels;
    return out;
}

} // namespace histokit::seg
