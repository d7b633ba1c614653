#pragma once

// Challenge scoring for instance segmentations.
//
// DICE_2 (ensemble Dice) follows the challenge pseudo-code literally: for every pair of
// ground-truth instance q and predicted instance p that overlap,
//     IntersectionArea += |q ∩ p|,   TotalMarkupArea += |q| + |p|,
// and the score is 2 * IntersectionArea / TotalMarkupArea. Areas are counted once per
// intersecting pair; instances that intersect nothing contribute nothing. When no pair
// intersects the score is 1 if both masks are empty and 0 otherwise.

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/morphology.hpp"
#include "histokit/raster.hpp"

namespace histokit::metrics {

struct TileScore {
    double dice1 = 0.0;
    double dice2 = 0.0;
    double average = 0.0;
};

inline double dice1(const LabeledMask& gt, const LabeledMask& pred) {
    require_same_shape(gt, pred, "ground truth and prediction");
    std::uint64_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool g = gt[i] != 0;
        const bool p = pred[i] != 0;
        a += g;
        b += p;
        both += g && p;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

struct Dice2Terms {
    std::uint64_t intersection_area = 0;
    std::uint64_t total_markup_area = 0;
    bool gt_empty = true;
    bool pred_empty = true;

    [[nodiscard]] double score() const {
        if (total_markup_area == 0) return (gt_empty && pred_empty) ? 1.0 : 0.0;
        return 2.0 * static_cast<double>(intersection_area) / static_cast<double>(total_markup_area);
    }
};

/// Accumulators of the pseudo-code, gathered in one pass over an (gt id, pred id) overlap index.
inline Dice2Terms dice2_terms(const LabeledMask& gt, const LabeledMask& pred) {
    require_same_shape(gt, pred, "ground truth and prediction");
    std::unordered_map<Label, std::uint64_t> gt_area, pred_area;
    std::unordered_map<std::uint64_t, std::uint64_t> overlap;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const Label g = gt[i];
        const Label p = pred[i];
        if (g) ++gt_area[g];
        if (p) ++pred_area[p];
        if (g && p) ++overlap[(static_cast<std::uint64_t>(g) << 32) | p];
    }
    Dice2Terms t;
    t.gt_empty = gt_area.empty();
    t.pred_empty = pred_area.empty();
    for (const auto& [key, area] : overlap) {
        const Label g = static_cast<Label>(key >> 32);
        const Label p = static_cast<Label>(key & 0xFFFFFFFFu);
        t.intersection_area += area;
        t.total_markup_area += gt_area[g] + pred_area[p];
    }
    return t;
}

inline double dice2(const LabeledMask& gt, const LabeledMask& pred) { return dice2_terms(gt, pred).score(); }

inline TileScore score_tile(const LabeledMask& gt, const LabeledMask& pred) {
    TileScore s;
    s.dice1 = dice1(gt, pred);
    s.dice2 = dice2(gt, pred);
    s.average = (s.dice1 + s.dice2) / 2.0;
    return s;
}

/// Unweighted mean of per-tile averages.
inline double mean_score(std::span<const TileScore> tiles) {
    if (tiles.empty()) throw Error("cannot score an empty dataset");
    // Summed in sorted order so the result does not depend on tile order.
    std::vector<double> averages;
    averages.reserve(tiles.size());
    for (const auto& t : tiles) averages.push_back(t.average);
    std::sort(averages.begin(), averages.end());
    double sum = 0.0;
    for (double a : averages) sum += a;
    return sum / static_cast<double>(averages.size());
}

inline double score_dataset(std::span<const std::pair<LabeledMask, LabeledMask>> pairs) {
    if (pairs.empty()) throw Error("cannot score an empty dataset");
    std::vector<TileScore> tiles;
    tiles.reserve(pairs.size());
    for (const auto& [gt, pred] : pairs) tiles.push_back(score_tile(gt, pred));
    return mean_score(tiles);
}

} // namespace histokit::metrics
