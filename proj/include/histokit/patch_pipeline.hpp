#pragma once

// Training-patch generation from tiles and labeled masks:
//   NBL - sliding windows (step 54) plus random crops
//   NBD - one window centered on every nucleus that fits inside the tile
//   SN  - NBL patches whose central 54x54 region is at most half nucleus, duplicated
// and the geometric augmentation that feeds a 102x102 center crop of a 200x200 patch.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/morphology.hpp"
#include "histokit/parallel.hpp"
#include "histokit/raster.hpp"
#include "histokit/rng.hpp"

namespace histokit::patches {

inline constexpr int kPatchSize = 200;
inline constexpr int kNetworkInput = 102;
inline constexpr int kCenterRegion = 54;

struct Patch {
    RgbImage image;
    LabeledMask mask;
    int row = 0; // origin in the source tile
    int col = 0;
    int size = 0;
};

/// Foreground pixels that have a differently labeled pixel (background included) within
/// Chebyshev distance `thickness`. Pixels outside the raster are not considered.
inline BinaryMask extract_boundaries(const LabeledMask& mask, int thickness) {
    if (thickness < 1) throw Error("boundary thickness must be >= 1");
    BinaryMask out(mask.width(), mask.height());
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            const Label id = mask(r, c);
            if (id == 0) continue;
            bool border = false;
            for (int rr = std::max(0, r - thickness); rr <= std::min(mask.height() - 1, r + thickness) && !border; ++rr)
                for (int cc = std::max(0, c - thickness); cc <= std::min(mask.width() - 1, c + thickness); ++cc)
                    if (mask(rr, cc) != id) {
                        border = true;
                        break;
                    }
            out(r, c) = border ? 1 : 0;
        }
    }
    return out;
}

inline Patch cut_patch(const RgbImage& tile, const LabeledMask& mask, int row, int col, int size) {
    return {crop(tile, row, col, size, size), crop(mask, row, col, size, size), row, col, size};
}

struct NblOptions {
    int step = 54;
    int size = kPatchSize;
    int random_crops = 30;
};

/// Sliding-window origins along one axis: 0, step, 2*step, ... while the window fits.
inline std::vector<int> window_origins(int extent, int size, int step) {
    std::vector<int> out;
    for (int o = 0; o + size <= extent; o += step) out.push_back(o);
    return out;
}

inline std::vector<Patch> gen_nbl(const RgbImage& tile, const LabeledMask& mask, std::uint64_t seed,
                                  const NblOptions& opt = {}) {
    require_same_shape(tile, mask, "tile and mask");
    if (opt.step < 1 || opt.size < 1 || opt.random_crops < 0) throw Error("invalid NBL options");
    if (tile.width() < opt.size || tile.height() < opt.size) {
        throw Error("tile " + std::to_string(tile.width()) + "x" + std::to_string(tile.height()) +
                    " is smaller than the " + std::to_string(opt.size) + "px window");
    }
    std::vector<Patch> out;
    for (int r : window_origins(tile.height(), opt.size, opt.step))
        for (int c : window_origins(tile.width(), opt.size, opt.step)) out.push_back(cut_patch(tile, mask, r, c, opt.size));
    Rng rng(seed);
    for (int i = 0; i < opt.random_crops; ++i) {
        const int r = static_cast<int>(rng.between(0, tile.height() - opt.size));
        const int c = static_cast<int>(rng.between(0, tile.width() - opt.size));
        out.push_back(cut_patch(tile, mask, r, c, opt.size));
    }
    return out;
}

/// One window per instance, centered on its rounded centroid; windows leaving the tile are skipped.
inline std::vector<Patch> gen_nbd(const RgbImage& tile, const LabeledMask& mask, int size = kPatchSize) {
    require_same_shape(tile, mask, "tile and mask");
    struct Moments {
        double rows = 0, cols = 0;
        std::size_t n = 0;
    };
    std::map<Label, Moments> moments;
    for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c)
            if (Label id = mask(r, c)) {
                auto& m = moments[id];
                m.rows += r;
                m.cols += c;
                ++m.n;
            }
    std::vector<Patch> out;
    for (const auto& [id, m] : moments) {
        const long cr = std::lround(m.rows / static_cast<double>(m.n));
        const long cc = std::lround(m.cols / static_cast<double>(m.n));
        const long r0 = cr - size / 2;
        const long c0 = cc - size / 2;
        if (r0 < 0 || c0 < 0 || r0 + size > mask.height() || c0 + size > mask.width()) continue;
        out.push_back(cut_patch(tile, mask, static_cast<int>(r0), static_cast<int>(c0), size));
    }
    return out;
}

/// Nonzero mask pixels in the centered `region` x `region` window of a patch.
inline std::size_t center_nuclei_pixels(const LabeledMask& mask, int region = kCenterRegion) {
    const int r0 = (mask.height() - region) / 2;
    const int c0 = (mask.width() - region) / 2;
    std::size_t n = 0;
    for (int r = r0; r < r0 + region; ++r)
        for (int c = c0; c < c0 + region; ++c) n += mask(r, c) != 0;
    return n;
}

/// Indices of NBL patches kept for SN (center at most 50% nuclei).
inline std::vector<std::size_t> sn_selection(const std::vector<Patch>& nbl) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < nbl.size(); ++i) {
        const auto& m = nbl[i].mask;
        if (m.width() < kCenterRegion || m.height() < kCenterRegion) throw Error("SN patches must be >= 54px");
        if (2 * center_nuclei_pixels(m) <= static_cast<std::size_t>(kCenterRegion * kCenterRegion)) keep.push_back(i);
    }
    return keep;
}

inline std::vector<Patch> gen_sn(const std::vector<Patch>& nbl, int duplicates = 3) {
    if (duplicates < 0) throw Error("duplicates must be >= 0");
    std::vector<Patch> out;
    for (std::size_t i : sn_selection(nbl))
        for (int d = 0; d < duplicates; ++d) out.push_back(nbl[i]);
    return out;
}

// ---------------------------------------------------------------------------------------
// Augmentation

struct AugmentationParams {
    double shift_x = 0.0;      // fraction of patch width, [-0.05, 0.05]
    double shift_y = 0.0;      // fraction of patch height, [-0.05, 0.05]
    double rotation_deg = 0.0; // [-45, 45]
    bool flip_h = false;
    bool flip_v = false;
    double shear = 0.0; // shear angle in radians along x, [-0.4pi, 0.4pi]
    double resize = 1.0; // magnification ratio, [0.6, 2.0]
    std::uint64_t seed = 0;

    void validate() const {
        auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
        constexpr double shear_max = 0.4 * std::numbers::pi;
        if (!in(shift_x, -0.05, 0.05) || !in(shift_y, -0.05, 0.05)) throw Error("augmentation shift out of range");
        if (!in(rotation_deg, -45.0, 45.0)) throw Error("augmentation rotation out of range");
        if (!in(shear, -shear_max, shear_max)) throw Error("augmentation shear out of range");
        if (!in(resize, 0.6, 2.0)) throw Error("augmentation resize out of range");
    }
};

/// Draws every parameter uniformly from its declared range; flips with p = 0.5.
inline AugmentationParams draw_augmentation(std::uint64_t seed) {
    Rng rng(seed);
    AugmentationParams p;
    p.seed = seed;
    p.shift_x = rng.uniform(-0.05, 0.05);
    p.shift_y = rng.uniform(-0.05, 0.05);
    p.rotation_deg = rng.uniform(-45.0, 45.0);
    p.flip_h = rng.chance(0.5);
    p.flip_v = rng.chance(0.5);
    p.shear = rng.uniform(-0.4 * std::numbers::pi, 0.4 * std::numbers::pi);
    p.resize = rng.uniform(0.6, 2.0);
    return p;
}

/// Maps output pixel centers back into the source patch. Forward model, about the patch
/// center: out = flip(scale(resize) * rotate * shear * (src + shift * size)).
class AugmentTransform {
public:
    AugmentTransform(const AugmentationParams& p, int source_size, int output_size)
        : center_(0.5 * (source_size - 1)), offset_(0.5 * (source_size - output_size)) {
        const double theta = p.rotation_deg * std::numbers::pi / 180.0;
        const double cs = std::cos(theta), sn = std::sin(theta);
        const double k = std::tan(p.shear);
        const double s = p.resize;
        // forward linear part M = S R Sh, with Sh = [[1, k], [0, 1]] acting on (x, y)
        const double m00 = s * cs, m01 = s * (cs * k - sn);
        const double m10 = s * sn, m11 = s * (sn * k + cs);
        const double det = m00 * m11 - m01 * m10;
        inv_ = {m11 / det, -m01 / det, -m10 / det, m00 / det};
        tx_ = p.shift_x * source_size;
        ty_ = p.shift_y * source_size;
        flip_h_ = p.flip_h;
        flip_v_ = p.flip_v;
    }

    /// Source (x, y) = (col, row) sampled for output pixel (row, col).
    [[nodiscard]] std::array<double, 2> source_of(int row, int col) const {
        double x = col + offset_ - center_;
        double y = row + offset_ - center_;
        if (flip_h_) x = -x;
        if (flip_v_) y = -y;
        const double sx = inv_[0] * x + inv_[1] * y - tx_;
        const double sy = inv_[2] * x + inv_[3] * y - ty_;
        return {sx + center_, sy + center_};
    }

private:
    double center_;
    double offset_;
    std::array<double, 4> inv_{};
    double tx_ = 0.0, ty_ = 0.0;
    bool flip_h_ = false, flip_v_ = false;
};

struct Footprint {
    double min_x, max_x, min_y, max_y;
    [[nodiscard]] bool inside(int source_size) const {
        return min_x >= 0.0 && min_y >= 0.0 && max_x <= source_size - 1 && max_y <= source_size - 1;
    }
};

/// Bounding box of all sampled source coordinates (affine, so the crop corners bound it).
inline Footprint augment_footprint(const AugmentationParams& p, int source_size = kPatchSize,
                                   int output_size = kNetworkInput) {
    const AugmentTransform t(p, source_size, output_size);
    Footprint f{1e300, -1e300, 1e300, -1e300};
    for (int r : {0, output_size - 1})
        for (int c : {0, output_size - 1}) {
            const auto s = t.source_of(r, c);
            f.min_x = std::min(f.min_x, s[0]);
            f.max_x = std::max(f.max_x, s[0]);
            f.min_y = std::min(f.min_y, s[1]);
            f.max_y = std::max(f.max_y, s[1]);
        }
    return f;
}

/// Warps a 200x200 patch and returns its 102x102 center crop. Image samples are bilinear,
/// mask samples nearest-neighbor; coordinates outside the source clamp to the edge.
inline Patch augment_patch(const Patch& patch, const AugmentationParams& params) {
    params.validate();
    const int n = patch.mask.width();
    if (n != kPatchSize || patch.mask.height() != kPatchSize || patch.image.width() != kPatchSize ||
        patch.image.height() != kPatchSize) {
        throw Error("augmentation expects a 200x200 patch");
    }
    const AugmentTransform t(params, n, kNetworkInput);
    Patch out{RgbImage(kNetworkInput, kNetworkInput), LabeledMask(kNetworkInput, kNetworkInput), patch.row, patch.col,
              kNetworkInput};
    auto clampi = [n](long v) { return static_cast<int>(std::clamp<long>(v, 0, n - 1)); };
    for (int r = 0; r < kNetworkInput; ++r) {
        for (int c = 0; c < kNetworkInput; ++c) {
            const auto [sx, sy] = t.source_of(r, c);
            out.mask(r, c) = patch.mask(clampi(std::lround(sy)), clampi(std::lround(sx)));

            const double fx0 = std::floor(sx), fy0 = std::floor(sy);
            const double ax = sx - fx0, ay = sy - fy0;
            const int x0 = clampi(static_cast<long>(fx0)), x1 = clampi(static_cast<long>(fx0) + 1);
            const int y0 = clampi(static_cast<long>(fy0)), y1 = clampi(static_cast<long>(fy0) + 1);
            for (int k = 0; k < 3; ++k) {
                const double v = (1 - ax) * (1 - ay) * patch.image.at(y0, x0)[k] + ax * (1 - ay) * patch.image.at(y0, x1)[k] +
                                 (1 - ax) * ay * patch.image.at(y1, x0)[k] + ax * ay * patch.image.at(y1, x1)[k];
                out.image.at(r, c)[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Batches

enum class Dataset { NBL, NBD, SN };

inline Dataset parse_dataset(const std::string& s) {
    if (s == "nbl") return Dataset::NBL;
    if (s == "nbd") return Dataset::NBD;
    if (s == "sn") return Dataset::SN;
    throw Error("unknown patch dataset '" + s + "' (expected nbl, nbd or sn)");
}

inline const char* to_string(Dataset d) { return d == Dataset::NBL ? "nbl" : d == Dataset::NBD ? "nbd" : "sn"; }

inline constexpr std::size_t kAugmentationsPerPatch = 3;

/// Patches of the tile at position `index` in a batch. The tile draws from
/// derive_seed(seed, {index, 0}). With `augment`, patch j is replaced by three augmented
/// copies (consecutive in the output), copy k drawn from derive_seed(seed, {index, 1, j, k}).
inline std::vector<Patch> generate_patches(const RgbImage& tile, const LabeledMask& mask, Dataset dataset,
                                           std::uint64_t seed, std::size_t index, bool augment) {
    std::vector<Patch> patches;
    switch (dataset) {
    case Dataset::NBL: patches = gen_nbl(tile, mask, derive_seed(seed, {index, 0})); break;
    case Dataset::NBD: patches = gen_nbd(tile, mask); break;
    case Dataset::SN: patches = gen_sn(gen_nbl(tile, mask, derive_seed(seed, {index, 0}))); break;
    }
    if (!augment) return patches;
    std::vector<Patch> out;
    out.reserve(patches.size() * kAugmentationsPerPatch);
    for (std::size_t j = 0; j < patches.size(); ++j)
        for (std::size_t k = 0; k < kAugmentationsPerPatch; ++k)
            out.push_back(augment_patch(patches[j], draw_augmentation(derive_seed(seed, {index, 1, j, k}))));
    return out;
}

/// Patches for every tile, in tile order; independent of `jobs`.
inline std::vector<std::vector<Patch>> generate_patch_sets(std::span<const RgbImage> tiles,
                                                           std::span<const LabeledMask> masks, Dataset dataset,
                                                           std::uint64_t seed, bool augment, unsigned jobs = 1) {
    if (tiles.size() != masks.size()) throw Error("tile and mask counts differ");
    std::vector<std::vector<Patch>> out(tiles.size());
    parallel_for(tiles.size(), jobs,
                 [&](std::size_t i) { out[i] = generate_patches(tiles[i], masks[i], dataset, seed, i, augment); });
    return out;
}

} // namespace histokit::patches
