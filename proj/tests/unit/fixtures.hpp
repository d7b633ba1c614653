#pragma once

#include <cmath>
#include <cstdint>

#include "histokit/raster.hpp"
#include "histokit/rng.hpp"

namespace fixtures {

using histokit::BinaryMask;
using histokit::Label;
using histokit::LabeledMask;

inline void paint_disk(LabeledMask& m, double cy, double cx, double radius, Label id) {
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius) m(r, c) = id;
}

inline void paint_disk(BinaryMask& m, double cy, double cx, double radius) {
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius) m(r, c) = 1;
}

inline void paint_rect(LabeledMask& m, int row, int col, int h, int w, Label id) {
    for (int r = row; r < row + h; ++r)
        for (int c = col; c < col + w; ++c) m(r, c) = id;
}

inline BinaryMask random_binary(std::uint64_t seed, int w, int h, double density) {
    histokit::Rng rng(seed);
    BinaryMask m(w, h);
    for (auto& v : m.values()) v = rng.chance(density) ? 1 : 0;
    return m;
}

inline LabeledMask random_labels(std::uint64_t seed, int w, int h, Label max_id, double density) {
    histokit::Rng rng(seed);
    LabeledMask m(w, h);
    for (auto& v : m.values()) v = rng.chance(density) ? static_cast<Label>(1 + rng.below(max_id)) : 0;
    return m;
}

// Two radius-10 disks, centers 16 px apart.
inline BinaryMask dumbbell() {
    BinaryMask m(48, 32);
    paint_disk(m, 16, 16, 10);
    paint_disk(m, 16, 32, 10);
    return m;
}

} // namespace fixtures
