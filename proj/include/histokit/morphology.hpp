#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/raster.hpp"

namespace histokit {

enum class Connectivity { Four = 4, Eight = 8 };

namespace detail {

struct Offset {
    int dr;
    int dc;
};

inline constexpr std::array<Offset, 8> kNeighbors8{
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};
inline constexpr std::array<Offset, 4> kNeighbors4{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};

template <typename Fn>
void for_each_neighbor(Connectivity conn, int row, int col, int height, int width, Fn&& fn) {
    auto visit = [&](const auto& table) {
        for (const auto& o : table) {
            const int r = row + o.dr;
            const int c = col + o.dc;
            if (r >= 0 && c >= 0 && r < height && c < width) fn(r, c);
        }
    };
    if (conn == Connectivity::Eight) visit(kNeighbors8);
    else visit(kNeighbors4);
}

} // namespace detail

inline BinaryMask binarize(const LabeledMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] != 0 ? 1 : 0;
    return out;
}

/// Foreground as labels (every foreground pixel gets id 1).
inline LabeledMask as_labels(const BinaryMask& mask) {
    LabeledMask out(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] != 0 ? 1 : 0;
    return out;
}

[[nodiscard]] inline std::size_t count_foreground(const BinaryMask& mask) {
    return static_cast<std::size_t>(std::count_if(mask.values().begin(), mask.values().end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

struct Components {
    LabeledMask labels;
    Label count = 0;
};

/// Labels contiguous foreground regions 1..k in row-major first-encounter order.
inline Components connected_components(const BinaryMask& mask, Connectivity conn = Connectivity::Eight) {
    Components out{LabeledMask(mask.width(), mask.height()), 0};
    std::vector<Pixel> stack;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (mask(r, c) == 0 || out.labels(r, c) != 0) continue;
            const Label id = ++out.count;
            out.labels(r, c) = id;
            stack.push_back({r, c});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                detail::for_each_neighbor(conn, p.row, p.col, mask.height(), mask.width(), [&](int nr, int nc) {
                    if (mask(nr, nc) != 0 && out.labels(nr, nc) == 0) {
                        out.labels(nr, nc) = id;
                        stack.push_back({nr, nc});
                    }
                });
            }
        }
    }
    return out;
}

/// Square-window binary dilation; the window is clamped at the raster edges.
inline BinaryMask dilate(const BinaryMask& mask, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw Error("dilation kernel must be odd and >= 1");
    const int half = kernel / 2;
    const int w = mask.width();
    const int h = mask.height();
    BinaryMask horizontal(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::uint8_t v = 0;
            for (int k = std::max(0, c - half); k <= std::min(w - 1, c + half) && !v; ++k) v = mask(r, k) != 0;
            horizontal(r, c) = v;
        }
    }
    BinaryMask out(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::uint8_t v = 0;
            for (int k = std::max(0, r - half); k <= std::min(h - 1, r + half) && !v; ++k) v = horizontal(k, c);
            out(r, c) = v;
        }
    }
    return out;
}

/// Nearest nonzero pixel whose id passes `allowed`. Ties go to the smaller (row, col).
/// Returns nullopt when no pixel qualifies.
template <typename Allowed>
std::optional<Label> nearest_nonzero_if(const LabeledMask& labels, Pixel at, Allowed&& allowed) {
    const int h = labels.height();
    const int w = labels.width();
    const int max_radius = std::max({at.row, h - 1 - at.row, at.col, w - 1 - at.col, 0});
    std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
    Pixel best{};
    std::optional<Label> best_id;

    auto consider = [&](int r, int c) {
        if (!labels.contains(r, c)) return;
        const Label id = labels(r, c);
        if (id == 0 || !allowed(id)) return;
        const std::int64_t dr = r - at.row;
        const std::int64_t dc = c - at.col;
        const std::int64_t d2 = dr * dr + dc * dc;
        const bool better = d2 < best_d2 || (d2 == best_d2 && (r < best.row || (r == best.row && c < best.col)));
        if (better) {
            best_d2 = d2;
            best = {r, c};
            best_id = id;
        }
    };

    // Every pixel on Chebyshev ring `radius` is at Euclidean distance >= radius.
    for (int radius = 0; radius <= max_radius; ++radius) {
        if (best_id && static_cast<std::int64_t>(radius) * radius > best_d2) break;
        if (radius == 0) {
            consider(at.row, at.col);
            continue;
        }
        for (int c = at.col - radius; c <= at.col + radius; ++c) {
            consider(at.row - radius, c);
            consider(at.row + radius, c);
        }
        for (int r = at.row - radius + 1; r <= at.row + radius - 1; ++r) {
            consider(r, at.col - radius);
            consider(r, at.col + radius);
        }
    }
    return best_id;
}

/// Id of the nonzero pixel closest to `at` (Euclidean). Throws when the mask has no nonzero pixel.
inline Label nearest_nonzero(const LabeledMask& labels, Pixel at) {
    auto id = nearest_nonzero_if(labels, at, [](Label) { return true; });
    if (!id) throw Error("no cores");
    return *id;
}

/// Exact squared Euclidean distance from each foreground pixel to the nearest background
/// pixel, where everything outside the raster counts as background.
inline Grid<double> squared_distance_transform(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    static constexpr double inf = std::numeric_limits<double>::infinity();

    // Lower envelope of parabolas (Felzenszwalb & Huttenlocher), with one background
    // sample padded on each side of every line.
    auto transform_1d = [](std::span<const double> f, std::span<double> d) {
        const int n = static_cast<int>(f.size());
        std::vector<int> v(n);
        std::vector<double> z(n + 1);
        int k = -1;
        for (int q = 0; q < n; ++q) {
            if (f[q] == inf) continue;
            if (k < 0) {
                k = 0;
                v[0] = q;
                z[0] = -inf;
                z[1] = inf;
                continue;
            }
            double s = 0.0;
            while (true) {
                const int p = v[k];
                s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
                if (s > z[k]) break;
                --k;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
        }
        if (k < 0) {
            std::fill(d.begin(), d.end(), inf);
            return;
        }
        int j = 0;
        for (int q = 0; q < n; ++q) {
            while (z[j + 1] < q) ++j;
            const double diff = q - v[j];
            d[q] = diff * diff + f[v[j]];
        }
    };

    Grid<double> cols(w, h);
    {
        std::vector<double> f(h + 2), d(h + 2);
        for (int c = 0; c < w; ++c) {
            f[0] = f[h + 1] = 0.0;
            for (int r = 0; r < h; ++r) f[r + 1] = mask(r, c) ? inf : 0.0;
            transform_1d(f, d);
            for (int r = 0; r < h; ++r) cols(r, c) = d[r + 1];
        }
    }
    Grid<double> out(w, h);
    {
        std::vector<double> f(w + 2), d(w + 2);
        for (int r = 0; r < h; ++r) {
            f[0] = f[w + 1] = 0.0;
            for (int c = 0; c < w; ++c) f[c + 1] = cols(r, c);
            transform_1d(f, d);
            for (int c = 0; c < w; ++c) out(r, c) = mask(r, c) ? d[c + 1] : 0.0;
        }
    }
    return out;
}

/// Pixel count per nonzero id.
inline std::map<Label, std::size_t> instance_areas(const LabeledMask& labels) {
    std::map<Label, std::size_t> areas;
    for (Label id : labels.values())
        if (id != 0) ++areas[id];
    return areas;
}

[[nodiscard]] inline std::size_t instance_count(const LabeledMask& labels) { return instance_areas(labels).size(); }

/// Quarter turn clockwise.
template <typename T>
Grid<T> rotate90(const Grid<T>& src) {
    Grid<T> out(src.height(), src.width());
    for (int r = 0; r < src.height(); ++r)
        for (int c = 0; c < src.width(); ++c) out(c, src.height() - 1 - r) = src(r, c);
    return out;
}

template <typename T>
Grid<T> flip_horizontal(const Grid<T>& src) {
    Grid<T> out(src.width(), src.height());
    for (int r = 0; r < src.height(); ++r)
        for (int c = 0; c < src.width(); ++c) out(r, src.width() - 1 - c) = src(r, c);
    return out;
}

template <typename T>
Grid<T> flip_vertical(const Grid<T>& src) {
    Grid<T> out(src.width(), src.height());
    for (int r = 0; r < src.height(); ++r)
        for (int c = 0; c < src.width(); ++c) out(src.height() - 1 - r, c) = src(r, c);
    return out;
}

} // namespace histokit
