#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "histokit/error.hpp"

namespace histokit {

struct Pixel {
    int row = 0;
    int col = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Dense row-major single-channel raster.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(checked_size(width, height), fill) {}
    Grid(int width, int height, std::vector<T> data) : width_(width), height_(height), data_(std::move(data)) {
        if (data_.size() != checked_size(width, height)) {
            throw DimensionMismatch("buffer length does not match " + std::to_string(width) + "x" +
                                    std::to_string(height));
        }
    }

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] bool contains(int row, int col) const noexcept {
        return row >= 0 && col >= 0 && row < height_ && col < width_;
    }
    [[nodiscard]] std::size_t index(int row, int col) const noexcept {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
    }

    T& operator()(int row, int col) noexcept { return data_[index(row, col)]; }
    const T& operator()(int row, int col) const noexcept { return data_[index(row, col)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<T> values() noexcept { return data_; }
    [[nodiscard]] std::span<const T> values() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const auto& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    static std::size_t checked_size(int width, int height) {
        if (width < 0 || height < 0) throw Error("negative raster dimensions");
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Foreground flags; any nonzero byte is foreground.
using BinaryMask = Grid<std::uint8_t>;

/// Instance ids, 0 = background. Ids need not be contiguous.
using Label = std::uint32_t;
using LabeledMask = Grid<Label>;

/// Interleaved 8-bit RGB.
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(int width, int height) : width_(width), height_(height), data_(pixel_count(width, height) * 3, 0) {}
    RgbImage(int width, int height, std::vector<std::uint8_t> rgb)
        : width_(width), height_(height), data_(std::move(rgb)) {
        if (data_.size() != pixel_count(width, height) * 3) throw DimensionMismatch("RGB buffer length");
    }

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t pixels() const noexcept { return data_.size() / 3; }

    std::uint8_t* at(int row, int col) noexcept {
        return data_.data() + (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + col) * 3;
    }
    const std::uint8_t* at(int row, int col) const noexcept {
        return data_.data() + (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + col) * 3;
    }

    [[nodiscard]] std::span<std::uint8_t> bytes() noexcept { return data_; }
    [[nodiscard]] std::span<const std::uint8_t> bytes() const noexcept { return data_; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    static std::size_t pixel_count(int width, int height) {
        if (width < 1 || height < 1) throw Error("RGB image dimensions must be >= 1");
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Physical pixel pitch.
class Mpp {
public:
    explicit Mpp(double microns_per_pixel) : value_(microns_per_pixel) {
        if (!(microns_per_pixel > 0.0)) throw Error("microns per pixel must be positive");
    }
    [[nodiscard]] double microns_per_pixel() const noexcept { return value_; }
    [[nodiscard]] double area_px(double area_um2) const noexcept { return area_um2 / (value_ * value_); }

private:
    double value_;
};

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw DimensionMismatch(std::string(what) + " (" + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + ")");
    }
}

/// Copies a square-or-rectangular window; the window must lie inside the source.
template <typename T>
Grid<T> crop(const Grid<T>& src, int row, int col, int width, int height) {
    if (row < 0 || col < 0 || row + height > src.height() || col + width > src.width()) {
        throw Error("crop window outside raster");
    }
    Grid<T> out(width, height);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) out(r, c) = src(row + r, col + c);
    return out;
}

inline RgbImage crop(const RgbImage& src, int row, int col, int width, int height) {
    if (row < 0 || col < 0 || row + height > src.height() || col + width > src.width()) {
        throw Error("crop window outside image");
    }
    RgbImage out(width, height);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            for (int k = 0; k < 3; ++k) out.at(r, c)[k] = src.at(row + r, col + c)[k];
    return out;
}

} // namespace histokit
