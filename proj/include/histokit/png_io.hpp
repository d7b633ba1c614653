#pragma once

// PNG persistence for tiles and masks.
//   labeled mask: 16-bit grayscale, pixel value = instance id
//   binary mask:  8-bit grayscale, 0 / 255 (any nonzero loads as foreground)
//   RGB tile:     8-bit RGB
// Writers emit no timestamps or text chunks so identical rasters give identical files.

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/raster.hpp"

namespace histokit::io {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 = gray, 3 = rgb
    int bit_depth = 0; // 8 or 16
    std::vector<std::uint16_t> samples;
};

inline void png_error_fn(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

inline DecodedPng read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    if (!info) throw IoError("png_create_info_struct failed");

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    DecodedPng out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    const int final_color = png_get_color_type(png, info);
    out.channels = (final_color & PNG_COLOR_MASK_COLOR) ? 3 : 1;

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(rowbytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int r = 0; r < out.height; ++r) rows[r] = buffer.data() + rowbytes * static_cast<std::size_t>(r);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(n);
    if (out.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
    }
    return out;
}

inline void write_png(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
                      const std::vector<png_byte>& packed) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw IoError("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    if (!info) throw IoError("png_create_info_struct failed");

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    for (int r = 0; r < height; ++r) {
        png_write_row(png, const_cast<png_bytep>(packed.data() + rowbytes * static_cast<std::size_t>(r)));
    }
    png_write_end(png, nullptr);
}

} // namespace detail

inline LabeledMask load_labeled_mask(const std::filesystem::path& path) {
    auto png = detail::read_png(path);
    if (png.channels != 1) throw IoError("labeled mask must be grayscale: " + path.string());
    LabeledMask out(png.width, png.height);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = png.samples[i];
    return out;
}

inline void save_labeled_mask(const std::filesystem::path& path, const LabeledMask& mask) {
    std::vector<png_byte> packed(mask.size() * 2);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] > 0xFFFFu) throw IoError("instance id exceeds 16-bit range: " + std::to_string(mask[i]));
        packed[2 * i] = static_cast<png_byte>(mask[i] >> 8);
        packed[2 * i + 1] = static_cast<png_byte>(mask[i] & 0xFF);
    }
    detail::write_png(path, mask.width(), mask.height(), 1, 16, packed);
}

inline BinaryMask load_binary_mask(const std::filesystem::path& path) {
    auto png = detail::read_png(path);
    BinaryMask out(png.width, png.height);
    const int ch = png.channels;
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool on = false;
        for (int k = 0; k < ch; ++k) on = on || png.samples[i * ch + k] != 0;
        out[i] = on ? 1 : 0;
    }
    return out;
}

inline void save_binary_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<png_byte> packed(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) packed[i] = mask[i] ? 255 : 0;
    detail::write_png(path, mask.width(), mask.height(), 1, 8, packed);
}

inline RgbImage load_rgb(const std::filesystem::path& path) {
    auto png = detail::read_png(path);
    RgbImage out(png.width, png.height);
    auto bytes = out.bytes();
    const int shift = png.bit_depth == 16 ? 8 : 0;
    for (std::size_t i = 0; i < out.pixels(); ++i) {
        for (int k = 0; k < 3; ++k) {
            const std::uint16_t v = png.channels == 3 ? png.samples[i * 3 + k] : png.samples[i];
            bytes[i * 3 + k] = static_cast<std::uint8_t>(v >> shift);
        }
    }
    return out;
}

inline void save_rgb(const std::filesystem::path& path, const RgbImage& image) {
    std::vector<png_byte> packed(image.bytes().begin(), image.bytes().end());
    detail::write_png(path, image.width(), image.height(), 3, 8, packed);
}

} // namespace histokit::io
