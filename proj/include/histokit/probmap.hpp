#pragma once

// Slide-level class probability maps and their on-disk pair:
//   X.probmap.json  {rows, cols, stride, patch_size, classes: ["ND","LUAD","LUSC"], slide_id}
//   X.probmap.bin   rows*cols*3 little-endian float32, row-major, (nd, luad, lusc) per patch

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histokit/error.hpp"

namespace histokit::wsi {

enum class ClassIndex : int { ND = 0, LUAD = 1, LUSC = 2 };

enum class SlideClass { LUAD, LUSC };

inline const char* to_string(SlideClass c) { return c == SlideClass::LUAD ? "LUAD" : "LUSC"; }

inline SlideClass parse_slide_class(const std::string& s) {
    if (s == "LUAD") return SlideClass::LUAD;
    if (s == "LUSC") return SlideClass::LUSC;
    throw Error("unknown slide class '" + s + "' (expected LUAD or LUSC)");
}

/// Regression target of a class: LUAD -> 0, LUSC -> 1.
inline double target_of(SlideClass c) { return c == SlideClass::LUAD ? 0.0 : 1.0; }

struct ProbabilityMap {
    int rows = 0;
    int cols = 0;
    int stride = 1;
    int patch_size = 1;
    std::string slide_id;
    std::vector<float> values; // rows*cols*3, channel-interleaved

    [[nodiscard]] std::size_t patches() const noexcept { return static_cast<std::size_t>(rows) * cols; }
    [[nodiscard]] float at(std::size_t patch, ClassIndex c) const noexcept {
        return values[patch * 3 + static_cast<int>(c)];
    }
    [[nodiscard]] float at(int row, int col, ClassIndex c) const noexcept {
        return at(static_cast<std::size_t>(row) * cols + col, c);
    }

    void validate() const {
        if (rows < 1 || cols < 1) throw Error("probability map must have at least one patch");
        if (values.size() != patches() * 3) throw Error("probability map value count does not match rows*cols*3");
        for (std::size_t i = 0; i < patches(); ++i) {
            double sum = 0.0;
            for (int k = 0; k < 3; ++k) {
                const float v = values[i * 3 + k];
                if (!std::isfinite(v) || v < 0.0f) throw Error("probability map holds a negative or non-finite value");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-4) {
                throw Error("probability triple " + std::to_string(i) + " sums to " + std::to_string(sum));
            }
        }
    }
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
    }
    return v;
}

} // namespace detail

/// Accepts "X", "X.probmap.json" or "X.probmap.bin" and returns the X stem path.
inline std::filesystem::path probmap_stem(const std::filesystem::path& p) {
    std::string s = p.string();
    for (const char* suffix : {".probmap.json", ".probmap.bin"}) {
        const std::string suf(suffix);
        if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
            return s.substr(0, s.size() - suf.size());
        }
    }
    return p;
}

inline ProbabilityMap load_probmap(const std::filesystem::path& path) {
    const auto stem = probmap_stem(path).string();
    std::ifstream hin(stem + ".probmap.json");
    if (!hin) throw IoError("cannot open " + stem + ".probmap.json");
    nlohmann::json h;
    ProbabilityMap m;
    try {
        hin >> h;
        m.rows = h.at("rows").get<int>();
        m.cols = h.at("cols").get<int>();
        m.stride = h.at("stride").get<int>();
        m.patch_size = h.at("patch_size").get<int>();
        m.slide_id = h.at("slide_id").get<std::string>();
        if (h.at("classes") != nlohmann::json::array({"ND", "LUAD", "LUSC"})) {
            throw Error("probability map classes must be [\"ND\",\"LUAD\",\"LUSC\"]");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed probability map header " + stem + ".probmap.json: " + e.what());
    }
    if (m.rows < 1 || m.cols < 1) throw Error("probability map must have at least one patch");

    std::ifstream bin(stem + ".probmap.bin", std::ios::binary);
    if (!bin) throw IoError("cannot open " + stem + ".probmap.bin");
    const std::size_t n = m.patches() * 3;
    std::vector<std::uint32_t> raw(n);
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
    if (static_cast<std::size_t>(bin.gcount()) != n * 4) throw IoError("truncated " + stem + ".probmap.bin");
    if (bin.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + stem + ".probmap.bin");
    m.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.values[i] = std::bit_cast<float>(detail::to_little_endian(raw[i]));
    m.validate();
    return m;
}

inline void save_probmap(const std::filesystem::path& stem_path, const ProbabilityMap& m) {
    const auto stem = probmap_stem(stem_path).string();
    if (stem_path.has_parent_path()) std::filesystem::create_directories(stem_path.parent_path());
    nlohmann::json h = {{"rows", m.rows},         {"cols", m.cols},
                        {"stride", m.stride},     {"patch_size", m.patch_size},
                        {"classes", {"ND", "LUAD", "LUSC"}}, {"slide_id", m.slide_id}};
    std::ofstream hout(stem + ".probmap.json");
    if (!hout) throw IoError("cannot create " + stem + ".probmap.json");
    hout << h.dump(2) << '\n';
    std::ofstream bout(stem + ".probmap.bin", std::ios::binary);
    if (!bout) throw IoError("cannot create " + stem + ".probmap.bin");
    for (float v : m.values) {
        const std::uint32_t le = detail::to_little_endian(std::bit_cast<std::uint32_t>(v));
        bout.write(reinterpret_cast<const char*>(&le), 4);
    }
}

} // namespace histokit::wsi
