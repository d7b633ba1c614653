#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "histokit/png_io.hpp"

using namespace histokit;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("histokit_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST(PngIo, LabeledMaskRoundTrip) {
    const auto dir = scratch_dir("labels");
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto m = fixtures::random_labels(s, 17 + int(s), 9 + int(s % 4), 0xFFFF, 0.5);
        m(0, 0) = 0xFFFF;
        const auto path = dir / ("m" + std::to_string(s) + ".png");
        io::save_labeled_mask(path, m);
        EXPECT_EQ(io::load_labeled_mask(path), m);
    }
}

TEST(PngIo, RejectsIdsAbove16Bits) {
    LabeledMask m(2, 2);
    m(1, 1) = 0x10000;
    EXPECT_THROW(io::save_labeled_mask(scratch_dir("wide") / "m.png", m), IoError);
}

TEST(PngIo, BinaryMaskRoundTripAndNonzeroIsForeground) {
    const auto dir = scratch_dir("binary");
    const auto m = fixtures::random_binary(4, 21, 13, 0.4);
    io::save_binary_mask(dir / "b.png", m);
    EXPECT_EQ(io::load_binary_mask(dir / "b.png"), m);

    // a 16-bit label image read as a binary mask: any id counts as foreground
    LabeledMask l(3, 1);
    l(0, 1) = 1;
    l(0, 2) = 300;
    io::save_labeled_mask(dir / "l.png", l);
    const auto b = io::load_binary_mask(dir / "l.png");
    EXPECT_EQ(b(0, 0), 0);
    EXPECT_EQ(b(0, 1), 1);
    EXPECT_EQ(b(0, 2), 1);
}

TEST(PngIo, RgbRoundTrip) {
    const auto dir = scratch_dir("rgb");
    Rng rng(5);
    RgbImage img(19, 11);
    for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng.below(256));
    io::save_rgb(dir / "nested" / "x.png", img);
    EXPECT_EQ(io::load_rgb(dir / "nested" / "x.png"), img);
}

TEST(PngIo, EncodingIsDeterministic) {
    const auto dir = scratch_dir("bytes");
    const auto m = fixtures::random_labels(8, 40, 40, 50, 0.3);
    io::save_labeled_mask(dir / "a.png", m);
    io::save_labeled_mask(dir / "b.png", m);
    EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
}

TEST(PngIo, MissingOrCorruptFileThrows) {
    const auto dir = scratch_dir("bad");
    EXPECT_THROW(io::load_rgb(dir / "absent.png"), IoError);
    std::ofstream(dir / "junk.png") << "definitely not a png";
    EXPECT_THROW(io::load_binary_mask(dir / "junk.png"), IoError);
}
