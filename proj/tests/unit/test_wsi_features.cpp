#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "histokit/wsi_features.hpp"
#include "wsi_fixtures.hpp"

using namespace histokit;
using namespace histokit::wsi;

TEST(PositiveCounts, AllNd) {
    const auto m = fixtures::constant_map(3, 4, {1, 0, 0});
    const auto c = positive_patch_counts(m);
    EXPECT_EQ(c.nd, 12u);
    EXPECT_EQ(c.luad, 0u);
    EXPECT_EQ(c.lusc, 0u);
}

TEST(PositiveCounts, MixedGridAndTies) {
    auto m = fixtures::constant_map(2, 2, {0.1f, 0.8f, 0.1f});
    fixtures::set_triple(m, 0, 1, {0.2f, 0.2f, 0.6f});
    fixtures::set_triple(m, 1, 1, {0.7f, 0.2f, 0.1f});
    const auto c = positive_patch_counts(m);
    EXPECT_EQ(c.nd, 1u);
    EXPECT_EQ(c.luad, 2u);
    EXPECT_EQ(c.lusc, 1u);

    const float third = 1.0f / 3.0f;
    auto tie = fixtures::constant_map(1, 1, {third, third, third});
    EXPECT_EQ(argmax_class(tie, 0), ClassIndex::ND);
    fixtures::set_triple(tie, 0, 0, {0.2f, 0.4f, 0.4f});
    EXPECT_EQ(argmax_class(tie, 0), ClassIndex::LUAD);
}

TEST(MaxVote, MajorityAndTieBreaks) {
    auto m = fixtures::constant_map(1, 40, {0.1f, 0.2f, 0.7f});
    for (int c = 0; c < 30; ++c) fixtures::set_triple(m, 0, c, {0.1f, 0.7f, 0.2f});
    EXPECT_EQ(max_vote(m), SlideClass::LUAD);
    for (int c = 0; c < 30; ++c) fixtures::set_triple(m, 0, c, {0.1f, 0.2f, 0.7f});
    for (int c = 30; c < 40; ++c) fixtures::set_triple(m, 0, c, {0.1f, 0.7f, 0.2f});
    EXPECT_EQ(max_vote(m), SlideClass::LUSC);

    // one LUAD and one LUSC patch; mean LUSC 0.4 beats mean LUAD 0.3
    auto tie = fixtures::constant_map(1, 2, {0.2f, 0.5f, 0.3f});
    fixtures::set_triple(tie, 0, 1, {0.4f, 0.1f, 0.5f});
    EXPECT_NEAR(channel_mean(tie, ClassIndex::LUAD), 0.3, 1e-6);
    EXPECT_NEAR(channel_mean(tie, ClassIndex::LUSC), 0.4, 1e-6);
    EXPECT_EQ(max_vote(tie), SlideClass::LUSC);

    EXPECT_EQ(max_vote(fixtures::constant_map(2, 2, {1, 0, 0})), SlideClass::LUAD);
}

TEST(MaxVote, ScaleInvariant) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto m = fixtures::random_map(s, 7, 9);
        auto scaled = m;
        for (std::size_t i = 0; i < m.patches(); ++i) {
            double t[3], sum = 0;
            for (int k = 0; k < 3; ++k) sum += t[k] = m.values[3 * i + k] * 3.7;
            for (int k = 0; k < 3; ++k) scaled.values[3 * i + k] = float(t[k] / sum);
        }
        const auto a = positive_patch_counts(m), b = positive_patch_counts(scaled);
        EXPECT_EQ(a.nd, b.nd);
        EXPECT_EQ(a.luad, b.luad);
        EXPECT_EQ(a.lusc, b.lusc);
        EXPECT_EQ(max_vote(m), max_vote(scaled));
    }
}

TEST(Features, SchemaHasFiftyUniqueNames) {
    const auto& names = feature_names();
    ASSERT_EQ(names.size(), kFeatureCount);
    EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), kFeatureCount);
    EXPECT_EQ(names[0], "luad_mean");
    EXPECT_EQ(names[10], "luad_top1_area_t05");
    EXPECT_EQ(names[25], "lusc_top1_area_t05");
    EXPECT_EQ(names[40], "luad_total_area_t05");
    EXPECT_EQ(names[49], "lusc_components_t09");
}

TEST(Features, UniformLuad) {
    const auto f = extract_features(fixtures::constant_map(5, 6, {0.1f, 0.8f, 0.1f})).values;
    EXPECT_NEAR(f[0], 0.8, 1e-6);
    EXPECT_NEAR(f[1], 0.8, 1e-6);
    EXPECT_NEAR(f[2], 0.0, 1e-12);
    EXPECT_EQ(f[3], 1.0);
    EXPECT_EQ(f[10], 1.0); // single component covering the grid at t = 0.5
    EXPECT_EQ(f[11], 0.0);
    EXPECT_EQ(f[15], 1.0); // t = 0.7
    EXPECT_EQ(f[20], 0.0); // nothing above 0.9
    EXPECT_EQ(f[46], 1.0);
    EXPECT_NEAR(f[8], 1.0, 1e-9);
}

TEST(Features, ZeroLuadChannel) {
    const auto f = extract_features(fixtures::constant_map(4, 4, {0.3f, 0.0f, 0.7f})).values;
    for (int i = 0; i < 4; ++i) EXPECT_EQ(f[i], 0.0);
    EXPECT_EQ(f[8], 0.0);
    EXPECT_EQ(f[9], 0.0);
    for (int i = 10; i < 25; ++i) EXPECT_EQ(f[i], 0.0);
    for (int i = 40; i < 43; ++i) EXPECT_EQ(f[i], 0.0);
    EXPECT_EQ(f[46], 0.0);
    EXPECT_EQ(f[47], 0.0);
    // only epsilon guards the ratios when both channels vanish
    const auto g = extract_features(fixtures::constant_map(4, 4, {1.0f, 0.0f, 0.0f})).values;
    EXPECT_EQ(g[8], 0.0);
    EXPECT_EQ(g[9], 0.0);
}

TEST(Features, TopFiveAreasOnSixBySix) {
    auto m = fixtures::constant_map(6, 6, {0.9f, 0.05f, 0.05f});
    const int big[8][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}, {2, 0}, {2, 1}};
    for (auto [r, c] : big) fixtures::set_triple(m, r, c, {0.2f, 0.75f, 0.05f});
    for (int r = 3; r < 6; ++r) fixtures::set_triple(m, r, 5, {0.2f, 0.75f, 0.05f});
    const auto f = extract_features(m).values;
    EXPECT_DOUBLE_EQ(f[10], 8.0 / 36.0);
    EXPECT_DOUBLE_EQ(f[11], 3.0 / 36.0);
    EXPECT_EQ(f[12], 0.0);
    EXPECT_EQ(f[13], 0.0);
    EXPECT_EQ(f[14], 0.0);
    EXPECT_DOUBLE_EQ(f[40], 11.0 / 36.0);
    EXPECT_EQ(f[46], 2.0);
}

TEST(Features, DiagonalCellsAreSeparateComponents) {
    auto m = fixtures::constant_map(4, 4, {0.9f, 0.05f, 0.05f});
    fixtures::set_triple(m, 1, 1, {0.1f, 0.8f, 0.1f});
    fixtures::set_triple(m, 2, 2, {0.1f, 0.8f, 0.1f});
    EXPECT_EQ(extract_features(m).values[46], 2.0);
}

TEST(Features, AlwaysFiftyFiniteValues) {
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto fv = extract_features(fixtures::random_map(s, 3 + int(s % 9), 4 + int(s % 5)));
        for (double v : fv.values) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(Features, StatisticsIgnorePatchOrder) {
    std::mt19937 g(1);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto m = fixtures::random_map(s, 8, 8);
        const auto ref = extract_features(m).values;
        std::vector<std::size_t> order(m.patches());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), g);
        auto p = m;
        for (std::size_t i = 0; i < order.size(); ++i)
            for (int k = 0; k < 3; ++k) p.values[3 * i + k] = m.values[3 * order[i] + k];
        const auto f = extract_features(p).values;
        for (int i = 0; i < 10; ++i) EXPECT_EQ(f[i], ref[i]) << "feature " << i;
        for (int i = 40; i < 46; ++i) EXPECT_EQ(f[i], ref[i]) << "feature " << i;
    }
}

TEST(Features, ComponentFeaturesTranslationInvariant) {
    auto base = fixtures::constant_map(12, 12, {0.9f, 0.05f, 0.05f});
    auto moved = base;
    Rng rng(3);
    for (int r = 1; r < 6; ++r)
        for (int c = 1; c < 6; ++c) {
            if (!rng.chance(0.6)) continue;
            const std::array<float, 3> t = rng.chance(0.5) ? std::array<float, 3>{0.1f, 0.85f, 0.05f}
                                                           : std::array<float, 3>{0.02f, 0.03f, 0.95f};
            fixtures::set_triple(base, r, c, t);
            fixtures::set_triple(moved, r + 5, c + 4, t);
        }
    const auto a = extract_features(base).values, b = extract_features(moved).values;
    for (std::size_t i = 10; i < kFeatureCount; ++i) EXPECT_EQ(a[i], b[i]) << feature_names()[i];
}

TEST(Selection, FisherOrderingAndTies) {
    std::vector<FeatureVector> train;
    for (int i = 0; i < 10; ++i) {
        FeatureVector fv;
        fv.label = i < 5 ? SlideClass::LUAD : SlideClass::LUSC;
        fv.values[7] = (i < 5 ? 0.05 : 1.05) + 0.001 * i; // separable
        fv.values[3] = 0.5;                                // identical across classes
        fv.values[20] = fv.values[21] = (i < 5 ? 0.0 : 0.2) + 0.05 * (i % 3); // duplicate columns
        train.push_back(fv);
    }
    const auto sel = select_features(train, 25);
    ASSERT_EQ(sel.size(), 25u);
    EXPECT_EQ(sel[0], 7u);
    EXPECT_EQ(sel[1], 20u);
    EXPECT_EQ(sel[2], 21u);
    const auto score = fisher_scores(train);
    EXPECT_EQ(score[20], score[21]);
    EXPECT_GT(score[7], score[3]);

    const auto all = select_features(train, 50);
    EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 50u);
    for (std::size_t i = 1; i < all.size(); ++i) {
        EXPECT_GE(score[all[i - 1]], score[all[i]]);
        if (score[all[i - 1]] == score[all[i]]) {
            EXPECT_LT(all[i - 1], all[i]);
        }
    }
}

TEST(Selection, Errors) {
    std::vector<FeatureVector> one(4);
    for (auto& fv : one) fv.label = SlideClass::LUAD;
    EXPECT_THROW(select_features(one), Error);
    one[0].label = SlideClass::LUSC;
    EXPECT_THROW(select_features(one, 51), Error);
    one[1].label.reset();
    EXPECT_THROW(select_features(one), Error);
}

TEST(ProbMapFile, RoundTripAndStems) {
    const auto dir = std::filesystem::temp_directory_path() / "histokit_probmap";
    std::filesystem::remove_all(dir);
    auto m = fixtures::random_map(5, 6, 7);
    m.slide_id = "slide-5";
    save_probmap(dir / "s5", m);
    const auto back = load_probmap(dir / "s5.probmap.json");
    EXPECT_EQ(back.values, m.values);
    EXPECT_EQ(back.rows, 6);
    EXPECT_EQ(back.cols, 7);
    EXPECT_EQ(back.slide_id, "slide-5");
    EXPECT_EQ(load_probmap(dir / "s5.probmap.bin").values, m.values);
    EXPECT_EQ(std::filesystem::file_size(dir / "s5.probmap.bin"), 6u * 7u * 3u * 4u);
    EXPECT_EQ(probmap_stem("a/b.probmap.json"), std::filesystem::path("a/b"));
}

TEST(ProbMapFile, RejectsBadTriplesAndTruncation) {
    auto m = fixtures::constant_map(2, 2, {0.5f, 0.5f, 0.5f});
    EXPECT_THROW(m.validate(), Error);
    m = fixtures::constant_map(2, 2, {1.2f, -0.1f, -0.1f});
    EXPECT_THROW(m.validate(), Error);

    const auto dir = std::filesystem::temp_directory_path() / "histokit_probmap_bad";
    std::filesystem::remove_all(dir);
    save_probmap(dir / "x", fixtures::constant_map(2, 2, {1, 0, 0}));
    std::filesystem::resize_file(dir / "x.probmap.bin", 40);
    EXPECT_THROW(load_probmap(dir / "x"), IoError);
}
