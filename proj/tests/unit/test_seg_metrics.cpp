#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "histokit/seg_metrics.hpp"
#include "histokit/synth.hpp"

using namespace histokit;
using namespace histokit::metrics;

namespace {

// gt: one nucleus of 100 px; pred: p1 (60 px, 50 inside) and p2 (40 px, 30 inside).
std::pair<LabeledMask, LabeledMask> hand_trace_fixture() {
    LabeledMask gt(200, 1), pred(200, 1);
    for (int c = 0; c < 100; ++c) gt(0, c) = 1;
    for (int c = 50; c < 110; ++c) pred(0, c) = 1;
    for (int c = 20; c < 50; ++c) pred(0, c) = 2;
    for (int c = 110; c < 120; ++c) pred(0, c) = 2;
    return {gt, pred};
}

} // namespace

TEST(Dice1, Identity) {
    const auto m = fixtures::random_labels(1, 20, 20, 5, 0.4);
    EXPECT_DOUBLE_EQ(dice1(m, m), 1.0);
}

TEST(Dice1, DirectFormula) {
    LabeledMask a(200, 1), b(200, 1);
    for (int c = 0; c < 100; ++c) a(0, c) = 1;
    for (int c = 40; c < 120; ++c) b(0, c) = 3;
    EXPECT_NEAR(dice1(a, b), 120.0 / 180.0, 1e-15);
}

TEST(Dice1, BothEmptyIsOne) { EXPECT_EQ(dice1(LabeledMask(4, 4), LabeledMask(4, 4)), 1.0); }

TEST(Dice1, ShapeMismatch) { EXPECT_THROW(dice1(LabeledMask(4, 4), LabeledMask(4, 5)), DimensionMismatch); }

TEST(Dice2, HandTrace) {
    const auto [gt, pred] = hand_trace_fixture();
    const auto t = dice2_terms(gt, pred);
    EXPECT_EQ(t.intersection_area, 80u);
    EXPECT_EQ(t.total_markup_area, 300u);
    EXPECT_DOUBLE_EQ(dice2(gt, pred), 160.0 / 300.0);
}

TEST(Dice2, IdentityIsOne) {
    LabeledMask m(10, 10);
    fixtures::paint_rect(m, 2, 2, 4, 4, 7);
    EXPECT_EQ(dice2(m, m), 1.0);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto r = fixtures::random_labels(s, 30, 30, 12, 0.3);
        EXPECT_EQ(dice2(r, r), 1.0);
    }
}

TEST(Dice2, DisjointIsZeroAndEmptyIsOne) {
    LabeledMask a(10, 1), b(10, 1);
    a(0, 0) = 1;
    b(0, 9) = 1;
    EXPECT_EQ(dice2(a, b), 0.0);
    EXPECT_EQ(dice2(a, LabeledMask(10, 1)), 0.0);
    EXPECT_EQ(dice2(LabeledMask(10, 1), LabeledMask(10, 1)), 1.0);
}

TEST(Dice2, NonIntersectingInstancesDoNotCount) {
    LabeledMask gt(20, 1), pred(20, 1);
    for (int c = 0; c < 5; ++c) gt(0, c) = pred(0, c) = 1;
    for (int c = 10; c < 15; ++c) pred(0, c) = 2; // pure false positive
    EXPECT_EQ(dice2(gt, pred), 1.0);
    EXPECT_LT(dice1(gt, pred), 1.0);
}

TEST(Dice2, SplitOfOneNucleusLowersOnlyDice2) {
    LabeledMask gt(10, 10), pred(10, 10);
    fixtures::paint_rect(gt, 0, 0, 10, 10, 1);
    fixtures::paint_rect(pred, 0, 0, 10, 5, 1);
    fixtures::paint_rect(pred, 0, 5, 10, 5, 2);
    EXPECT_EQ(dice1(gt, pred), 1.0);
    EXPECT_LT(dice2(gt, pred), 1.0);
    EXPECT_DOUBLE_EQ(dice2(gt, pred), 200.0 / 300.0);
}

TEST(Dice2, SymmetricAndBounded) {
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto [gt, pred] = synth::random_mask_pair(s, 64, 12);
        const double d = dice2(gt, pred);
        EXPECT_EQ(d, dice2(pred, gt));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
        const double d1 = dice1(gt, pred);
        EXPECT_GE(d1, 0.0);
        EXPECT_LE(d1, 1.0);
    }
}

TEST(Dice2, MatchesNestedLoopOracle) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto [gt, pred] = synth::random_mask_pair(s, 128, 40);
        EXPECT_NEAR(dice2(gt, pred), synth::oracle_dice2(gt, pred), 1e-12) << "seed " << s;
    }
}

TEST(ScoreTile, IdentityAndEmpty) {
    const auto m = fixtures::random_labels(2, 16, 16, 4, 0.5);
    const auto s = score_tile(m, m);
    EXPECT_EQ(s.dice1, 1.0);
    EXPECT_EQ(s.dice2, 1.0);
    EXPECT_EQ(s.average, 1.0);
    const auto e = score_tile(LabeledMask(3, 3), LabeledMask(3, 3));
    EXPECT_EQ(e.average, 1.0);
}

TEST(ScoreTile, HandTraceAverage) {
    // 100 px vs 100 px with 80 px overlap: dice1 = 160/200.
    const auto [gt, pred] = hand_trace_fixture();
    const auto s = score_tile(gt, pred);
    EXPECT_DOUBLE_EQ(s.dice1, 0.8);
    EXPECT_DOUBLE_EQ(s.dice2, 160.0 / 300.0);
    EXPECT_DOUBLE_EQ(s.average, (0.8 + 160.0 / 300.0) / 2.0);
    EXPECT_NEAR(s.average, 0.6667, 1e-4);
}

TEST(ScoreDataset, MeanOfTiles) {
    const auto m = fixtures::random_labels(3, 8, 8, 3, 0.5);
    LabeledMask other(8, 8);
    other(0, 0) = 0;
    std::vector<std::pair<LabeledMask, LabeledMask>> one{{m, m}};
    EXPECT_EQ(score_dataset(one), 1.0);

    LabeledMask a(4, 1), b(4, 1);
    a(0, 0) = 1;
    b(0, 3) = 1;
    std::vector<std::pair<LabeledMask, LabeledMask>> two{{m, m}, {a, b}};
    EXPECT_EQ(score_dataset(two), 0.5);
    EXPECT_THROW(score_dataset({}), Error);
}

TEST(ScoreDataset, PermutationInvariant) {
    std::vector<std::pair<LabeledMask, LabeledMask>> pairs;
    for (std::uint64_t s = 0; s < 12; ++s) pairs.push_back(synth::random_mask_pair(s, 48, 8));
    const double ref = score_dataset(pairs);
    std::mt19937 g(4);
    for (int k = 0; k < 10; ++k) {
        std::shuffle(pairs.begin(), pairs.end(), g);
        EXPECT_EQ(score_dataset(pairs), ref);
    }
}
