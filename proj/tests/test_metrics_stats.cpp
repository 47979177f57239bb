#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "wavefuse/harness.hpp"
#include "wavefuse/metrics.hpp"
#include "wavefuse/stats.hpp"

using namespace wavefuse;

namespace {

BinaryMask mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> px) { return {h, w, std::move(px)}; }

RunResult run_with(std::string method, std::uint64_t seed, std::vector<double> acc) {
    RunResult r;
    r.method = std::move(method);
    r.seed = seed;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        RoundRecord rec;
        rec.round = i + 1;
        rec.metrics = {acc[i], acc[i] / 2.0};
        r.rounds.push_back(rec);
    }
    return r;
}

}  // namespace

TEST(Accuracy, Examples) {
    const std::vector<int> y{0, 1, 2, 1};
    EXPECT_EQ(accuracy(y, y), 1.0);
    EXPECT_EQ(accuracy(std::vector<int>{1, 2, 0, 0}, y), 0.0);
    EXPECT_EQ(accuracy(std::vector<int>{0, 1, 2, 2}, y), 0.75);
    EXPECT_THROW(accuracy(std::vector<int>{0}, y), Error);
}

TEST(MacroF1, Examples) {
    const std::vector<int> y{0, 1, 2, 1, 0};
    EXPECT_EQ(macro_f1(y, y, 3), 1.0);
    // Everything predicted positive, half the labels positive.
    EXPECT_NEAR(macro_f1(std::vector<int>{1, 1, 1, 1}, std::vector<int>{1, 1, 0, 0}, 2), 1.0 / 3.0, 1e-12);
    const auto per = per_class_f1(std::vector<int>{1, 1, 1, 1}, std::vector<int>{1, 1, 0, 0}, 2);
    EXPECT_EQ(per[0], 0.0);
    EXPECT_NEAR(per[1], 2.0 / 3.0, 1e-12);
    // A class absent from both predictions and labels contributes zero.
    EXPECT_NEAR(macro_f1(std::vector<int>{1, 1, 1}, std::vector<int>{1, 1, 1}, 2), 0.5, 1e-12);
    EXPECT_THROW(macro_f1(std::vector<int>{0, 1}, std::vector<int>{0}, 2), Error);
}

TEST(F1Score, BinaryUsesPositiveClass) {
    const std::vector<int> preds{1, 1, 1, 1}, labels{1, 1, 0, 0};
    EXPECT_NEAR(f1_score(preds, labels, 2), 2.0 / 3.0, 1e-12);
    const std::vector<int> p3{0, 1, 2, 2}, y3{0, 1, 2, 1};
    EXPECT_EQ(f1_score(p3, y3, 3), macro_f1(p3, y3, 3));
}

TEST(Overlap, Examples) {
    const auto a = mask(2, 2, {1, 1, 0, 0});
    EXPECT_EQ(dice(a, a), 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
    const auto disjoint = mask(2, 2, {0, 0, 1, 1});
    EXPECT_EQ(dice(a, disjoint), 0.0);
    EXPECT_EQ(iou(a, disjoint), 0.0);
    const auto half = mask(2, 2, {0, 1, 1, 0});
    EXPECT_NEAR(dice(a, half), 0.5, 1e-15);
    EXPECT_NEAR(iou(a, half), 1.0 / 3.0, 1e-15);
    const auto empty = mask(2, 2, {0, 0, 0, 0});
    EXPECT_EQ(dice(empty, empty), 1.0);
    EXPECT_EQ(iou(empty, empty), 1.0);
    EXPECT_THROW(dice(a, mask(1, 4, {1, 1, 0, 0})), Error);
}

TEST(Overlap, IouDiceIdentity) {
    Rng rng(21);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t h = 1 + uniform_index(rng, 6), w = 1 + uniform_index(rng, 6);
        const double pa = uniform01(rng), pb = uniform01(rng);
        BinaryMask a{h, w, {}}, b{h, w, {}};
        for (std::size_t i = 0; i < h * w; ++i) {
            a.pixels.push_back(uniform01(rng) < pa);
            b.pixels.push_back(uniform01(rng) < pb);
        }
        const double d = dice(a, b);
        EXPECT_NEAR(iou(a, b), d / (2.0 - d), 1e-12);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
    }
}

TEST(MeanStd, TwoPointsAndSingle) {
    const auto ms = mean_std(std::vector<double>{0.6, 0.8});
    EXPECT_NEAR(ms.mean, 0.7, 1e-12);
    EXPECT_NEAR(ms.std, std::sqrt(0.02), 1e-12);
    EXPECT_NEAR(ms.std, 0.1414, 1e-4);
    EXPECT_EQ(mean_std(std::vector<double>{0.3}).std, 0.0);
}

TEST(PairedTTest, ReferenceFixture) {
    const std::vector<double> a{1.0, 2.0, 3.0}, zero{0.0, 0.0, 0.0};
    const auto r = paired_t_test(a, zero);
    EXPECT_NEAR(r.t, 3.4641, 1e-4);
    EXPECT_NEAR(r.t, 2.0 * std::sqrt(3.0), 1e-12);
    EXPECT_EQ(r.df, 2.0);
    EXPECT_NEAR(r.p, 0.0742, 1e-4);
    EXPECT_NEAR(r.p, oracle::t_two_sided_p(r.t, 2.0), 1e-6);
}

TEST(PairedTTest, EqualSamplesGiveNoEvidence) {
    const std::vector<double> a{0.5, 0.7, 0.6};
    const auto r = paired_t_test(a, a);
    EXPECT_EQ(r.t, 0.0);
    EXPECT_EQ(r.p, 1.0);
}

TEST(PairedTTest, SignFlipNegatesStatistic) {
    Rng rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(6), b(6);
        for (std::size_t i = 0; i < 6; ++i) {
            a[i] = uniform01(rng);
            b[i] = uniform01(rng);
        }
        const auto ab = paired_t_test(a, b), ba = paired_t_test(b, a);
        EXPECT_DOUBLE_EQ(ab.t, -ba.t);
        EXPECT_DOUBLE_EQ(ab.p, ba.p);
    }
}

TEST(PairedTTest, Errors) {
    try {
        paired_t_test(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_test);
    }
    try {
        paired_t_test(std::vector<double>{1.0}, std::vector<double>{0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::sample_size);
    }
    try {
        paired_t_test(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::length_mismatch);
    }
}

TEST(StudentT, MatchesIntegrationOracle) {
    for (int df = 2; df <= 30; ++df) {
        for (double t : {0.1, 0.5, 1.0, 1.7, 2.3, 3.4641, 5.0, 9.0}) {
            EXPECT_NEAR(student_t_two_sided_p(t, df), oracle::t_two_sided_p(t, df), 1e-4) << "df=" << df << " t=" << t;
            EXPECT_DOUBLE_EQ(student_t_two_sided_p(-t, df), student_t_two_sided_p(t, df));
        }
    }
}

TEST(StudentT, OneDegreeOfFreedomIsCauchy) {
    for (double t : {0.3, 1.0, 4.0}) {
        EXPECT_NEAR(student_t_two_sided_p(t, 1.0), 1.0 - 2.0 * std::atan(t) / std::numbers::pi, 1e-9);
    }
}

TEST(Aggregate, TwoRunMeanAndStd) {
    const std::vector<RunResult> runs{run_with("bald", 0, {0.5, 0.6}), run_with("bald", 1, {0.5, 0.8})};
    const auto rows = aggregate_runs(runs);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[2].round, 2u);
    EXPECT_EQ(rows[2].metric, MetricKind::accuracy);
    EXPECT_NEAR(rows[2].mean, 0.7, 1e-12);
    EXPECT_NEAR(rows[2].std, 0.1414, 1e-4);
    EXPECT_EQ(rows[2].n_runs, 2u);
    EXPECT_EQ(rows[0].std, 0.0);
    EXPECT_FALSE(rows[0].single_run);
}

TEST(Aggregate, SingleRunIsFlagged) {
    const std::vector<RunResult> runs{run_with("random", 0, {0.4})};
    const auto rows = aggregate_runs(runs);
    EXPECT_TRUE(rows[0].single_run);
    EXPECT_EQ(rows[0].std, 0.0);
}

TEST(Aggregate, RunOrderDoesNotMatter) {
    Rng rng(23);
    std::vector<RunResult> runs;
    for (std::uint64_t s = 0; s < 7; ++s) {
        runs.push_back(run_with("entropy", s, {uniform01(rng), uniform01(rng), uniform01(rng)}));
    }
    const auto base = aggregate_runs(runs);
    for (int trial = 0; trial < 20; ++trial) {
        shuffle(std::span<RunResult>(runs), rng);
        const auto again = aggregate_runs(runs);
        ASSERT_EQ(again.size(), base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            EXPECT_EQ(again[i].mean, base[i].mean);
            EXPECT_EQ(again[i].std, base[i].std);
        }
    }
}

TEST(Aggregate, MisalignedRoundsRejected) {
    auto b = run_with("bald", 1, {0.5, 0.7});
    b.rounds[1].round = 3;
    const std::vector<RunResult> runs{run_with("bald", 0, {0.5, 0.6}), b};
    try {
        aggregate_runs(runs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::aggregation);
    }
    const std::vector<RunResult> short_runs{run_with("bald", 0, {0.5, 0.6}), run_with("bald", 1, {0.5})};
    EXPECT_THROW(aggregate_runs(short_runs), Error);
}
