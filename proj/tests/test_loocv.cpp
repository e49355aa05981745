#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rbfkan/benchmarks.hpp"
#include "rbfkan/loocv.hpp"
#include "rbfkan/random.hpp"

using namespace rbfkan;

TEST(Rippa, ZeroTargetsGiveZeroErrors)
{
    const std::vector<double> x = {0.0, 1.0};
    const std::vector<double> y = {0.0, 0.0};
    for (auto kind : all_kernels) {
        const auto e = rippa_errors(x, y, kind, 0.7, 1e-9);
        EXPECT_EQ(e, (std::vector<double>{0.0, 0.0})) << kernel_name(kind);
    }
}

TEST(Rippa, ThreePointsMatchExplicitRefit)
{
    const std::vector<double> x = {0.0, 0.5, 1.0};
    const std::vector<double> y = {0.0, 1.0, 0.0};
    const auto e = rippa_errors(x, y, KernelKind::GA, 0.3, 1e-9);
    const auto ref = oracle::explicit_loo(x, y, KernelKind::GA, 0.3, 1e-9);
    EXPECT_LE(oracle::rel_max_diff(e, ref), 1e-8);
}

TEST(Rippa, ThirtyRandomPointsEveryKernel)
{
    Xoshiro256 rng(31);
    std::vector<double> x(30);
    std::vector<double> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
        x[i] = rng.uniform();
        y[i] = rng.normal();
    }
    for (auto kind : all_kernels) {
        const auto e = rippa_errors(x, y, kind, 0.5, 1e-9);
        const auto ref = oracle::explicit_loo(x, y, kind, 0.5, 1e-9);
        EXPECT_LE(oracle::rel_max_diff(e, ref), 1e-7) << kernel_name(kind);
    }
}

TEST(Rippa, RejectsBadInput)
{
    const std::vector<double> x = {0.0, 1.0};
    EXPECT_THROW(rippa_errors(x, std::vector<double>{1.0}, KernelKind::GA, 1.0, 1e-9), DomainError);
    EXPECT_THROW(rippa_errors(std::vector<double>{0.0}, std::vector<double>{1.0}, KernelKind::GA, 1.0, 1e-9),
                 DomainError);
    EXPECT_THROW(rippa_errors(x, x, KernelKind::GA, 0.0, 1e-9), DomainError);
    EXPECT_THROW(rippa_errors(x, x, KernelKind::GA, 1.0, 0.0), DomainError);
    EXPECT_THROW(rippa_errors(std::vector<double>{0.0, NAN}, x, KernelKind::GA, 1.0, 1e-9), DomainError);
}

TEST(Rippa, DuplicatePointsWithoutRegularizationRaiseRankError)
{
    // Two identical points make the unregularized matrix exactly singular; with
    // a vanishing lambda the factorization must report it instead of dividing by 0.
    const std::vector<double> x = {0.2, 0.2, 0.8};
    const std::vector<double> y = {1.0, 2.0, 3.0};
    EXPECT_THROW(rippa_errors(x, y, KernelKind::GA, 0.5, 1e-300), NumericalRankError);
}

TEST(SearchH, ZeroTargetsPickFirstCandidate)
{
    std::vector<double> x(12);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i) / 11.0;
    }
    const std::vector<double> y(12, 0.0);
    LoocvConfig cfg;
    const auto r = search_h(x, y, KernelKind::GA, cfg);
    EXPECT_EQ(r.h_opt, cfg.h_min);
    EXPECT_EQ(r.err_min, 0.0);
    EXPECT_EQ(r.curve.size(), cfg.n_coarse + cfg.n_fine);
}

TEST(SearchH, CurveLayoutAndInvariants)
{
    Xoshiro256 rng(32);
    std::vector<double> x(25);
    std::vector<double> y(25);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i) / 24.0;
        y[i] = std::cos(3.0 * x[i]) + 0.1 * rng.normal();
    }
    LoocvConfig cfg;
    cfg.n_coarse = 10;
    cfg.n_fine = 7;
    cfg.h_max = 3.0;
    for (auto kind : all_kernels) {
        const auto r = search_h(x, y, kind, cfg);
        ASSERT_EQ(r.curve.size(), 17u);
        EXPECT_DOUBLE_EQ(r.stage2_halfwidth, 2.0 * (cfg.h_max - cfg.h_min) / 10.0);
        EXPECT_EQ(r.curve.front().h, cfg.h_min);
        EXPECT_EQ(r.curve[9].h, cfg.h_max);
        double min_err = INFINITY;
        for (std::size_t i = 0; i < r.curve.size(); ++i) {
            EXPECT_EQ(r.curve[i].stage, i < 10 ? 1 : 2);
            EXPECT_GT(r.curve[i].h, 0.0);
            min_err = std::min(min_err, r.curve[i].err);
        }
        EXPECT_EQ(r.err_min, min_err);
        EXPECT_GT(r.h_opt, 0.0);
        EXPECT_GE(r.h_opt, cfg.h_min - r.stage2_halfwidth);
        EXPECT_LE(r.h_opt, cfg.h_max + r.stage2_halfwidth);
        // The winner is the first candidate attaining the minimum.
        const auto first = std::find_if(r.curve.begin(), r.curve.end(),
                                        [&](const LoocvCurvePoint &p) { return p.err == min_err; });
        EXPECT_EQ(first->h, r.h_opt);
    }
}

TEST(SearchH, StageTwoWindowIsClippedAboveZero)
{
    std::vector<double> x(10);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i);
    }
    const std::vector<double> y(10, 0.0);
    LoocvConfig cfg;
    const auto r = search_h(x, y, KernelKind::GA, cfg);
    const auto &fine_first = r.curve[cfg.n_coarse];
    EXPECT_EQ(fine_first.stage, 2);
    EXPECT_DOUBLE_EQ(fine_first.h, 0.5 * cfg.h_min);
}

TEST(SearchH, MatchesDenseGridOracle)
{
    std::vector<double> x(40);
    std::vector<double> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x[i] = static_cast<double>(i) / 39.0;
        y[i] = std::sin(2.0 * std::numbers::pi * x[i]);
    }
    LoocvConfig cfg;
    cfg.h_min = 0.01;
    cfg.h_max = 2.0;
    const auto r = search_h(x, y, KernelKind::GA, cfg);

    // Brute force over 1000 equally spaced h on the same interval.
    double best_h = 0.0;
    double best_err = INFINITY;
    for (int i = 0; i < 1000; ++i) {
        const double h = cfg.h_min + (cfg.h_max - cfg.h_min) * i / 999.0;
        double err = INFINITY;
        try {
            const auto e = rippa_errors(x, y, KernelKind::GA, h, cfg.lambda);
            err = 0.0;
            for (double v : e) {
                err = std::max(err, std::abs(v));
            }
        } catch (const NumericalRankError &) {
        }
        if (err < best_err) {
            best_err = err;
            best_h = h;
        }
    }
    const double fine_step = 2.0 * r.stage2_halfwidth / static_cast<double>(cfg.n_fine - 1);
    EXPECT_LE(std::abs(r.h_opt - best_h), fine_step) << "search " << r.h_opt << " dense " << best_h;
}

TEST(SearchH, Deterministic)
{
    const auto ds = generate_dataset(TargetFunction::F1, 300, 5);
    LoocvConfig cfg;
    const auto [x, y] = prepare_auxiliary(ds, cfg);
    EXPECT_EQ(search_h(x, y, KernelKind::M4, cfg), search_h(x, y, KernelKind::M4, cfg));
}

TEST(SearchH, RejectsInvalidConfig)
{
    const std::vector<double> x = {0.0, 0.5, 1.0};
    LoocvConfig cfg;
    cfg.h_min = 2.0;
    cfg.h_max = 1.0;
    EXPECT_THROW(search_h(x, x, KernelKind::GA, cfg), DomainError);
    cfg = {};
    cfg.n_coarse = 1;
    EXPECT_THROW(search_h(x, x, KernelKind::GA, cfg), DomainError);
    cfg = {};
    cfg.lambda = 0.0;
    EXPECT_THROW(search_h(x, x, KernelKind::GA, cfg), DomainError);
    cfg = {};
    cfg.max_points = 9;
    EXPECT_THROW(search_h(x, x, KernelKind::GA, cfg), DomainError);
}

TEST(SearchH, AllCandidatesSingularRaisesSearchFailed)
{
    // Two coincident points and a lambda too small to lift them off singularity.
    const std::vector<double> x = {0.3, 0.3};
    const std::vector<double> y = {1.0, -1.0};
    LoocvConfig cfg;
    cfg.lambda = 1e-300;
    cfg.n_coarse = 3;
    cfg.n_fine = 2;
    EXPECT_THROW(search_h(x, y, KernelKind::GA, cfg), SearchFailedError);
}

namespace
{

Dataset tiny_dataset(std::vector<double> xs, std::vector<double> ys)
{
    Dataset ds;
    ds.inputs = Matrix(xs.size(), 2);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ds.inputs(i, 0) = xs[i];
        ds.inputs(i, 1) = 0.5;
        ds.train_idx.push_back(i);
    }
    ds.targets = std::move(ys);
    return ds;
}

} // namespace

TEST(PrepareAuxiliary, SmallSetPassesThroughSorted)
{
    const auto ds = tiny_dataset({0.9, 0.1, 0.5, 0.3, 0.7}, {9, 1, 5, 3, 7});
    LoocvConfig cfg;
    cfg.max_points = 400;
    const auto [x, y] = prepare_auxiliary(ds, cfg);
    EXPECT_EQ(x, (std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9}));
    EXPECT_EQ(y, (std::vector<double>{1, 3, 5, 7, 9}));
}

TEST(PrepareAuxiliary, DuplicatesCollapseToMeanTarget)
{
    const auto ds = tiny_dataset({0.5, 0.2, 0.5}, {1.0, 7.0, 3.0});
    const auto [x, y] = prepare_auxiliary(ds, LoocvConfig{});
    EXPECT_EQ(x, (std::vector<double>{0.2, 0.5}));
    EXPECT_EQ(y, (std::vector<double>{7.0, 2.0}));
}

TEST(PrepareAuxiliary, SubsamplesToCapStrictlyIncreasing)
{
    const auto ds = generate_dataset(TargetFunction::F1, 2500, 3);
    LoocvConfig cfg;
    const auto [x, y] = prepare_auxiliary(ds, cfg);
    ASSERT_EQ(x.size(), 200u);
    ASSERT_EQ(y.size(), 200u);
    for (std::size_t i = 1; i < x.size(); ++i) {
        EXPECT_LT(x[i - 1], x[i]);
    }
    // Endpoints of the sorted training coordinates survive the thinning.
    double lo = 1.0;
    double hi = 0.0;
    for (auto i : ds.train_idx) {
        lo = std::min(lo, ds.inputs(i, 0));
        hi = std::max(hi, ds.inputs(i, 0));
    }
    EXPECT_EQ(x.front(), lo);
    EXPECT_EQ(x.back(), hi);
}

TEST(PrepareAuxiliary, UsesRequestedCoordinate)
{
    const auto ds = generate_dataset(TargetFunction::F2, 50, 4);
    LoocvConfig cfg;
    cfg.coordinate_index = 1;
    const auto [x, y] = prepare_auxiliary(ds, cfg);
    std::vector<double> expect;
    for (auto i : ds.train_idx) {
        expect.push_back(ds.inputs(i, 1));
    }
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(x, expect);
    cfg.coordinate_index = 2;
    EXPECT_THROW(prepare_auxiliary(ds, cfg), DomainError);
}

TEST(PrepareAuxiliary, DegenerateData)
{
    EXPECT_THROW(prepare_auxiliary(tiny_dataset({0.4, 0.4, 0.4}, {1, 2, 3}), LoocvConfig{}), DegenerateDataError);
    EXPECT_THROW(prepare_auxiliary(tiny_dataset({0.4}, {1}), LoocvConfig{}), DegenerateDataError);
}
