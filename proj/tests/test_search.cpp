#include "spinsense/search.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace spinsense;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<SweepPoint> points(const std::vector<double>& values, double step = 1.0) {
    std::vector<SweepPoint> v;
    for (std::size_t i = 0; i < values.size(); ++i) v.push_back({step * static_cast<double>(i), values[i], false, {}});
    return v;
}

TStarPolicy small_policy(double stop) {
    TStarPolicy p;
    p.grid.start = 0.0;
    p.grid.stop = stop;
    p.grid.coarse_step = 0.5;
    p.grid.fine_step = 0.1;
    p.grid.window = 1.0;
    p.magnetization_horizon = 40.0;
    return p;
}

}  // namespace

TEST(GridSearchAngles, CosineSquaredMaximumAtOrigin) {
    const auto r = grid_search_angles([](double th, double) { return std::pow(std::cos(th / 2), 2); }, kPi / 100,
                                      kPi / 100);
    EXPECT_EQ(r.best.theta, 0.0);
    EXPECT_EQ(r.best.phi, 0.0);
    EXPECT_EQ(r.surface.size(), 101u * 200u);
}

TEST(GridSearchAngles, TiesGoToSmallestThetaThenPhi) {
    // Maxima at phi = pi/2 and 3pi/2 for every theta in the upper half.
    const auto r = grid_search_angles(
        [](double th, double ph) { return (th >= kPi / 2 ? 1.0 : 0.0) * std::abs(std::sin(ph)); }, kPi / 10, kPi / 10);
    EXPECT_NEAR(r.best.theta, kPi / 2, 1e-15);
    EXPECT_NEAR(r.best.phi, kPi / 2, 1e-15);
}

TEST(GridSearchAngles, WorkerCountIndependent) {
    auto f = [](double th, double ph) { return std::sin(3 * th) * std::cos(2 * ph + 0.1); };
    const auto a = grid_search_angles(f, kPi / 20, kPi / 20, 1);
    const auto b = grid_search_angles(f, kPi / 20, kPi / 20, 3);
    EXPECT_EQ(a.best.theta, b.best.theta);
    EXPECT_EQ(a.best.phi, b.best.phi);
    ASSERT_EQ(a.surface.size(), b.surface.size());
    for (std::size_t i = 0; i < a.surface.size(); ++i) EXPECT_EQ(a.surface[i].value, b.surface[i].value);
}

TEST(GridSearchAngles, RejectsNonDividingStep) {
    auto f = [](double, double) { return 0.0; };
    EXPECT_THROW(grid_search_angles(f, 0.3, kPi / 10), std::invalid_argument);
    EXPECT_THROW(grid_search_angles(f, kPi / 10, 0.0), std::invalid_argument);
}

TEST(StrictlyBetter, ToleranceAndNonFinite) {
    EXPECT_FALSE(strictly_better(1.0 + 1e-12, 1.0, true));
    EXPECT_TRUE(strictly_better(1.0 + 1e-6, 1.0, true));
    EXPECT_TRUE(strictly_better(0.5, 1.0, false));
    EXPECT_FALSE(strictly_better(NAN, 1.0, false));
    EXPECT_TRUE(strictly_better(2.0, INFINITY, false));
}

TEST(ScanGrid, PointsAndValidation) {
    ScanGrid g;
    g.start = 0.0;
    g.stop = 1.0;
    g.coarse_step = 0.25;
    g.fine_step = 0.05;
    g.window = 0.1;
    EXPECT_EQ(g.coarse_points().size(), 5u);
    EXPECT_EQ(g.coarse_points().back(), 1.0);
    const auto f = g.fine_points(0.0);
    EXPECT_EQ(f.front(), 0.0);
    for (double t : f) EXPECT_LE(t, 0.1 + 1e-12);
    g.fine_step = 0.5;
    EXPECT_THROW(g.validate(), std::invalid_argument);
    g = {};
    g.stop = 0.0;
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Finalize, ConstantObjectiveReturnsStart) {
    ScanGrid g;
    SweepResult r;
    r.coarse = points({3.0, 3.0, 3.0, 3.0});
    detail::finalize(r, g, false);
    EXPECT_EQ(r.argopt, 0.0);
    EXPECT_EQ(r.best, 3.0);
    detail::finalize(r, g, true);
    EXPECT_EQ(r.argopt, 0.0);
}

TEST(Finalize, AllInvalidFails) {
    ScanGrid g;
    SweepResult r;
    r.coarse = points({INFINITY, NAN});
    detail::finalize(r, g, false);
    EXPECT_TRUE(r.failed);
}

TEST(Finalize, FinePassNeverWorseAndRangeCountsCoarseOnly) {
    ScanGrid g;
    g.coarse_step = 0.25;
    SweepResult r;
    r.coarse = points({5.0, 2.0, 4.0}, 0.25);
    r.coarse[1].beats_sql = r.coarse[2].beats_sql = true;
    r.fine = {{0.3, 1.5, true, {}}, {0.2, 2.5, true, {}}};
    detail::finalize(r, g, false);
    EXPECT_EQ(r.coarse_argopt, 0.25);
    EXPECT_EQ(r.argopt, 0.3);
    EXPECT_EQ(r.best, 1.5);
    EXPECT_DOUBLE_EQ(r.t_range, 0.5);
}

TEST(FirstDominantPeak, PrefersEarlyPeakThatDominatesItsDoubleWindow) {
    // Peak at x=2 (0.9) dominates [0,4]; later global max 1.0 at x=7.
    const auto p = points({0.0, 0.5, 0.9, 0.4, 0.2, 0.3, 0.6, 1.0, 0.1});
    EXPECT_EQ(detail::first_dominant_peak(p), 2u);
}

TEST(FirstDominantPeak, FallsBackToGlobal) {
    // Early bump is below half of the global maximum.
    const auto p = points({0.0, 0.3, 0.1, 0.5, 0.9, 1.0, 0.8});
    EXPECT_EQ(detail::first_dominant_peak(p), 5u);
}

TEST(Scans, WorkerCountDoesNotChangeResults) {
    const SensorEngine e(ModelSpec::ising(6, 1.0, 2, 0.25), ProtocolConfig{});
    ScanGrid g;
    g.stop = 20.0;
    g.coarse_step = 0.5;
    g.fine_step = 0.1;
    g.window = 1.0;
    ScanOptions one, four;
    four.workers = 4;
    const auto a = scan_uncertainty(e, g, {ProbeSetting{}}, one).front();
    const auto b = scan_uncertainty(e, g, {ProbeSetting{}}, four).front();
    EXPECT_EQ(a.argopt, b.argopt);
    EXPECT_EQ(a.best, b.best);
    ASSERT_EQ(a.all_points().size(), b.all_points().size());
    for (std::size_t i = 0; i < a.all_points().size(); ++i) EXPECT_EQ(a.all_points()[i].value, b.all_points()[i].value);
    const auto m1 = scan_tstar(e, g, Objective::Magnetization, {}, one);
    const auto m4 = scan_tstar(e, g, Objective::Magnetization, {}, four);
    EXPECT_EQ(m1.argopt, m4.argopt);
}

TEST(Scans, RefinedNeverWorseThanCoarse) {
    const SensorEngine e(ModelSpec::ising(6, 1.0, 1, 0.25), ProtocolConfig{});
    ScanGrid g;
    g.stop = 30.0;
    g.coarse_step = 0.5;
    g.fine_step = 0.1;
    g.window = 1.0;
    ScanOptions coarse;
    coarse.coarse_only = true;
    const auto c = scan_uncertainty(e, g, {ProbeSetting{}}, coarse).front();
    const auto f = scan_uncertainty(e, g, {ProbeSetting{}}).front();
    EXPECT_LE(f.best, c.best);
    EXPECT_LE(std::abs(f.argopt - c.argopt), g.window + 1e-12);
    EXPECT_TRUE(f.fine.size() > 0);
    EXPECT_TRUE(c.fine.empty());
}

TEST(Scans, SharedSlicesMatchSeparateScans) {
    const SensorEngine e(ModelSpec::ising(5, 1.0, 2, 0.25), ProtocolConfig{});
    ScanGrid g;
    g.stop = 10.0;
    g.coarse_step = 0.5;
    g.fine_step = 0.1;
    g.window = 0.5;
    const ProbeSetting a{1e-6, 1000 * kPi}, b{1e-6, 300.0, 1e3};
    const auto both = scan_uncertainty(e, g, {a, b});
    EXPECT_EQ(both[0].best, scan_tstar(e, g, Objective::Uncertainty, a).best);
    EXPECT_EQ(both[1].best, scan_tstar(e, g, Objective::Uncertainty, b).best);
}

TEST(Scans, CheapScanRejectsUncertainty) {
    const SensorEngine e(ModelSpec::ising(4, 1.0, 1, 0.25), ProtocolConfig{});
    EXPECT_THROW(scan_tstar_cheap(e, ScanGrid{}, Objective::Uncertainty), std::invalid_argument);
}

TEST(UncertaintyGrid, AutomaticStopIsTwiceMagnetizationOptimum) {
    const SensorEngine e(ModelSpec::ising(5, 1.0, 1, 0.25), ProtocolConfig{});
    auto p = small_policy(0.0);
    SweepResult mag;
    const auto g = uncertainty_grid(e, p, &mag);
    EXPECT_DOUBLE_EQ(g.stop, std::max(2.0 * mag.coarse_argopt, p.grid.coarse_step));
    p.grid.stop = 7.0;
    EXPECT_EQ(uncertainty_grid(e, p).stop, 7.0);
}

TEST(Sweeps, BetaUpsetViolations) {
    std::vector<SweepRow> rows(5);
    const bool beats[] = {false, true, false, true, true};
    for (int i = 0; i < 5; ++i) {
        rows[static_cast<std::size_t>(i)].axis_value = i + 1.0;
        rows[static_cast<std::size_t>(i)].beats_sql = beats[i];
    }
    EXPECT_EQ(beta_upset_violations(rows), std::vector<double>{3.0});
    std::swap(rows[0], rows[4]);
    EXPECT_EQ(beta_upset_violations(rows), std::vector<double>{3.0});
    for (auto& r : rows) r.beats_sql = r.axis_value > 2.5;
    EXPECT_TRUE(beta_upset_violations(rows).empty());
}

TEST(Sweeps, CouplingIdentityRowEqualsIsingSweep) {
    const auto spec = ModelSpec::ising(5, 1.0, 1, 0.25);
    const auto policy = small_policy(8.0);
    const ProbeSetting probe{};
    const auto xyz = scan_couplings({{0.0, 0.0, 1.0}}, {1, 2}, spec, ProtocolConfig{}, policy, probe);
    const auto ising = sweep_parameter(SweepAxis::CoordN, {1, 2}, spec, ProtocolConfig{}, policy, probe);
    ASSERT_EQ(xyz.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(xyz[i].row.delta_min, ising[i].delta_min);
        EXPECT_EQ(xyz[i].row.t_opt, ising[i].t_opt);
    }
}

TEST(Sweeps, SweepParameterRejectsEmptyValues) {
    EXPECT_THROW(sweep_parameter(SweepAxis::Alpha, {}, ModelSpec::ising(4, 1.0, 1, 0.25), ProtocolConfig{},
                                 small_policy(4.0), ProbeSetting{}),
                 std::invalid_argument);
}

TEST(TintOpen, SinglePointGridReturnsIt) {
    const SensorEngine e(ModelSpec::ising(4, 1.0, 1, 0.25), ProtocolConfig{});
    ScanGrid g;
    g.stop = 5.0;
    g.coarse_step = 0.5;
    g.fine_step = 0.1;
    g.window = 0.5;
    const auto r = optimize_tint_open(e, g, {200.0}, 1e4, 1e-6);
    EXPECT_EQ(r.t_int_open, 200.0);
    EXPECT_EQ(r.per_tint.size(), 1u);
    EXPECT_THROW(optimize_tint_open(e, g, {}, 1e4, 1e-6), std::invalid_argument);
}

TEST(TintOpen, NoiselessLimitMonotoneInExposure) {
    const SensorEngine e(ModelSpec::ising(4, 1.0, 1, 0.25), ProtocolConfig{});
    ScanGrid g;
    g.stop = 10.0;
    g.coarse_step = 0.5;
    g.fine_step = 0.1;
    g.window = 0.5;
    const auto r = optimize_tint_open(e, g, {100.0, 400.0, 1600.0}, 1e300, 1e-6);
    for (std::size_t k = 1; k < r.per_tint.size(); ++k)
        EXPECT_LE(r.per_tint[k].delta_min, r.per_tint[k - 1].delta_min * (1 + 1e-9));
    EXPECT_EQ(r.t_int_open, 1600.0);
    EXPECT_FALSE(r.zeno_warning);
}

TEST(TintOpen, ZenoWarningRaised) {
    const SensorEngine e(ModelSpec::ising(4, 1.0, 1, 0.25), ProtocolConfig{});
    ScanGrid g;
    g.stop = 2.0;
    g.coarse_step = 0.5;
    g.fine_step = 0.5;
    g.window = 0.0;
    EXPECT_TRUE(optimize_tint_open(e, g, {10.0, 600.0}, 1000.0, 1e-6).zeno_warning);
}
