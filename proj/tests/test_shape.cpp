#include "filtreg/shape.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "filtreg/montecarlo.hpp"
#include "oracles.hpp"

namespace {

using namespace filtreg;

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(WeightFunctionBasics, PlateauAndSupport) {
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 1.0, 3.0, 0.1, 0.0);
  EXPECT_EQ(wf(0.5, 2.0, 1.0), 1.0);
  EXPECT_EQ(wf(0.5, 0.9, 1.0), 0.0);
  EXPECT_EQ(wf(0.5, 3.1, 1.0), 0.0);
  EXPECT_EQ(wf(-0.1, 2.0, 1.0), 0.0);
  EXPECT_EQ(wf(1.1, 2.0, 1.0), 0.0);
}

TEST(WeightFunctionBasics, CosineRampHitsHalfAtMidBand) {
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 1.0, 3.0, 0.1, 0.0);
  // y band is 0.1 * (3 - 1) = 0.2, so y = 1.1 sits halfway up the lower ramp.
  EXPECT_NEAR(wf(0.5, 1.1, 1.0), 0.5, 1e-12);
  // Same construction on the covariate axis: band 0.1 * 1, midpoint x = 0.05.
  EXPECT_NEAR(wf(0.05, 2.0, 1.0), 0.5, 1e-12);
}

TEST(WeightFunctionBasics, ExposureFloorZeroesTheWeight) {
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 1.0, 3.0, 0.1, 1e-6);
  EXPECT_EQ(wf(0.5, 2.0, 1e-7), 0.0);
  EXPECT_EQ(wf(0.5, 2.0, 2e-6), 1.0);
}

TEST(WeightFunctionBasics, ScaledCopy) {
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 1.0, 3.0, 0.1, 0.0);
  const WeightFunction w2 = wf.scaled(2.0);
  EXPECT_EQ(w2(0.5, 2.0, 1.0), 2.0);
  EXPECT_NEAR(w2(0.5, 1.1, 1.0), 1.0, 1e-12);
  EXPECT_EQ(wf(0.5, 2.0, 1.0), 1.0);  // original untouched
  EXPECT_THROW(wf.scaled(0.0), std::invalid_argument);
  EXPECT_THROW(wf.scaled(-1.0), std::invalid_argument);
}

TEST(WeightFunctionBasics, BoundTablesInterpolateAndClamp) {
  const WeightFunction wf(0.0, 1.0, {0.0, 1.0}, {1.0, 2.0}, {3.0, 4.0}, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(wf.tau_at(0.5), 1.5);
  EXPECT_DOUBLE_EQ(wf.upper_at(0.5), 3.5);
  EXPECT_EQ(wf.tau_at(-5.0), 1.0);
  EXPECT_EQ(wf.upper_at(7.0), 4.0);
  EXPECT_EQ(wf(0.5, 2.0, 1.0), 1.0);  // zero taper width: hard-edged support
  EXPECT_EQ(wf(0.5, 1.4, 1.0), 0.0);
}

TEST(WeightFunctionBasics, ConstructorValidation) {
  EXPECT_THROW(WeightFunction(1.0, 1.0, {0.5}, {1.0}, {3.0}, 0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(WeightFunction(0.0, 1.0, {0.2, 0.8}, {1.0}, {3.0, 4.0}, 0.1, 0.0),
               std::invalid_argument);
  EXPECT_THROW(WeightFunction(0.0, 1.0, {}, {}, {}, 0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(WeightFunction(0.0, 1.0, {0.5}, {1.0}, {3.0}, 0.6, 0.0), std::invalid_argument);
  EXPECT_THROW(WeightFunction(0.0, 1.0, {0.5, 0.5}, {1.0, 1.0}, {3.0, 3.0}, 0.1, 0.0),
               std::invalid_argument);
}

TEST(MakeWeightFunction, BoundsComeFromPilotQuantiles) {
  oracles::TestRng rng(101);
  const std::size_t n = 400;
  std::vector<double> xs(n), ys(n), us(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = rng.uniform(0.0, 1.0);
    ys[i] = (1.0 + xs[i]) * rng.uniform(0.5, 1.5);
    us[i] = rng.exponential(0.25);
  }
  const Sample s = Sample::from_right_censored(xs, ys, us);
  const WeightFunction wf = make_weight_function(s, quartic_kernel(), 0.2, 0.0, 1.0);
  EXPECT_EQ(wf.x_lo(), 0.0);
  EXPECT_EQ(wf.x_hi(), 1.0);
  const double tau = wf.tau_at(0.5), upper = wf.upper_at(0.5);
  EXPECT_GT(tau, 0.0);
  EXPECT_LT(tau, upper);
  EXPECT_GT(wf(0.5, 0.5 * (tau + upper), 1.0), 0.0);
  EXPECT_EQ(wf(0.5, upper + 1.0, 1.0), 0.0);
}

TEST(MakeWeightFunction, Validation) {
  const Sample s = Sample::from_right_censored({0.5}, {1.0}, {kInf});
  EXPECT_THROW(make_weight_function(s, quartic_kernel(), 0.2, 0.0, 1.0, 0.9, 0.1),
               std::invalid_argument);
  // Data far outside the covariate range: every pilot fit fails.
  const Sample far = Sample::from_right_censored({10.0, 10.1}, {1.0, 2.0}, {kInf, kInf});
  EXPECT_THROW(make_weight_function(far, quartic_kernel(), 0.1, 0.0, 1.0), Error);
}

TEST(ShapeEstimateAt, InterpolatesBetweenKnotsOnly) {
  const ShapeEstimate se{{0.0, 1.0, 2.0}, {1.0, 2.0, 4.0}};
  EXPECT_DOUBLE_EQ(se.at(0.5), 1.5);
  EXPECT_DOUBLE_EQ(se.at(1.5), 3.0);
  EXPECT_EQ(se.at(0.0), 1.0);
  EXPECT_EQ(se.at(2.0), 4.0);
  EXPECT_EQ(se.lo(), 0.0);
  EXPECT_EQ(se.hi(), 2.0);
  EXPECT_THROW(se.at(-0.1), std::domain_error);
  EXPECT_THROW(se.at(2.1), std::domain_error);
  const ShapeEstimate single{{1.0}, {2.0}};
  EXPECT_THROW(single.at(1.0), std::domain_error);
}

TEST(Minimize1d, FindsQuadraticMinimum) {
  const MinimizeResult r = minimize_1d([](double t) { return (t - 2.0) * (t - 2.0); }, 0.0, 5.0);
  EXPECT_NEAR(r.argmin, 2.0, 1e-5);
  EXPECT_NEAR(r.value, 0.0, 1e-9);
  EXPECT_GT(r.iterations, 0);
}

TEST(Minimize1d, HandlesKinkedObjective) {
  const auto f = [](double t) { return std::abs(t - 1.0); };
  const MinimizeResult r = minimize_1d(f, 0.0, 3.0);
  EXPECT_NEAR(r.argmin, 1.0, 1e-5);
  EXPECT_NEAR(r.argmin, oracles::scan_minimum(f, 0.0, 3.0, 10001), 1e-3);
}

TEST(Minimize1d, MonotoneObjectiveReturnsTheExactEndpoint) {
  const MinimizeResult inc = minimize_1d([](double t) { return t; }, 2.0, 7.0);
  EXPECT_EQ(inc.argmin, 2.0);
  EXPECT_EQ(inc.value, 2.0);
  const MinimizeResult dec = minimize_1d([](double t) { return -t; }, 2.0, 7.0);
  EXPECT_EQ(dec.argmin, 7.0);
  EXPECT_EQ(dec.value, -7.0);
}

TEST(Minimize1d, NeverWorseThanEitherEndpoint) {
  const auto f = [](double t) { return std::sin(13.0 * t) + 0.3 * t; };
  const MinimizeResult r = minimize_1d(f, 0.0, 4.0);
  EXPECT_LE(r.value, f(0.0));
  EXPECT_LE(r.value, f(4.0));
  EXPECT_GE(r.argmin, 0.0);
  EXPECT_LE(r.argmin, 4.0);
}

TEST(Minimize1d, RejectsBadInput) {
  EXPECT_THROW(minimize_1d([](double) { return kInf; }, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(minimize_1d([](double t) { return t; }, 1.0, 1.0), std::invalid_argument);
}

// Synthetic hazard surface built from a known shape at theta* = 1.3 using the
// exact same floating-point expression the criterion evaluates, so the
// criterion is identically zero there.
struct SyntheticFit {
  std::vector<double> ygrid = linspace(0.5, 2.0, 101);
  std::vector<HazardPoint> hz;
  WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 0.5, 2.0, 0.0, 0.0);
  std::function<double(double)> alpha0 = [](double u) { return 2.0 * u; };
  double theta_star = 1.3;

  SyntheticFit() {
    hz.resize(ygrid.size());
    for (std::size_t i = 0; i < ygrid.size(); ++i) {
      hz[i].defined = true;
      hz[i].value = 2.0 * (ygrid[i] / theta_star) / theta_star;
      hz[i].exposure = 0.8;
      hz[i].occurrence = hz[i].value * hz[i].exposure;
    }
  }
};

TEST(OracleCriterion, ZeroExactlyAtTheGeneratingTheta) {
  const SyntheticFit f;
  EXPECT_EQ(oracle_criterion(f.ygrid, f.hz, f.alpha0, f.theta_star, 0.5, f.wf), 0.0);
  EXPECT_GT(oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, f.wf), 0.0);
  EXPECT_GT(oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.6, 0.5, f.wf), 0.0);
}

TEST(OracleCriterion, WeightScaleFactorsOutExactly) {
  const SyntheticFit f;
  const double base = oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, f.wf);
  EXPECT_EQ(oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, f.wf.scaled(2.0)), 2.0 * base);
  EXPECT_EQ(oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, f.wf.scaled(0.25)), 0.25 * base);
}

TEST(OracleCriterion, InputValidation) {
  const SyntheticFit f;
  EXPECT_THROW(oracle_criterion(f.ygrid, f.hz, f.alpha0, 0.0, 0.5, f.wf), std::invalid_argument);
  EXPECT_THROW(oracle_criterion(f.ygrid, f.hz, f.alpha0, -2.0, 0.5, f.wf), std::invalid_argument);
  const std::vector<double> short_grid{0.5};
  const std::vector<HazardPoint> short_hz(1);
  EXPECT_THROW(oracle_criterion(short_grid, f.hz, f.alpha0, 1.0, 0.5, f.wf),
               std::invalid_argument);
  EXPECT_THROW(oracle_criterion(short_grid, short_hz, f.alpha0, 1.0, 0.5, f.wf),
               std::invalid_argument);
}

TEST(OracleCriterion, UndefinedHazardUnderPositiveWeightIsAnError) {
  SyntheticFit f;
  f.hz[50].defined = false;
  EXPECT_THROW(oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, f.wf),
               HazardUndefinedInWeightSupport);
}

TEST(OracleCriterion, UndefinedHazardOutsideWeightSupportIsIgnored) {
  SyntheticFit f;
  f.hz[50].defined = false;
  f.hz[50].exposure = 0.0;
  const WeightFunction floored = WeightFunction::constant_bounds(0.0, 1.0, 0.5, 2.0, 0.0, 1e-6);
  EXPECT_GE(oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, floored), 0.0);
}

TEST(OracleCriterion, ZeroHazardPointsAreDroppedAndCounted) {
  SyntheticFit f;
  f.hz[30].value = 0.0;
  f.hz[60].value = 0.0;
  std::size_t dropped = 0;
  const double c = oracle_criterion(f.ygrid, f.hz, f.alpha0, 1.0, 0.5, f.wf, &dropped);
  EXPECT_EQ(dropped, 2u);
  EXPECT_TRUE(std::isfinite(c));
}

TEST(OracleCriterion, NonnegativeOnRandomSurfaces) {
  oracles::TestRng rng(997);
  const std::vector<double> ygrid = linspace(0.2, 3.0, 60);
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 0.2, 3.0, 0.1, 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<HazardPoint> hz(ygrid.size());
    for (auto& hp : hz) {
      hp.defined = true;
      hp.value = rng.uniform(0.05, 2.0);
      hp.exposure = rng.uniform(0.1, 1.0);
    }
    const double a = rng.uniform(0.1, 2.0), c = rng.uniform(0.0, 1.0);
    const auto alpha0 = [a, c](double u) { return a * u + c; };
    for (double theta : {0.6, 1.0, 1.7})
      EXPECT_GE(oracle_criterion(ygrid, hz, alpha0, theta, 0.5, wf), 0.0);
  }
}

TEST(OracleCriterion, MinimizerRecoversSyntheticTheta) {
  const SyntheticFit f;
  const MinimizeResult r = minimize_1d(
      [&](double theta) { return oracle_criterion(f.ygrid, f.hz, f.alpha0, theta, 0.5, f.wf); },
      0.5, 2.5);
  EXPECT_NEAR(r.argmin, f.theta_star, 1e-5);
}

// Baseline hazard of the simulation design: errors uniform on [0.5, 1.5], so
// alpha0(u) = 1/(1.5 - u) on its support, with an effectively infinite hazard
// past the upper endpoint.
double design_alpha0(double u) {
  if (u < 0.5) return 0.0;
  if (u >= 1.5) return 1e6;
  return 1.0 / (1.5 - u);
}

struct SimulatedFit {
  Sample sample;
  double b, h;
  WeightFunction wf;

  explicit SimulatedFit(std::uint64_t seed, std::size_t n = 1000)
      : sample(sample_dgp(n, seed).sample),
        b(0.0),
        h(0.0),
        wf(WeightFunction::constant_bounds(0.0, 1.0, 0.1, 1.0, 0.1, 1e-6)) {
    std::vector<double> xs(sample.size()), exits(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
      xs[i] = sample.records()[i].x;
      exits[i] = sample.records()[i].exit;
    }
    b = silverman_bandwidth(xs);
    h = silverman_bandwidth(exits);
    wf = make_weight_function(sample, quartic_kernel(), b, 0.0, 1.0);
  }
};

const SimulatedFit& seed42_fit() {
  static const SimulatedFit* fit = new SimulatedFit(42);
  return *fit;
}

TEST(OracleLocation, RecoversTheCurveOnASimulatedDraw) {
  const SimulatedFit& f = seed42_fit();
  const ModelLocation ml = oracle_location(f.sample, design_alpha0, quartic_kernel(),
                                           quartic_kernel(), f.b, f.h, 0.25, f.wf, {0.6, 2.0});
  EXPECT_NEAR(ml.theta, 1.25, 0.15);
  EXPECT_GE(ml.criterion_value, 0.0);
  EXPECT_GT(ml.iterations, 0);
  EXPECT_EQ(ml.bracket.first, 0.6);
  EXPECT_EQ(ml.bracket.second, 2.0);
}

TEST(OracleLocation, BracketExcludingTheTruthReturnsItsBestEndpoint) {
  const SimulatedFit& f = seed42_fit();
  const ModelLocation ml = oracle_location(f.sample, design_alpha0, quartic_kernel(),
                                           quartic_kernel(), f.b, f.h, 0.25, f.wf, {1.8, 2.5});
  EXPECT_DOUBLE_EQ(ml.theta, 1.8);
  EXPECT_GT(ml.criterion_value, 0.0);
}

TEST(OracleLocation, Validation) {
  const Sample s = Sample::from_right_censored({0.5}, {1.0}, {kInf});
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 0.1, 2.0, 0.1, 0.0);
  const auto a0 = [](double u) { return u; };
  EXPECT_THROW(oracle_location(s, a0, quartic_kernel(), quartic_kernel(), 0.3, 0.3, 0.5, wf,
                               {0.0, 1.0}),
               std::invalid_argument);
  EXPECT_THROW(oracle_location(s, a0, quartic_kernel(), quartic_kernel(), 0.3, 0.3, 0.5, wf,
                               {2.0, 1.0}),
               std::invalid_argument);
  const WeightFunction empty = WeightFunction::constant_bounds(0.0, 1.0, 3.0, 2.0, 0.1, 0.0);
  EXPECT_THROW(oracle_location(s, a0, quartic_kernel(), quartic_kernel(), 0.3, 0.3, 0.5, empty,
                               {0.5, 1.5}),
               Error);
}

// Plugging the exact hazard of a multiplicative model into the pooling ratio
// must return the generating shape up to quadrature-free rounding: for
// alpha(x, y) = alpha0(y / g(x)) / g(x) the pointwise ratio is alpha0(u) at
// every covariate, independent of the weight.
TEST(EstimateShape, ExactSurfaceIsAFixedPoint) {
  const auto g = [](double x) { return 1.0 + 0.5 * x; };
  const auto hazard_at = [&](double x, double y) {
    HazardPoint hp;
    hp.defined = true;
    hp.exposure = 1.0;
    const double gx = g(x);
    hp.value = 2.0 * y / (gx * gx);
    return hp;
  };
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 0.05, 5.0, 0.1, 0.0);
  const std::vector<double> xgrid = linspace(0.0, 1.0, 101);
  for (double u : {0.4, 1.0, 1.6, 2.4}) {
    const double got = estimate_shape_with(hazard_at, g, wf, xgrid, u);
    EXPECT_NEAR(got, 2.0 * u, 1e-10 * 2.0 * u) << "u = " << u;
  }
}

TEST(EstimateShape, CovariateFreeSurfaceReducesToRescaledHazard) {
  // When nothing depends on x the pooling ratio collapses to gtilde times the
  // hazard at gtilde * u, whatever the x-grid.
  const auto hazard_at = [](double, double y) {
    HazardPoint hp;
    hp.defined = true;
    hp.exposure = 1.0;
    hp.value = 0.7 + y;
    return hp;
  };
  const auto g = [](double) { return 2.0; };
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 0.05, 10.0, 0.0, 0.0);
  const std::vector<double> xgrid{0.0, 1.0};
  for (double u : {0.3, 0.9}) {
    const double expected = 2.0 * (0.7 + 2.0 * u);
    EXPECT_NEAR(estimate_shape_with(hazard_at, g, wf, xgrid, u), expected, 1e-13 * expected);
  }
}

TEST(EstimateShape, RequiresTwoGridPointsAndUsableWeight) {
  const auto hazard_at = [](double, double) {
    HazardPoint hp;
    hp.defined = true;
    hp.exposure = 1.0;
    hp.value = 1.0;
    return hp;
  };
  const auto g = [](double) { return 1.0; };
  const WeightFunction wf = WeightFunction::constant_bounds(0.0, 1.0, 0.05, 10.0, 0.0, 0.0);
  const std::vector<double> one_point{0.5};
  EXPECT_THROW(estimate_shape_with(hazard_at, g, wf, one_point, 1.0), std::invalid_argument);

  const std::vector<double> xgrid = linspace(0.0, 1.0, 11);
  // Baseline time far outside the weight support: every point drops out.
  EXPECT_THROW(estimate_shape_with(hazard_at, g, wf, xgrid, 1e9), ShapeUndefined);

  // Exposure below the weight floor everywhere: the denominator never fills.
  const auto starved = [](double, double) {
    HazardPoint hp;
    hp.defined = true;
    hp.exposure = 1e-9;
    hp.value = 1.0;
    return hp;
  };
  const WeightFunction floored = WeightFunction::constant_bounds(0.0, 1.0, 0.05, 10.0, 0.0, 1e-6);
  EXPECT_THROW(estimate_shape_with(starved, g, floored, xgrid, 1.0), ShapeUndefined);
}

TEST(EstimateShape, RecoversTheDesignShapeOnASimulatedDraw) {
  const SimulatedFit f(1);
  const std::vector<double> xgrid = linspace(0.0, 1.0, 100);
  const double t_pilot = f.sample.event_times().back();
  const CurveEstimate gt = estimate_curve(f.sample, Method::local_constant, quartic_kernel(), f.b,
                                          xgrid, t_pilot);
  const double a0hat =
      estimate_shape(f.sample, gt, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf, xgrid, 1.0);
  EXPECT_NEAR(a0hat, 2.0, 0.25);  // design baseline has alpha0(1) = 2
}

TEST(EstimateShapeCurve, TabulatesUsableKnots) {
  const SimulatedFit& f = seed42_fit();
  const std::vector<double> xgrid = linspace(0.0, 1.0, 100);
  const double t_pilot = f.sample.event_times().back();
  const CurveEstimate gt = estimate_curve(f.sample, Method::local_constant, quartic_kernel(), f.b,
                                          xgrid, t_pilot);
  const ShapeEstimate se = estimate_shape_curve(f.sample, gt, quartic_kernel(), quartic_kernel(),
                                                f.b, f.h, f.wf, xgrid, 50);
  ASSERT_GE(se.ugrid.size(), 2u);
  EXPECT_LT(se.lo(), se.hi());
  for (std::size_t i = 0; i < se.values.size(); ++i) {
    EXPECT_TRUE(std::isfinite(se.values[i]));
    EXPECT_GE(se.values[i], 0.0);
    if (i > 0) EXPECT_LT(se.ugrid[i - 1], se.ugrid[i]);
  }
  EXPECT_NO_THROW(se.at(0.5 * (se.lo() + se.hi())));

  CurveEstimate all_nan;
  all_nan.grid = {0.0, 1.0};
  all_nan.values = {std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(estimate_shape_curve(f.sample, all_nan, quartic_kernel(), quartic_kernel(), f.b,
                                    f.h, f.wf, xgrid, 50),
               ShapeUndefined);
}

TEST(TwoStep, WeightScaleDoesNotMoveTheFit) {
  const SimulatedFit f(5, 250);
  const std::vector<double> grid = linspace(0.3, 0.7, 21);
  const CurveEstimate base =
      two_step(f.sample, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf, grid, {});
  for (double c : {4.0, 0.25}) {
    const CurveEstimate scaled =
        two_step(f.sample, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf.scaled(c), grid, {});
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::isnan(base.values[i])) {
        EXPECT_TRUE(std::isnan(scaled.values[i]));
      } else {
        EXPECT_EQ(scaled.values[i], base.values[i]) << "c = " << c << ", i = " << i;
      }
    }
  }
}

TEST(TwoStep, MatchesAManualPerPointFitWithAKnownShape) {
  const SimulatedFit f(5, 250);
  const Kernel& K = quartic_kernel();
  const std::vector<double> grid{0.4, 0.5, 0.6};
  TwoStepConfig tc;
  tc.alpha0_override = design_alpha0;
  const CurveEstimate ts = two_step(f.sample, K, K, f.b, f.h, f.wf, grid, tc);

  std::vector<double> exits(f.sample.size());
  for (std::size_t i = 0; i < f.sample.size(); ++i) exits[i] = f.sample.records()[i].exit;
  const double t_max = percentile(exits, 0.95);
  const double t_pilot = f.sample.event_times().back();
  const CurveEstimate pilot =
      estimate_curve(f.sample, Method::local_constant, K, f.b, grid, t_pilot);
  const std::vector<double> ygrid = linspace(0.0, t_max, 200);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ASSERT_TRUE(pilot.defined(i));
    const double g1 = pilot.values[i];
    std::vector<HazardPoint> hz(ygrid.size());
    for (std::size_t j = 0; j < ygrid.size(); ++j)
      hz[j] = hazard_lc(f.sample, K, K, f.b, f.h, grid[i], ygrid[j]);
    const MinimizeResult r = minimize_1d(
        [&](double theta) {
          return oracle_criterion(ygrid, hz, design_alpha0, theta, grid[i], f.wf);
        },
        0.5 * g1, 1.5 * g1);
    ASSERT_TRUE(ts.defined(i));
    EXPECT_DOUBLE_EQ(ts.values[i], r.argmin);
  }
}

// Without filtering the two-step fit cannot beat the plain local average by
// much, and must not lose much either; pool the squared errors over several
// draws so one lucky baseline draw cannot dominate the comparison.
TEST(TwoStep, UnfilteredAccuracyStaysCloseToLocalConstant) {
  const Kernel& K = quartic_kernel();
  double tot_lc = 0.0, tot_ts = 0.0;
  for (std::uint64_t seed : {11ULL, 23ULL, 37ULL, 55ULL, 99ULL}) {
    Rng rng(seed);
    const std::size_t n = 1000;
    std::vector<double> xs(n), ys(n), us(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = rng.uniform01();
      ys[i] = true_g(xs[i]) * (0.5 + rng.uniform01());
      rng.uniform01();
      rng.uniform01();
    }
    const Sample s = Sample::from_right_censored(xs, ys, us);
    const double b = silverman_bandwidth(xs);
    std::vector<double> exits(n);
    for (std::size_t i = 0; i < n; ++i) exits[i] = s.records()[i].exit;
    const double h = silverman_bandwidth(exits);
    const double t_max = percentile(exits, 0.95);
    const std::vector<double> grid = linspace(0.3, 0.7, 21);
    const CurveEstimate lc = estimate_curve(s, Method::local_constant, K, b, grid, t_max);
    const WeightFunction wf = make_weight_function(s, K, b, 0.0, 1.0);
    TwoStepConfig tc;
    tc.truncation = t_max;
    const CurveEstimate ts = two_step(s, K, K, b, h, wf, grid, tc);
    ASSERT_EQ(lc.undefined_count(), 0u) << "seed " << seed;
    ASSERT_EQ(ts.undefined_count(), 0u) << "seed " << seed;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double g0 = true_g(grid[i]);
      tot_lc += (lc.values[i] - g0) * (lc.values[i] - g0);
      tot_ts += (ts.values[i] - g0) * (ts.values[i] - g0);
    }
  }
  EXPECT_LE(std::sqrt(tot_ts / tot_lc), 1.25);
}

TEST(TwoStep, InteriorGridMostlyDefinedOnAFilteredDraw) {
  const SimulatedFit f(5, 250);
  const std::vector<double> grid = linspace(0.3, 0.7, 21);
  const CurveEstimate ts =
      two_step(f.sample, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf, grid, {});
  EXPECT_EQ(ts.method, Method::two_step);
  EXPECT_GE(grid.size() - ts.undefined_count(), 20u);
}

TEST(TwoStep, Validation) {
  const SimulatedFit f(5, 250);
  const std::vector<double> grid{0.5};
  EXPECT_THROW(two_step(Sample({}), quartic_kernel(), quartic_kernel(), 0.1, 0.1, f.wf, grid, {}),
               std::invalid_argument);
  TwoStepConfig bad;
  bad.bracket_lo = 0.0;
  EXPECT_THROW(two_step(f.sample, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf, grid, bad),
               std::invalid_argument);
  bad.bracket_lo = 2.0;
  bad.bracket_hi = 1.0;
  EXPECT_THROW(two_step(f.sample, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf, grid, bad),
               std::invalid_argument);
  TwoStepConfig neg;
  neg.truncation = -1.0;
  EXPECT_THROW(two_step(f.sample, quartic_kernel(), quartic_kernel(), f.b, f.h, f.wf, grid, neg),
               std::invalid_argument);
}

}  // namespace
