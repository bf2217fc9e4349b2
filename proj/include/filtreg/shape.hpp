#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "filtreg/errors.hpp"
#include "filtreg/hazard.hpp"
#include "filtreg/numerics.hpp"
#include "filtreg/regression.hpp"
#include "filtreg/survivor.hpp"

namespace filtreg {

// Smooth weight supported on {x in [x_lo, x_hi], tau(x) <= y <= upper(x)}.
// Cosine ramps rise inward over a band equal to taper_width times the side
// length, so the weight is continuous, equals one on the inner plateau, and
// is exactly zero outside the support. Whatever the taper says, the weight is
// zero wherever smoothed exposure is below exposure_floor.
class WeightFunction {
 public:
  WeightFunction(double x_lo, double x_hi, std::vector<double> xs, std::vector<double> tau,
                 std::vector<double> upper, double taper_width, double exposure_floor)
      : x_lo_(x_lo),
        x_hi_(x_hi),
        xs_(std::move(xs)),
        tau_(std::move(tau)),
        upper_(std::move(upper)),
        taper_(taper_width),
        floor_(exposure_floor) {
    if (!(x_lo_ < x_hi_)) throw std::invalid_argument("WeightFunction: empty covariate range");
    if (xs_.empty() || xs_.size() != tau_.size() || xs_.size() != upper_.size())
      throw std::invalid_argument("WeightFunction: bound tables must be aligned and nonempty");
    if (!(taper_ >= 0.0 && taper_ <= 0.5))
      throw std::invalid_argument("WeightFunction: taper width must lie in [0, 0.5]");
    for (std::size_t i = 1; i < xs_.size(); ++i)
      if (!(xs_[i - 1] < xs_[i]))
        throw std::invalid_argument("WeightFunction: bound table abscissae must increase");
  }

  static WeightFunction constant_bounds(double x_lo, double x_hi, double tau, double upper,
                                        double taper_width, double exposure_floor) {
    return WeightFunction(x_lo, x_hi, {0.5 * (x_lo + x_hi)}, {tau}, {upper}, taper_width,
                          exposure_floor);
  }

  double tau_at(double x) const { return interp(tau_, x); }
  double upper_at(double x) const { return interp(upper_, x); }

  double operator()(double x, double y, double exposure) const {
    if (exposure < floor_) return 0.0;
    if (x < x_lo_ || x > x_hi_) return 0.0;
    const double lo = tau_at(x);
    const double hi = upper_at(x);
    if (!(lo < hi)) return 0.0;
    if (y < lo || y > hi) return 0.0;
    const double wx = taper_pair(x - x_lo_, x_hi_ - x, taper_ * (x_hi_ - x_lo_));
    const double wy = taper_pair(y - lo, hi - y, taper_ * (hi - lo));
    return amplitude_ * wx * wy;
  }

  // Copy with every value multiplied by c; used to exercise the criterion's
  // scale invariance.
  WeightFunction scaled(double c) const {
    if (!(c > 0.0)) throw std::invalid_argument("WeightFunction::scaled: factor must be positive");
    WeightFunction out = *this;
    out.amplitude_ *= c;
    return out;
  }

  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }
  double taper_width() const { return taper_; }
  double exposure_floor() const { return floor_; }

 private:
  static double ramp(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return 0.5 * (1.0 - std::cos(3.14159265358979323846 * s));
  }

  // The nearer boundary governs; inside the plateau both ramps are one.
  static double taper_pair(double dist_lo, double dist_hi, double band) {
    if (band <= 0.0) return 1.0;
    return std::min(ramp(dist_lo / band), ramp(dist_hi / band));
  }

  double interp(const std::vector<double>& table, double x) const {
    if (xs_.size() == 1) return table[0];
    if (x <= xs_.front()) return table.front();
    if (x >= xs_.back()) return table.back();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - xs_.begin());
    const double t = (x - xs_[hi - 1]) / (xs_[hi] - xs_[hi - 1]);
    return table[hi - 1] + t * (table[hi] - table[hi - 1]);
  }

  double x_lo_, x_hi_;
  std::vector<double> xs_, tau_, upper_;
  double taper_;
  double floor_;
  double amplitude_ = 1.0;
};

inline double weight(const WeightFunction& wf, double x, double y, double exposure) {
  return wf(x, y, exposure);
}

// Builds the weight support from a pilot fit: per covariate grid point, the
// product-limit survivor's q_lo and q_hi quantiles bound the usable y-range.
// Grid points where the pilot fit fails borrow the nearest usable bounds.
inline WeightFunction make_weight_function(const Sample& s, const Kernel& K, double b, double x_lo,
                                           double x_hi, double q_lo = 0.1, double q_hi = 0.9,
                                           double taper_width = 0.1, double exposure_floor = 1e-6,
                                           std::size_t grid_size = 100) {
  if (!(0.0 < q_lo && q_lo < q_hi && q_hi < 1.0))
    throw std::invalid_argument("make_weight_function: need 0 < q_lo < q_hi < 1");
  const std::vector<double> xs = linspace(x_lo, x_hi, grid_size);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> tau(xs.size(), nan), upper(xs.size(), nan);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    try {
      const StepFunction surv = product_limit(integrated_hazard_lc(s, K, b, xs[i]));
      tau[i] = quantile(surv, q_lo);
      upper[i] = quantile(surv, q_hi);
    } catch (const Error&) {
      // leave this grid point for the fill below
    }
  }
  const auto fill = [&xs](std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isnan(v[i])) continue;
      double best = std::numeric_limits<double>::quiet_NaN();
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (std::isnan(v[j])) continue;
        const double dist = std::abs(xs[j] - xs[i]);
        if (dist < best_dist) {
          best_dist = dist;
          best = v[j];
        }
      }
      v[i] = best;
    }
  };
  fill(tau);
  fill(upper);
  if (std::isnan(tau[0]) || std::isnan(upper[0]))
    throw Error("make_weight_function: pilot fit produced no usable quantile bounds");
  return WeightFunction(x_lo, x_hi, xs, std::move(tau), std::move(upper), taper_width,
                        exposure_floor);
}

// Baseline hazard shape tabulated on a grid; piecewise linear between knots,
// and deliberately refusing to extrapolate.
struct ShapeEstimate {
  std::vector<double> ugrid;
  std::vector<double> values;

  double lo() const { return ugrid.front(); }
  double hi() const { return ugrid.back(); }

  double at(double u) const {
    if (ugrid.size() < 2) throw std::domain_error("ShapeEstimate: fewer than two knots");
    if (u < ugrid.front() || u > ugrid.back())
      throw std::domain_error("ShapeEstimate: evaluation outside the tabulated grid");
    const auto it = std::upper_bound(ugrid.begin(), ugrid.end(), u);
    if (it == ugrid.end()) return values.back();
    const std::size_t hi_idx = static_cast<std::size_t>(it - ugrid.begin());
    if (hi_idx == 0) return values.front();
    const double t = (u - ugrid[hi_idx - 1]) / (ugrid[hi_idx] - ugrid[hi_idx - 1]);
    return values[hi_idx - 1] + t * (values[hi_idx] - values[hi_idx - 1]);
  }
};

struct MinimizeResult {
  double argmin = 0.0;
  double value = 0.0;
  int iterations = 0;
};

// One-dimensional minimization by golden-section steps with parabolic
// interpolation where the parabola is trustworthy. Endpoints are evaluated
// too, so a monotone objective returns the exact boundary and the result is
// never worse than either bracket end.
inline MinimizeResult minimize_1d(const std::function<double(double)>& f, double lo, double hi,
                                  double tol = 0.0, int max_iter = 200) {
  if (!(lo < hi)) throw std::invalid_argument("minimize_1d: empty bracket");
  if (tol <= 0.0) tol = 1e-6 * (hi - lo);
  const double gold = 0.3819660112501051;
  const auto eval = [&f](double t) {
    const double v = f(t);
    if (!std::isfinite(v))
      throw std::domain_error("minimize_1d: objective returned a non-finite value");
    return v;
  };
  const double flo = eval(lo), fhi = eval(hi);
  double a = lo, b = hi;
  double x = a + gold * (b - a);
  double w = x, v = x;
  double fx = eval(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  const double min_step = 0.25 * tol;
  int iters = 0;
  while (iters < max_iter && (b - a) > tol) {
    ++iters;
    const double etemp = e;
    bool golden = true;
    if (std::abs(etemp) > min_step) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
        e = d;
        d = p / q;
        golden = false;
      }
    }
    if (golden) {
      e = (x < 0.5 * (a + b)) ? b - x : a - x;
      d = gold * e;
    }
    const double u = (std::abs(d) >= min_step) ? x + d : x + (d > 0.0 ? min_step : -min_step);
    const double fu = eval(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  MinimizeResult out{x, fx, iters};
  if (flo < out.value) out = {lo, flo, iters};
  if (fhi < out.value) out = {hi, fhi, iters};
  return out;
}

// Weighted distance between the estimated hazard surface at x and the
// rescaled shape theta^-1 alpha0(y/theta):
//   int [ahat(y) - theta^-1 alpha0(y/theta)]^2 ahat(y)^-1 E(y) w(x,y) dy
// by trapezoid quadrature on ygrid. Points with zero weight contribute
// nothing; a positive-weight point with an undefined hazard is an error.
// Points where the hazard estimate is exactly zero are dropped (and counted):
// the inverse-hazard variance weight has no finite value there.
inline double oracle_criterion(std::span<const double> ygrid, std::span<const HazardPoint> hz,
                               const std::function<double(double)>& alpha0, double theta, double x,
                               const WeightFunction& wf, std::size_t* dropped_points = nullptr) {
  if (!(theta > 0.0)) throw std::invalid_argument("oracle_criterion: theta must be positive");
  if (ygrid.size() != hz.size())
    throw std::invalid_argument("oracle_criterion: hazard grid must align with ygrid");
  if (ygrid.size() < 2) throw std::invalid_argument("oracle_criterion: ygrid too short");
  std::vector<double> integrand(ygrid.size(), 0.0);
  for (std::size_t i = 0; i < ygrid.size(); ++i) {
    const double w = wf(x, ygrid[i], hz[i].exposure);
    if (w == 0.0) continue;
    if (!hz[i].defined)
      throw HazardUndefinedInWeightSupport(
          "oracle_criterion: hazard undefined at a positive-weight point (y = " +
          fmt_double(ygrid[i]) + ")");
    const double a = hz[i].value;
    if (a <= 0.0) {
      if (dropped_points) ++(*dropped_points);
      continue;
    }
    const double m = alpha0(ygrid[i] / theta) / theta;
    integrand[i] = (a - m) * (a - m) / a * hz[i].exposure * w;
  }
  return trapezoid(ygrid, integrand);
}

struct ModelLocation {
  double theta = 0.0;
  std::pair<double, double> bracket{0.0, 0.0};
  double criterion_value = 0.0;
  int iterations = 0;
};

// Location fit against a KNOWN shape: minimize the criterion over the bracket
// at a single covariate value.
inline ModelLocation oracle_location(const Sample& s, const std::function<double(double)>& alpha0,
                                     const Kernel& K, const Kernel& k, double b, double h, double x,
                                     const WeightFunction& wf, std::pair<double, double> bracket,
                                     std::size_t ygrid_size = 200) {
  if (!(bracket.first > 0.0 && bracket.first < bracket.second))
    throw std::invalid_argument("oracle_location: bracket must satisfy 0 < lo < hi");
  const double tau = wf.tau_at(x);
  const double upper = wf.upper_at(x);
  if (!(tau < upper)) throw Error("oracle_location: weight support is empty at x");
  const std::vector<double> ygrid = linspace(tau, upper, ygrid_size);
  std::vector<HazardPoint> hz(ygrid.size());
  bool any_weight = false;
  for (std::size_t i = 0; i < ygrid.size(); ++i) {
    hz[i] = hazard_lc(s, K, k, b, h, x, ygrid[i]);
    if (wf(x, ygrid[i], hz[i].exposure) > 0.0) any_weight = true;
  }
  if (!any_weight) throw Error("oracle_location: weight function vanishes on the y-grid at x");
  const MinimizeResult res = minimize_1d(
      [&](double theta) { return oracle_criterion(ygrid, hz, alpha0, theta, x, wf); },
      bracket.first, bracket.second);
  return ModelLocation{res.argmin, bracket, res.value, res.iterations};
}

namespace detail {

// Piecewise-linear view of a curve estimate restricted to its defined points;
// NaN outside the defined range.
struct CurveInterp {
  std::vector<double> xs, vs;

  explicit CurveInterp(const CurveEstimate& c) {
    for (std::size_t i = 0; i < c.grid.size(); ++i)
      if (c.defined(i)) {
        xs.push_back(c.grid[i]);
        vs.push_back(c.values[i]);
      }
  }

  double at(double x) const {
    if (xs.empty() || x < xs.front() || x > xs.back())
      return std::numeric_limits<double>::quiet_NaN();
    if (xs.size() == 1) return vs[0];
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    if (it == xs.end()) return vs.back();
    const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    if (hi == 0) return vs.front();
    const double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    return vs[hi - 1] + t * (vs[hi] - vs[hi - 1]);
  }
};

}  // namespace detail

// Pooled shape ratio at a fixed baseline time y:
//   int E(x, y g(x)) w dx  /  int E(x, y g(x)) w / {g(x) ahat_x(y g(x))} dx.
// Grid points with zero weight, an unusable pilot value, or an undefined or
// zero hazard are dropped from numerator and denominator symmetrically. The
// hazard source is a parameter so exact surfaces can be plugged in.
inline double estimate_shape_with(const std::function<HazardPoint(double, double)>& hazard_at,
                                  const std::function<double(double)>& gtilde,
                                  const WeightFunction& wf, std::span<const double> xgrid,
                                  double y) {
  if (xgrid.size() < 2) throw std::invalid_argument("estimate_shape: xgrid too short");
  std::vector<double> num(xgrid.size(), 0.0), den(xgrid.size(), 0.0);
  for (std::size_t i = 0; i < xgrid.size(); ++i) {
    const double g = gtilde(xgrid[i]);
    if (!std::isfinite(g) || g <= 0.0) continue;
    const double yy = y * g;
    const HazardPoint hp = hazard_at(xgrid[i], yy);
    const double w = wf(xgrid[i], yy, hp.exposure);
    if (w == 0.0 || !hp.defined || !(hp.value > 0.0)) continue;
    num[i] = hp.exposure * w;
    den[i] = hp.exposure * w / (g * hp.value);
  }
  const double d = trapezoid(xgrid, den);
  if (!(d >= 1e-12))
    throw ShapeUndefined("estimate_shape: denominator integral below floor at u = " + fmt_double(y));
  return trapezoid(xgrid, num) / d;
}

inline double estimate_shape(const Sample& s, const CurveEstimate& gtilde, const Kernel& K,
                             const Kernel& k, double b, double h, const WeightFunction& wf,
                             std::span<const double> xgrid, double y) {
  const detail::CurveInterp interp(gtilde);
  return estimate_shape_with(
      [&](double x, double yy) { return hazard_lc(s, K, k, b, h, x, yy); },
      [&](double x) { return interp.at(x); }, wf, xgrid, y);
}

// Tabulates the pooled shape on a baseline grid spanning every covariate
// slice's weighted band in baseline units: from the smallest tau(x)/g(x) to
// the largest T(x)/g(x). A given u needs only some slices to contribute; the
// symmetric dropping inside estimate_shape prunes the rest, and u values no
// slice covers come back ShapeUndefined and lose their knot.
inline ShapeEstimate estimate_shape_curve(const Sample& s, const CurveEstimate& gtilde,
                                          const Kernel& K, const Kernel& k, double b, double h,
                                          const WeightFunction& wf, std::span<const double> xgrid,
                                          std::size_t ugrid_size = 100) {
  const detail::CurveInterp interp(gtilde);
  std::vector<double> lo_over_g, hi_over_g;
  for (double x : xgrid) {
    const double g = interp.at(x);
    if (!std::isfinite(g) || g <= 0.0) continue;
    lo_over_g.push_back(wf.tau_at(x) / g);
    hi_over_g.push_back(wf.upper_at(x) / g);
  }
  if (lo_over_g.empty()) throw ShapeUndefined("estimate_shape_curve: no usable pilot values");
  const double u_lo = *std::min_element(lo_over_g.begin(), lo_over_g.end());
  const double u_hi = *std::max_element(hi_over_g.begin(), hi_over_g.end());
  if (!(u_lo < u_hi))
    throw ShapeUndefined("estimate_shape_curve: cannot determine a baseline grid");

  const std::vector<double> ugrid = linspace(u_lo, u_hi, ugrid_size);
  ShapeEstimate out;
  for (double u : ugrid) {
    try {
      const double v = estimate_shape(s, gtilde, K, k, b, h, wf, xgrid, u);
      out.ugrid.push_back(u);
      out.values.push_back(v);
    } catch (const ShapeUndefined&) {
      // drop this knot
    }
  }
  if (out.ugrid.size() < 2)
    throw ShapeUndefined("estimate_shape_curve: fewer than two usable knots");
  return out;
}

struct TwoStepConfig {
  double bracket_lo = 0.5;  // search interval [bracket_lo * g1(x), bracket_hi * g1(x)]
  double bracket_hi = 1.5;
  std::size_t ygrid_size = 200;
  std::size_t xgrid_size = 100;
  std::size_t ugrid_size = 100;
  double truncation = std::numeric_limits<double>::quiet_NaN();  // NaN: 0.95 quantile of exits
  // Truncation for the preliminary curve only. The shape pooling divides by
  // the pilot, so the pilot must estimate the full location, not a truncated
  // one; the default (NaN) therefore uses the last observed event time.
  double pilot_truncation = std::numeric_limits<double>::quiet_NaN();
  Target target = Target::mean;
  double quantile_p = 0.5;
  // Substitutes a known baseline shape for the pooled estimate (used by the
  // oracle comparisons; also handy when the shape is known a priori).
  std::function<double(double)> alpha0_override;
};

// Efficiency-oriented two-step curve: a preliminary local-constant curve
// normalizes the time axis, the baseline shape is pooled across covariate
// slices, and each grid point is re-estimated by fitting the rescaled shape
// to that slice's hazard.
inline CurveEstimate two_step(const Sample& s, const Kernel& K, const Kernel& k, double b, double h,
                              const WeightFunction& wf, std::span<const double> grid,
                              const TwoStepConfig& cfg = {}) {
  if (s.size() == 0) throw std::invalid_argument("two_step: empty sample");
  if (!(cfg.bracket_lo > 0.0 && cfg.bracket_lo < cfg.bracket_hi))
    throw std::invalid_argument("two_step: bracket factors must satisfy 0 < lo < hi");
  double t_max = cfg.truncation;
  if (std::isnan(t_max)) {
    std::vector<double> exits(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) exits[i] = s.records()[i].exit;
    t_max = percentile(exits, 0.95);
  }
  if (!(t_max > 0.0)) throw std::invalid_argument("two_step: truncation point must be positive");
  double t_pilot = cfg.pilot_truncation;
  if (std::isnan(t_pilot)) t_pilot = s.event_times().empty() ? t_max : s.event_times().back();
  if (!(t_pilot > 0.0))
    throw std::invalid_argument("two_step: pilot truncation point must be positive");

  const std::vector<double> xpool = linspace(wf.x_lo(), wf.x_hi(), cfg.xgrid_size);
  const CurveEstimate gpool =
      estimate_curve(s, Method::local_constant, K, b, xpool, t_pilot, cfg.target, cfg.quantile_p);
  const CurveEstimate gout =
      estimate_curve(s, Method::local_constant, K, b, grid, t_pilot, cfg.target, cfg.quantile_p);

  std::function<double(double)> alpha0;
  if (cfg.alpha0_override) {
    alpha0 = cfg.alpha0_override;
  } else {
    const ShapeEstimate shape =
        estimate_shape_curve(s, gpool, K, k, b, h, wf, xpool, cfg.ugrid_size);
    // The criterion probes y/theta outside the tabulated range only for theta
    // far from its optimum, so the extension just has to stay a penalty there:
    // no hazard mass below the grid, last knot held above it.
    alpha0 = [shape](double u) {
      if (u < shape.lo()) return 0.0;
      if (u > shape.hi()) return shape.values.back();
      return shape.at(u);
    };
  }

  const std::vector<double> ygrid = linspace(0.0, t_max, cfg.ygrid_size);
  CurveEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  out.values.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  out.method = Method::two_step;
  out.truncation = t_max;
  parallel_for(grid.size(), [&](std::size_t i) {
    const double g1 = gout.values[i];
    if (!std::isfinite(g1) || g1 <= 0.0) return;
    try {
      std::vector<HazardPoint> hz(ygrid.size());
      bool any_weight = false;
      for (std::size_t j = 0; j < ygrid.size(); ++j) {
        hz[j] = hazard_lc(s, K, k, b, h, grid[i], ygrid[j]);
        if (wf(grid[i], ygrid[j], hz[j].exposure) > 0.0) any_weight = true;
      }
      if (!any_weight) return;
      const MinimizeResult res = minimize_1d(
          [&](double theta) { return oracle_criterion(ygrid, hz, alpha0, theta, grid[i], wf); },
          cfg.bracket_lo * g1, cfg.bracket_hi * g1);
      out.values[i] = res.argmin;
    } catch (const Error&) {
      // leave the point undefined
    } catch (const std::domain_error&) {
      // non-finite criterion value during the search
    }
  });
  return out;
}

}  // namespace filtreg
