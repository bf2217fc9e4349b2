#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "filtreg/errors.hpp"
#include "filtreg/hazard.hpp"
#include "filtreg/numerics.hpp"
#include "filtreg/survivor.hpp"

namespace filtreg {

enum class Method { local_constant, local_linear, two_step };
enum class Target { mean, median };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::local_constant: return "local-constant";
    case Method::local_linear: return "local-linear";
    case Method::two_step: return "two-step";
  }
  return "unknown";
}

struct CurveEstimate {
  std::vector<double> grid;
  std::vector<double> values;  // NaN marks an undefined grid point
  Method method = Method::local_constant;
  double truncation = std::numeric_limits<double>::quiet_NaN();

  bool defined(std::size_t i) const { return !std::isnan(values[i]); }
  std::size_t undefined_count() const {
    std::size_t c = 0;
    for (double v : values)
      if (std::isnan(v)) ++c;
    return c;
  }
};

// Truncated mean -int_0^T y dS(y) = sum over jumps t_k <= T of t_k (S(t_k-) - S(t_k)).
inline double mean_truncated(const StepFunction& s, double t_max) {
  if (!(t_max > 0.0)) throw std::invalid_argument("mean_truncated: truncation point must be positive");
  double acc = 0.0;
  for (std::size_t k = 0; k < s.jump_count(); ++k) {
    if (s.times()[k] > t_max) break;
    acc += s.times()[k] * (s.value_before(k) - s.values()[k]);
  }
  return acc;
}

// Generalized inverse: inf { y >= 0 : S(y) <= 1 - p }. The comparison is
// non-strict, so a jump landing exactly on 1 - p counts.
inline double quantile(const StepFunction& s, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile: p outside (0,1)");
  const double target = 1.0 - p;
  if (s.initial() <= target) return 0.0;
  for (std::size_t k = 0; k < s.jump_count(); ++k)
    if (s.values()[k] <= target) return s.times()[k];
  throw QuantileUndefined("quantile: survivor curve never reaches " + fmt_double(target));
}

// Weighted mean of exits; only valid for unfiltered data (every record an event).
inline double nadaraya_watson(const Sample& s, const Kernel& K, double b, double x) {
  if (!(b > 0.0)) throw std::invalid_argument("nadaraya_watson: bandwidth must be positive");
  double num = 0.0, den = 0.0;
  for (const EventRecord& r : s.records()) {
    if (!r.event)
      throw std::invalid_argument("nadaraya_watson: requires unfiltered data (all records events)");
    const double w = eval_scaled(K, b, x - r.x);
    num += w * r.exit;
    den += w;
  }
  if (den == 0.0) throw ZeroExposure("nadaraya_watson: no covariate weight at x");
  return num / den;
}

// Full curve pipeline for the one-step estimators: integrated hazard at each
// grid point, product-limit survivor, then the requested functional. A grid
// point that fails (no weighted events, singular design, survivor too shallow
// for the quantile) comes back as NaN rather than aborting the curve.
inline CurveEstimate estimate_curve(const Sample& s, Method method, const Kernel& K, double b,
                                    std::span<const double> grid, double truncation,
                                    Target target = Target::mean, double quantile_p = 0.5) {
  if (method == Method::two_step)
    throw std::invalid_argument("estimate_curve: two-step has its own entry point");
  if (s.size() == 0) throw std::invalid_argument("estimate_curve: empty sample");
  CurveEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  out.values.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  out.method = method;
  out.truncation = truncation;
  parallel_for(grid.size(), [&](std::size_t i) {
    try {
      const StepFunction a = method == Method::local_constant
                                 ? integrated_hazard_lc(s, K, b, grid[i])
                                 : integrated_hazard_ll(s, K, b, grid[i]);
      if (a.jump_count() == 0) return;  // no effective data in the window
      const StepFunction surv = product_limit(a);
      out.values[i] = target == Target::mean ? mean_truncated(surv, truncation)
                                             : quantile(surv, quantile_p);
    } catch (const Error&) {
      // leave the point undefined
    }
  });
  return out;
}

// Both sides of the integration-by-parts identity
//   int alpha(u)/S(u) (int_u^inf S)^2 du  =  2 int u S du - (int S du)^2
// evaluated by trapezoid quadrature on the given grid (tail integrals use the
// same grid, truncated at its end).
struct VarianceIdentity {
  double direct = 0.0;
  double by_parts = 0.0;
};

inline VarianceIdentity variance_identity(const std::function<double(double)>& alpha,
                                          const std::function<double(double)>& survivor,
                                          std::span<const double> grid) {
  const std::size_t n = grid.size();
  if (n < 3) throw std::invalid_argument("variance_identity: grid too short");
  std::vector<double> sv(n), tail(n), lhs(n), us(n);
  for (std::size_t i = 0; i < n; ++i) sv[i] = survivor(grid[i]);
  tail[n - 1] = 0.0;
  for (std::size_t i = n - 1; i > 0; --i)
    tail[i - 1] = tail[i] + 0.5 * (grid[i] - grid[i - 1]) * (sv[i] + sv[i - 1]);
  for (std::size_t i = 0; i < n; ++i) {
    lhs[i] = alpha(grid[i]) / sv[i] * tail[i] * tail[i];
    us[i] = grid[i] * sv[i];
  }
  VarianceIdentity out;
  out.direct = trapezoid(grid, lhs);
  const double int_s = tail[0];
  out.by_parts = 2.0 * trapezoid(grid, us) - int_s * int_s;
  return out;
}

inline void write_curve_csv(std::ostream& os, const CurveEstimate& c) {
  os << "x,estimate,defined\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i)
    os << fmt_double(c.grid[i]) << ',' << fmt_double(c.values[i]) << ','
       << (c.defined(i) ? '1' : '0') << '\n';
}

inline nlohmann::ordered_json curve_metadata_json(const CurveEstimate& c, const std::string& kernel,
                                                  double bandwidth, Target target) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["method"] = method_name(c.method);
  j["target"] = target == Target::mean ? "mean" : "median";
  j["kernel"] = kernel;
  j["bandwidth"] = bandwidth;
  if (std::isnan(c.truncation))
    j["truncation"] = nullptr;
  else
    j["truncation"] = c.truncation;
  j["grid_size"] = c.grid.size();
  j["undefined_points"] = c.undefined_count();
  return j;
}

}  // namespace filtreg
