#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "filtreg/data.hpp"
#include "filtreg/errors.hpp"
#include "filtreg/kernels.hpp"
#include "filtreg/step_function.hpp"

namespace filtreg {

struct IntegratedHazardDiagnostics {
  // Event times whose weighted risk set fell under the floor while weighted
  // events were present there; such jumps are dropped rather than divided out.
  std::size_t skipped_events = 0;
};

// Cumulative hazard at covariate value x with the time-direction smoothing
// taken to its limit: a pure jump process with mass
//   sum of K_b(x - X_i) over events at t  /  sum of K_b(x - X_j) over subjects at risk at t
// at each distinct event time t.
inline StepFunction integrated_hazard_lc(const Sample& s, const Kernel& K, double b, double x,
                                         IntegratedHazardDiagnostics* diag = nullptr) {
  if (!(b > 0.0)) throw std::invalid_argument("integrated_hazard_lc: bandwidth must be positive");
  const auto& recs = s.records();
  std::vector<double> w(recs.size());
  for (std::size_t j = 0; j < recs.size(); ++j) w[j] = eval_scaled(K, b, x - recs[j].x);

  // One record at the kernel mode weighs about 1/b, so this is the same
  // "negligible relative to a single observation" cutoff as exposure_floor.
  const double floor = 1e-12 / b;

  std::vector<double> times, values;
  double cum = 0.0;
  for (double t : s.event_times()) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < recs.size(); ++j) {
      den += w[j] * exposure_at(recs[j], t);
      if (recs[j].event && recs[j].exit == t) num += w[j];
    }
    if (num == 0.0) continue;
    if (den < floor) {
      if (diag) ++diag->skipped_events;
      continue;
    }
    cum += num / den;
    times.push_back(t);
    values.push_back(cum);
  }
  return StepFunction(0.0, std::move(times), std::move(values));
}

// Same jump construction with local-linear covariate weights
//   Kbar_j = K_b(v_j) (1 - v_j c1/d) / (c0 - c1^2/d),   v_j = x - X_j,
// which sum to one and may be negative near the covariate boundary.
inline StepFunction integrated_hazard_ll(const Sample& s, const Kernel& K, double b, double x,
                                         IntegratedHazardDiagnostics* diag = nullptr) {
  if (!(b > 0.0)) throw std::invalid_argument("integrated_hazard_ll: bandwidth must be positive");
  const auto& recs = s.records();
  double c0 = 0.0, c1 = 0.0, d = 0.0;  // in bandwidth-normalized coordinates
  std::vector<double> kb(recs.size());
  for (std::size_t j = 0; j < recs.size(); ++j) {
    kb[j] = eval_scaled(K, b, x - recs[j].x);
    const double v = (x - recs[j].x) / b;
    c0 += kb[j];
    c1 += kb[j] * v;
    d += kb[j] * v * v;
  }
  const double mean = 0.5 * (c0 + d);
  const double disc = std::sqrt(0.25 * (c0 - d) * (c0 - d) + c1 * c1);
  const double hi = std::abs(mean + disc), lo = std::abs(mean - disc);
  if (hi == 0.0 || lo / hi < 1e-10 || d == 0.0)
    throw SingularDesign("integrated_hazard_ll: covariate design is singular or ill-conditioned");
  const double schur = c0 - c1 * c1 / d;
  if (schur <= 1e-10 * c0)
    throw SingularDesign("integrated_hazard_ll: covariate design is singular or ill-conditioned");

  std::vector<double> w(recs.size());
  for (std::size_t j = 0; j < recs.size(); ++j) {
    const double v = (x - recs[j].x) / b;
    w[j] = kb[j] * (1.0 - v * c1 / d) / schur;
  }

  const double floor = 1e-12;  // weights are normalized to sum to one

  std::vector<double> times, values;
  double cum = 0.0;
  for (double t : s.event_times()) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < recs.size(); ++j) {
      den += w[j] * exposure_at(recs[j], t);
      if (recs[j].event && recs[j].exit == t) num += w[j];
    }
    if (num == 0.0) continue;
    if (std::abs(den) < floor) {
      if (diag) ++diag->skipped_events;
      continue;
    }
    cum += num / den;
    times.push_back(t);
    values.push_back(cum);
  }
  return StepFunction(0.0, std::move(times), std::move(values));
}

// Product-limit map from a cumulative hazard to a survivor curve:
// S = prod (1 - dA). The running product is clamped into [0,1] and once a
// factor reaches zero or below the curve stays at zero.
inline StepFunction product_limit(const StepFunction& a, std::size_t* clamp_count = nullptr) {
  if (a.initial() != 0.0)
    throw std::invalid_argument("product_limit: integrated hazard must start at zero");
  std::vector<double> values(a.jump_count());
  double s = 1.0;
  bool dead = false;
  for (std::size_t k = 0; k < a.jump_count(); ++k) {
    if (!dead) {
      const double factor = 1.0 - (a.values()[k] - a.value_before(k));
      if (factor <= 0.0) {
        if (factor < 0.0 && clamp_count) ++(*clamp_count);
        s = 0.0;
        dead = true;
      } else {
        s *= factor;
        if (s > 1.0) {
          if (clamp_count) ++(*clamp_count);
          s = 1.0;
        }
      }
    }
    values[k] = s;
  }
  return StepFunction(1.0, a.times(), std::move(values));
}

// Alternative survivor map S = exp(-A); never reaches zero.
inline StepFunction exp_survivor(const StepFunction& a) {
  if (a.initial() != 0.0)
    throw std::invalid_argument("exp_survivor: integrated hazard must start at zero");
  std::vector<double> values(a.jump_count());
  for (std::size_t k = 0; k < a.jump_count(); ++k) values[k] = std::exp(-a.values()[k]);
  return StepFunction(1.0, a.times(), std::move(values));
}

}  // namespace filtreg
