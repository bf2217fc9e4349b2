#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "filtreg/data.hpp"
#include "filtreg/errors.hpp"
#include "filtreg/kernels.hpp"

namespace filtreg {

// Pointwise hazard evaluation: kernel-smoothed occurrence over kernel-smoothed
// exposure. The ratio is defined only when exposure clears the floor.
struct HazardPoint {
  double occurrence = 0.0;
  double exposure = 0.0;
  bool defined = false;
  double value = std::numeric_limits<double>::quiet_NaN();

  double value_or_throw() const {
    if (!defined) throw ZeroExposure("hazard undefined: smoothed exposure below floor");
    return value;
  }
};

// Absolute floor under which a smoothed exposure counts as zero. 1/(n b h) is
// the scale of a single observation's largest possible contribution, so the
// cutoff is relative to that, not to the data's units.
inline double exposure_floor(std::size_t n, double b, double h) {
  return 1e-12 / (static_cast<double>(n) * b * h);
}

// O_{x,y} = n^-1 sum over events of K_b(x - X_i) k_h(y - exit_i)
inline double occurrence_lc(const Sample& s, const Kernel& K, const Kernel& k, double b, double h,
                            double x, double y) {
  if (!(b > 0.0) || !(h > 0.0)) throw std::invalid_argument("occurrence_lc: bandwidths must be positive");
  double acc = 0.0;
  for (const EventRecord& r : s.records())
    if (r.event) acc += eval_scaled(K, b, x - r.x) * eval_scaled(k, h, y - r.exit);
  return acc / static_cast<double>(s.size());
}

// E_{x,y} = n^-1 sum_i K_b(x - X_i) * int over (entry_i, exit_i] of k_h(y - u) du,
// with the time integral evaluated exactly through the kernel antiderivative.
inline double exposure_lc(const Sample& s, const Kernel& K, const Kernel& k, double b, double h,
                          double x, double y) {
  if (!(b > 0.0) || !(h > 0.0)) throw std::invalid_argument("exposure_lc: bandwidths must be positive");
  double acc = 0.0;
  for (const EventRecord& r : s.records()) {
    const double kb = eval_scaled(K, b, x - r.x);
    if (kb == 0.0) continue;
    acc += kb * integral_scaled(k, h, y, r.entry, r.exit);
  }
  return acc / static_cast<double>(s.size());
}

inline HazardPoint hazard_lc(const Sample& s, const Kernel& K, const Kernel& k, double b, double h,
                             double x, double y) {
  if (s.size() == 0) throw std::invalid_argument("hazard_lc: empty sample");
  HazardPoint p;
  p.occurrence = occurrence_lc(s, K, k, b, h, x, y);
  p.exposure = exposure_lc(s, K, k, b, h, x, y);
  if (p.exposure >= exposure_floor(s.size(), b, h)) {
    p.defined = true;
    p.value = p.occurrence / p.exposure;
  }
  return p;
}

// Local-linear design pieces at w = (x, y) over the plane spanned by
// 1, (x - X_i), (y - u):
//   c0    = n^-1 sum_i kb_i m0_i
//   c1    = n^-1 sum_i kb_i (dx_i m0_i, m1_i)
//   D     = n^-1 sum_i kb_i [dx^2 m0, dx m1; dx m1, m2]
// with mN_i = int over (entry_i, exit_i] of k_h(y - u) (y - u)^N du, all exact.
struct LocalLinearDesign {
  double c0 = 0.0;
  std::array<double, 2> c1{0.0, 0.0};
  std::array<std::array<double, 2>, 2> d{{{0.0, 0.0}, {0.0, 0.0}}};
};

inline LocalLinearDesign local_linear_design(const Sample& s, const Kernel& K, const Kernel& k,
                                             double b, double h, double x, double y) {
  if (!(b > 0.0) || !(h > 0.0))
    throw std::invalid_argument("local_linear_design: bandwidths must be positive");
  LocalLinearDesign out;
  for (const EventRecord& r : s.records()) {
    const double kb = eval_scaled(K, b, x - r.x);
    if (kb == 0.0) continue;
    const double dx = x - r.x;
    const double m0 = integral_scaled(k, h, y, r.entry, r.exit);
    const double m1 = moment_integral_scaled(k, 1, h, y, r.entry, r.exit);
    const double m2 = moment_integral_scaled(k, 2, h, y, r.entry, r.exit);
    out.c0 += kb * m0;
    out.c1[0] += kb * dx * m0;
    out.c1[1] += kb * m1;
    out.d[0][0] += kb * dx * dx * m0;
    out.d[0][1] += kb * dx * m1;
    out.d[1][1] += kb * m2;
  }
  const double n = static_cast<double>(s.size());
  out.c0 /= n;
  out.c1[0] /= n;
  out.c1[1] /= n;
  out.d[0][0] /= n;
  out.d[0][1] /= n;
  out.d[1][0] = out.d[0][1];
  out.d[1][1] /= n;
  return out;
}

namespace detail {

// Reciprocal condition number of a symmetric 2x2 matrix via its eigenvalues.
inline double rcond_sym2(double a00, double a01, double a11) {
  const double mean = 0.5 * (a00 + a11);
  const double disc = std::sqrt(0.25 * (a00 - a11) * (a00 - a11) + a01 * a01);
  const double l1 = std::abs(mean + disc);
  const double l2 = std::abs(mean - disc);
  const double hi = std::max(l1, l2);
  if (hi == 0.0) return 0.0;
  return std::min(l1, l2) / hi;
}

}  // namespace detail

// Local-linear hazard at (x, y). Bandwidth-normalized coordinates are used for
// the conditioning check so the test does not depend on the b/h disparity. A
// design is also rejected when the Schur complement c0 - c1' D^-1 c1 collapses
// relative to c0: that is the rank-deficient case (for instance a single
// record in the window), where D itself can still look well conditioned.
inline HazardPoint hazard_ll(const Sample& s, const Kernel& K, const Kernel& k, double b, double h,
                             double x, double y, bool fallback_to_lc = false) {
  if (s.size() == 0) throw std::invalid_argument("hazard_ll: empty sample");
  const LocalLinearDesign dsn = local_linear_design(s, K, k, b, h, x, y);

  const double n00 = dsn.d[0][0] / (b * b);
  const double n01 = dsn.d[0][1] / (b * h);
  const double n11 = dsn.d[1][1] / (h * h);
  const double det = dsn.d[0][0] * dsn.d[1][1] - dsn.d[0][1] * dsn.d[0][1];
  bool singular = detail::rcond_sym2(n00, n01, n11) < 1e-10 || det == 0.0;

  double z0 = 0.0, z1 = 0.0, el = 0.0;
  if (!singular) {
    z0 = (dsn.d[1][1] * dsn.c1[0] - dsn.d[0][1] * dsn.c1[1]) / det;
    z1 = (dsn.d[0][0] * dsn.c1[1] - dsn.d[0][1] * dsn.c1[0]) / det;
    el = dsn.c0 - (dsn.c1[0] * z0 + dsn.c1[1] * z1);
    if (el <= 1e-10 * dsn.c0) singular = true;
  }
  if (singular) {
    if (fallback_to_lc) return hazard_lc(s, K, k, b, h, x, y);
    throw SingularDesign("hazard_ll: local-linear design is singular or ill-conditioned");
  }

  double ol = 0.0;
  for (const EventRecord& r : s.records()) {
    if (!r.event) continue;
    const double kb = eval_scaled(K, b, x - r.x) * eval_scaled(k, h, y - r.exit);
    if (kb == 0.0) continue;
    const double v0 = x - r.x;
    const double v1 = y - r.exit;
    ol += kb * (1.0 - (v0 * z0 + v1 * z1));
  }
  ol /= static_cast<double>(s.size());

  HazardPoint p;
  p.occurrence = ol;
  p.exposure = el;
  if (el >= exposure_floor(s.size(), b, h)) {
    p.defined = true;
    p.value = ol / el;
  }
  return p;
}

inline HazardPoint hazard_ll(const Sample& s, const Kernel& K, double b, double x, double y,
                             bool fallback_to_lc = false) {
  return hazard_ll(s, K, K, b, b, x, y, fallback_to_lc);
}

}  // namespace filtreg
