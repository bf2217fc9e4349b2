#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "filtreg/numerics.hpp"

namespace filtreg {

// Symmetric polynomial kernel supported on [-1, 1], stored as coefficients of
// the even powers: K(u) = coeffs[0] + coeffs[1] u^2 + coeffs[2] u^4 + ...
// Polynomial form keeps the antiderivative and the partial moments exact,
// which the exposure integrals and the local-linear design rely on.
struct Kernel {
  std::string name;
  std::vector<double> coeffs;
  double mu2;   // int u^2 K(u) du
  double l2sq;  // int K(u)^2 du

  double eval(double u) const {
    if (u < -1.0 || u > 1.0) return 0.0;
    const double u2 = u * u;
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * u2 + *it;
    return acc;
  }

  // int_{-1}^{t} s^m K(s) ds, held constant outside the support.
  double partial_moment(int m, double t) const {
    if (t <= -1.0) return 0.0;
    if (t > 1.0) t = 1.0;
    double acc = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
      const int p = static_cast<int>(2 * j) + m + 1;
      const double lower = (p % 2 == 0) ? 1.0 : -1.0;  // (-1)^p
      acc += coeffs[j] * (ipow(t, p) - lower) / static_cast<double>(p);
    }
    return acc;
  }

  double antideriv(double t) const { return partial_moment(0, t); }
};

// Quartic (biweight) kernel: 15/16 (1 - u^2)^2.
inline const Kernel& quartic_kernel() {
  static const Kernel k{"quartic", {15.0 / 16.0, -30.0 / 16.0, 15.0 / 16.0}, 1.0 / 7.0, 5.0 / 7.0};
  return k;
}

// Epanechnikov kernel: 3/4 (1 - u^2).
inline const Kernel& epanechnikov_kernel() {
  static const Kernel k{"epanechnikov", {0.75, -0.75}, 1.0 / 5.0, 3.0 / 5.0};
  return k;
}

// Triweight kernel: 35/32 (1 - u^2)^3.
inline const Kernel& triweight_kernel() {
  static const Kernel k{
      "triweight", {35.0 / 32.0, -105.0 / 32.0, 105.0 / 32.0, -35.0 / 32.0}, 1.0 / 9.0, 350.0 / 429.0};
  return k;
}

inline const Kernel& kernel_by_name(std::string_view name) {
  if (name == "quartic") return quartic_kernel();
  if (name == "epanechnikov") return epanechnikov_kernel();
  if (name == "triweight") return triweight_kernel();
  throw std::invalid_argument("unknown kernel '" + std::string(name) +
                              "' (expected quartic, epanechnikov or triweight)");
}

// k_h(u) = K(u/h)/h
inline double eval_scaled(const Kernel& k, double h, double u) {
  if (!(h > 0.0)) throw std::invalid_argument("eval_scaled: bandwidth must be positive");
  return k.eval(u / h) / h;
}

// Exact int_a^b k_h(y - u) du via the antiderivative.
inline double integral_scaled(const Kernel& k, double h, double y, double a, double b) {
  if (!(h > 0.0)) throw std::invalid_argument("integral_scaled: bandwidth must be positive");
  if (b < a) throw std::invalid_argument("integral_scaled: interval end precedes start");
  return k.antideriv((y - a) / h) - k.antideriv((y - b) / h);
}

// Exact int_a^b k_h(y - u) (y - u)^m du = h^m [M_m((y-a)/h) - M_m((y-b)/h)]
// where M_m is the kernel's m-th partial moment.
inline double moment_integral_scaled(const Kernel& k, int m, double h, double y, double a, double b) {
  if (!(h > 0.0)) throw std::invalid_argument("moment_integral_scaled: bandwidth must be positive");
  if (b < a) throw std::invalid_argument("moment_integral_scaled: interval end precedes start");
  return ipow(h, m) * (k.partial_moment(m, (y - a) / h) - k.partial_moment(m, (y - b) / h));
}

}  // namespace filtreg
