#pragma once

// Slow, independent reference computations the tests compare the library
// against. Everything here is deliberately written the "obvious" way
// (quadrature instead of antiderivatives, direct risk-set counting instead of
// hazard plumbing) so a shared bug between test and library is unlikely.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracles {

// Composite Simpson rule with n subintervals (n made even internally).
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n) {
  if (b <= a) return 0.0;
  if (n % 2 == 1) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double acc = f(a) + f(b);
  for (std::size_t i = 1; i < n; ++i) acc += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

struct KmPoint {
  double time = 0.0;
  double survivor = 0.0;
};

// Textbook Kaplan-Meier from (time, event) pairs: at each distinct event time
// t, multiply by 1 - d_t / r_t where d_t counts events at t and r_t counts
// subjects with time >= t.
inline std::vector<KmPoint> kaplan_meier(const std::vector<double>& times,
                                         const std::vector<bool>& events) {
  if (times.size() != events.size()) throw std::invalid_argument("kaplan_meier: size mismatch");
  std::vector<double> distinct;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i]) distinct.push_back(times[i]);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<KmPoint> out;
  double s = 1.0;
  for (double t : distinct) {
    double d = 0.0, r = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (events[i] && times[i] == t) d += 1.0;
      if (times[i] >= t) r += 1.0;
    }
    s *= 1.0 - d / r;
    out.push_back({t, s});
  }
  return out;
}

// Dense grid scan; returns the abscissa of the smallest value.
inline double scan_minimum(const std::function<double(double)>& f, double lo, double hi,
                           std::size_t points) {
  double best_x = lo, best_v = f(lo);
  for (std::size_t i = 1; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    const double v = f(x);
    if (v < best_v) {
      best_v = v;
      best_x = x;
    }
  }
  return best_x;
}

// Deterministic uniform variates for building random test datasets; separate
// from the library's generator on purpose.
class TestRng {
 public:
  explicit TestRng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  double exponential(double rate) {
    return std::exponential_distribution<double>(rate)(eng_);
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace oracles
