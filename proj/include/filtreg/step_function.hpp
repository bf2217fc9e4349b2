#pragma once

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "filtreg/numerics.hpp"

namespace filtreg {

// Right-continuous step function: value(t) = initial for t < times[0] and
// values[k] on [times[k], times[k+1]).
class StepFunction {
 public:
  StepFunction() = default;
  explicit StepFunction(double initial) : initial_(initial) {}
  StepFunction(double initial, std::vector<double> times, std::vector<double> values)
      : initial_(initial), times_(std::move(times)), values_(std::move(values)) {
    if (times_.size() != values_.size())
      throw std::invalid_argument("StepFunction: times/values size mismatch");
    for (std::size_t i = 1; i < times_.size(); ++i)
      if (!(times_[i - 1] < times_[i]))
        throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
  }

  double operator()(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return initial_;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  double initial() const { return initial_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t jump_count() const { return times_.size(); }

  // Left limit at the k-th jump.
  double value_before(std::size_t k) const {
    if (k >= times_.size()) throw std::out_of_range("StepFunction: jump index out of range");
    return k == 0 ? initial_ : values_[k - 1];
  }

 private:
  double initial_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
};

// t,value rows; the initial value is emitted at t=0 when no jump sits there.
inline void write_step_function_csv(std::ostream& os, const StepFunction& f) {
  os << "t,value\n";
  if (f.jump_count() == 0 || f.times().front() > 0.0)
    os << fmt_double(0.0) << ',' << fmt_double(f.initial()) << '\n';
  for (std::size_t k = 0; k < f.jump_count(); ++k)
    os << fmt_double(f.times()[k]) << ',' << fmt_double(f.values()[k]) << '\n';
}

}  // namespace filtreg
