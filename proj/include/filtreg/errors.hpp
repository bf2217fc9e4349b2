#pragma once

#include <stdexcept>
#include <string>

namespace filtreg {

// Base class for estimation failures. Callers that want to turn a failed
// grid point into an undefined-flag instead of aborting catch this type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Smoothed exposure below the floor where a hazard value was required.
class ZeroExposure : public Error {
 public:
  explicit ZeroExposure(const std::string& what) : Error(what) {}
};

// Local-linear design cannot be inverted (rank-deficient or ill-conditioned).
class SingularDesign : public Error {
 public:
  explicit SingularDesign(const std::string& what) : Error(what) {}
};

// Survivor curve never drops to the requested level.
class QuantileUndefined : public Error {
 public:
  explicit QuantileUndefined(const std::string& what) : Error(what) {}
};

// Pooled shape ratio has a vanishing denominator (all points dropped).
class ShapeUndefined : public Error {
 public:
  explicit ShapeUndefined(const std::string& what) : Error(what) {}
};

// A criterion quadrature point carries positive weight but no usable hazard.
class HazardUndefinedInWeightSupport : public Error {
 public:
  explicit HazardUndefinedInWeightSupport(const std::string& what) : Error(what) {}
};

}  // namespace filtreg
