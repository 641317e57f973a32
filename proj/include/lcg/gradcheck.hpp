#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lcg/autodiff.hpp"

namespace lcg {

struct GradientReport {
  bool ok = true;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  // Coordinate with the largest relative error, or the first non-finite one.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::string failure;
};

struct GradientCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-6;
  // Probe at most this many coordinates per tensor (0 = all), spread evenly.
  std::size_t max_coords_per_tensor = 0;
  // Five-point central stencil (Richardson-extrapolated, O(h⁴) truncation)
  // instead of the two-point one.
  bool fourth_order = false;
};

/// Builds a scalar loss on the given tape from leaves bound to the probe point.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares tape gradients against central differences coordinate-wise.
GradientReport check_gradient(const LossBuilder& loss, std::span<const Tensor> point,
                              const GradientCheckOptions& options = {});

/// Single-tensor convenience overload.
GradientReport check_gradient(const std::function<Var(Tape&, Var)>& loss, const Tensor& point,
                              double epsilon, double tolerance = 1e-4);

std::string describe(const GradientReport& report);

}  // namespace lcg
