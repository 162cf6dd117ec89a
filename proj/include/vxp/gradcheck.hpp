#pragma once

#include <cstddef>
#include <functional>

#include "vxp/tensor.hpp"

namespace vxp::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  /// Smallest distance to a non-smooth point seen while evaluating `f`
  /// (see `kink_margin()`); callers reject points where this is below
  /// a few multiples of the step.
  double kink_margin = 0.0;
  std::size_t checked = 0;
};

/// Compares the reverse-mode gradient of scalar `f` with respect to the
/// leaf `param` against central finite differences. `f` is re-evaluated
/// with `param` perturbed in place; the original values are restored.
/// Error per element is |analytic - fd| / max(1, |fd|). When `max_checks`
/// is nonzero, an evenly strided subset of elements is checked.
GradCheckResult check_gradient_detail(const std::function<Tensor()>& f, Tensor param,
                                      double step, std::size_t max_checks = 0);

/// check_gradient(f, x, step): max relative error of d f / d x.
double check_gradient(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step);

}  // namespace vxp::ad
