#pragma once

#include <functional>
#include <vector>

#include "patmod/tape.hpp"

namespace patmod::num {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool finite = true;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

/// Relative deviation with an absolute floor so that gradients near zero are
/// judged on absolute error: |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Builds a scalar-valued graph from one differentiable input.
using TapeFunction = std::function<Var(Tape&, Var)>;

/// Central differences (f(x+eps) - f(x-eps)) / (2 eps) per coordinate of x,
/// compared against the tape gradient. A NaN anywhere is a failure.
GradCheckResult grad_check(const TapeFunction& f, const Tensor& x, double eps = 1e-6,
                           double floor = 1e-6);

/// Builds a scalar loss from a parameter set on a fresh tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Same check over parameters of a ParameterSet. `indices` selects which
/// parameters to probe (all trainable ones when empty); every scalar is probed.
GradCheckResult grad_check_parameters(ParameterSet& params, const LossBuilder& loss,
                                      double eps = 1e-6, double floor = 1e-6,
                                      std::vector<std::size_t> indices = {});

}  // namespace patmod::num
