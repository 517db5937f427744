// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>

#include "aple/tensor.hpp"

namespace aple {

/// Builds a scalar loss. Must record onto `g` when it is non-null and must be
/// deterministic, since it is re-evaluated for every perturbed coordinate.
using LossFn = std::function<Tensor(Graph* g)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location and values of the worst coordinate.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // ||a - n|| / max(||a||, ||n||) over all coordinates. Diagnostic only: it
  // stays meaningful when single coordinates drown in float32 loss rounding.
  double norm_rel_error = 0.0;
  double max_abs_error = 0.0;  // max |a - n|
};

/// |a - n| / max(|a|, |n|), with 0/0 defined as 0.
double gradient_rel_error(double analytic, double numeric);

/// Compares backward() gradients against central differences for every
/// coordinate of `params`. The difference quotient divides by the step that
/// was actually stored in float32, not the nominal 2*eps. Parameter values are
/// restored bitwise and gradient buffers are cleared on return.
GradCheckResult grad_check(const LossFn& f, std::span<Tensor> params, float eps);

}  // namespace aple
