// SPDX-License-Identifier: Apache-2.0
#include "aple/grad_check.hpp"

#include <cmath>

#include "aple/error.hpp"

namespace aple {

double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const LossFn& f, std::span<Tensor> params, float eps) {
  if (!(eps > 0.0f)) throw UsageError("grad_check: eps must be positive");
  for (const Tensor& p : params) {
    if (!p.trainable()) throw UsageError("grad_check: every parameter must be trainable");
  }

  std::vector<std::vector<float>> analytic(params.size());
  {
    for (Tensor& p : params) p.clear_grad();
    Graph g;
    Tensor loss = f(&g);
    if (g.is_attached(loss) && loss.impl()->graph_id == g.id()) {
      g.backward(loss);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].has_grad()) {
        auto gr = params[i].grad();
        analytic[i].assign(gr.begin(), gr.end());
      } else {
        analytic[i].assign(params[i].numel(), 0.0f);
      }
      params[i].clear_grad();
    }
  }

  GradCheckResult result;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const float original = values[k];
      values[k] = original + eps;
      const float up = values[k];
      const double f_up = f(nullptr).item();
      values[k] = original - eps;
      const float down = values[k];
      const double f_down = f(nullptr).item();
      values[k] = original;

      const double numeric = (f_up - f_down) / (static_cast<double>(up) - down);
      const double a = analytic[pi][k];
      const double err = gradient_rel_error(a, numeric);
      diff2 += (a - numeric) * (a - numeric);
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
      a2 += a * a;
      n2 += numeric * numeric;
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_index = k;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  const double denom = std::sqrt(std::max(a2, n2));
  result.norm_rel_error = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
  return result;
}

}  // namespace aple
