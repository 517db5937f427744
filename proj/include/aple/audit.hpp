// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aple/encoders.hpp"
#include "aple/grad_check.hpp"

namespace aple {

struct GradAuditConfig {
  ModelConfig model = ModelConfig::desk();
  std::size_t classes = 4;
  std::size_t images_per_class = 1;
  std::size_t prompt_length = 2;
  std::uint64_t seed = 5;
  float eps = 1e-3f;
  double lambda_d = 0.5;
  double lambda_g = 0.3;
};

struct GradAudit {
  GradCheckResult language;  // D tensors, CE + lambda_d KL
  GradCheckResult vision;    // G tensors, CE + lambda_g KL
};

/// Finite-difference audit of the stage-1 loss on a small seeded model,
/// each phase with only its own prompt side trainable.
GradAudit audit_stage1_gradients(const GradAuditConfig& cfg);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick invariant suite behind `aple selftest`. Calls `report` after each check.
std::vector<CheckOutcome> run_selftest(const std::function<void(const CheckOutcome&)>& report = {});

}  // namespace aple
