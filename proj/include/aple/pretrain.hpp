// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "aple/dataset.hpp"
#include "aple/encoders.hpp"

namespace aple {

/// Short contrastive warm-up of the seeded-random backbone so its zero-shot
/// predictions beat chance. Images come from a separate render stream with a
/// milder style than the dataset, and cover every class name.
struct PretrainConfig {
  bool enabled = true;
  std::uint64_t seed = 11;  // backbone init and warm-up sampling
  std::size_t steps = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;  // Adam
  double noise_scale = 0.5;
  double jitter_scale = 0.5;

  void validate() const;
};

/// Initializes weights from `pcfg.seed` and, when enabled, runs the warm-up.
/// Returned weights are frozen. `losses` receives the per-step CE if given.
EncoderWeights build_backbone(const ModelConfig& cfg, const DatasetSpec& spec,
                              const PretrainConfig& pcfg, std::vector<double>* losses = nullptr);

}  // namespace aple
