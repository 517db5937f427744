// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "aple/dataset.hpp"
#include "aple/encoders.hpp"
#include "aple/image_adapter.hpp"
#include "aple/pretrain.hpp"
#include "aple/trainer.hpp"

namespace aple {

struct AdapterSettings {
  bool enabled = true;
  AdapterConfig params;
};

struct PromptSettings {
  std::size_t length = 2;
  PromptInit init = PromptInit::random_gauss;
};

struct OutputSettings {
  std::string dir = "runs/default";
  /// Directory for warmed backbones keyed by their inputs; empty disables it.
  std::string weights_cache = "runs/cache";
  bool checkpoints = true;
};

/// Everything one experiment needs. The JSON layout mirrors the struct
/// (see schema/experiment.schema.json).
struct ExperimentConfig {
  std::string model_preset = "desk";
  ModelConfig model = ModelConfig::desk();
  AdapterSettings adapter;
  PromptSettings prompt;
  TrainConfig train;
  PretrainConfig pretrain;
  DatasetSpec dataset = DatasetSpec::desk();
  OutputSettings output;
  std::size_t repeats = 1;

  /// Throws ConfigError listing every invalid field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Parses and validates; unknown fields and type errors are reported
  /// together with range errors.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// to_json() without `output`: what reports embed.
  nlohmann::json experiment_json() const;

  /// Hash of everything except `output`, so relocating a run keeps it.
  std::uint64_t fingerprint() const;
  /// Hash of the inputs that determine the backbone weights.
  std::uint64_t backbone_key() const;
};

/// Sets a dotted path ("train.lambda_d") in `doc`. The value is parsed as
/// JSON when possible and kept as a string otherwise. Intermediate objects
/// are created when missing; validation then flags any unknown names.
void apply_override(nlohmann::json& doc, const std::string& dotted_path, const std::string& value);

/// Reads a config file (or the defaults when `path` is empty), applies the
/// overrides in order, then parses and validates.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace aple
