// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aple/config.hpp"
#include "aple/dataset.hpp"
#include "aple/encoders.hpp"
#include "aple/report.hpp"
#include "aple/trainer.hpp"

namespace aple {

struct RunOptions {
  bool write_files = true;
  /// Progress messages; ignored when empty.
  std::function<void(const std::string&)> log;
};

struct RunOutputs {
  EvalReport report;
  RunState state;  // of the last repeat
  PromptPack initial_prompts;
  PromptPack final_prompts;
  double seconds = 0.0;
};

/// The base-class training problem of a dataset: hand-crafted prompts for
/// the base names and the training images with base-local labels.
struct BaseTask {
  Vocabulary vocab;
  ClassPromptSet classes;
  TrainSet data;
};

BaseTask make_base_task(const ExperimentConfig& cfg, const Dataset& ds);

/// Loads the backbone from the weights cache or builds (and caches) it.
EncoderWeights load_or_build_backbone(const ExperimentConfig& cfg, const RunOptions& opts = {},
                                      bool* from_cache = nullptr);

/// Full experiment: dataset, backbone, teacher cache, stage 1, stage 2,
/// evaluation, and (when opts.write_files) report, checkpoints, step log and
/// run state under cfg.output.dir.
RunOutputs run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {});

enum class SweepAxis { prompt_length, sigma, lambda_d, lambda_g, adaptation_on_off };

SweepAxis sweep_axis_from_string(const std::string& s);
const char* to_string(SweepAxis a);

/// The config of one sweep point: `base` with only the swept field changed.
/// adaptation_on_off takes "on" (stage 2 as configured) or "off" (no stage 2).
ExperimentConfig sweep_point_config(const ExperimentConfig& base, SweepAxis axis,
                                    const std::string& value);

struct SweepOutputs {
  EvalReport report;
  std::vector<RunOutputs> points;
};

/// One run per value (at least two). Point outputs go to
/// <output.dir>/point-<i>; the sweep report to <output.dir>. A failing point
/// writes the partial table before the error propagates.
SweepOutputs run_sweep(const ExperimentConfig& base, SweepAxis axis,
                       const std::vector<std::string>& values, const RunOptions& opts = {});

}  // namespace aple
