// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aple/dataset.hpp"
#include "aple/encoders.hpp"
#include "aple/image_adapter.hpp"

namespace aple {

enum class Split { base, novel, all };

struct ClassAccuracy {
  std::string name;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;  // percent
};

/// One evaluated image: its position in Dataset::eval and labels local to
/// the split's class list.
struct ImagePrediction {
  std::size_t index = 0;
  std::size_t label = 0;
  std::size_t predicted = 0;
};

struct SplitResult {
  Split split = Split::all;
  std::vector<std::string> class_names;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;  // percent
  std::vector<ClassAccuracy> per_class;
  std::vector<ImagePrediction> predictions;
};

/// Class indices of a split in DatasetSpec order (base / novel lists as given).
std::vector<std::size_t> split_classes(const DatasetSpec& spec, Split split);

/// Top-1 accuracy over the split's eval images, choosing among the split's
/// classes only. Text features use `prompts` (null or empty for the
/// hand-crafted path); images go through `adapter` when it is non-null.
SplitResult evaluate(const EncoderWeights& w, const ModelConfig& cfg, const PromptPack* prompts,
                     const AdapterConfig* adapter, const Dataset& ds, Split split);

/// 2ab / (a + b) for accuracies in (0, 100]. Non-positive input raises NumericError.
double harmonic_mean(double base, double novel);

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // population: divides by n
};

/// Sequential double-precision sums, in input order.
Aggregate aggregate(std::span<const double> values);

const char* to_string(Split s);

}  // namespace aple
