// SPDX-License-Identifier: Apache-2.0
#include "aple/eval.hpp"

#include <cmath>

#include "aple/clip_head.hpp"
#include "aple/error.hpp"

namespace aple {

std::vector<std::size_t> split_classes(const DatasetSpec& spec, Split split) {
  switch (split) {
    case Split::base: return spec.base;
    case Split::novel: return spec.novel;
    case Split::all: {
      std::vector<std::size_t> all(spec.classes.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return all;
    }
  }
  return {};
}

SplitResult evaluate(const EncoderWeights& w, const ModelConfig& cfg, const PromptPack* prompts,
                     const AdapterConfig* adapter, const Dataset& ds, Split split) {
  const auto classes = split_classes(ds.spec, split);
  std::vector<long> local(ds.spec.classes.size(), -1);
  SplitResult r;
  r.split = split;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    local[classes[k]] = static_cast<long>(k);
    r.class_names.push_back(ds.spec.classes[classes[k]].name);
    r.per_class.push_back({r.class_names.back(), 0, 0, 0.0});
  }

  const Vocabulary vocab = Vocabulary::for_classes(ds.spec.class_names());
  const ClassPromptSet set = ClassPromptSet::build(vocab, r.class_names, cfg.max_text_len);
  const Tensor z = encode_class_texts(nullptr, w, cfg, set, prompts);

  for (std::size_t i = 0; i < ds.eval.size(); ++i) {
    const Sample& s = ds.eval[i];
    if (local[s.label] < 0) continue;
    const Tensor f = encode_image(nullptr, w, cfg, s.image, prompts, adapter);
    const std::size_t pred = predict(similarity(z, f), cfg.temperature).argmax();
    const auto y = static_cast<std::size_t>(local[s.label]);
    r.predictions.push_back({i, y, pred});
    ++r.per_class[y].total;
    ++r.total;
    if (pred == y) {
      ++r.per_class[y].correct;
      ++r.correct;
    }
  }
  if (r.total == 0) throw UsageError(std::string("evaluate: split '") + to_string(split) + "' has no images");
  r.accuracy = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (auto& c : r.per_class) {
    c.accuracy = c.total ? 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.total) : 0.0;
  }
  return r;
}

double harmonic_mean(double base, double novel) {
  if (!std::isfinite(base) || !std::isfinite(novel)) throw NumericError("harmonic_mean: non-finite input");
  if (base <= 0.0 || novel <= 0.0) {
    throw NumericError("harmonic_mean: accuracies must be positive, got " + std::to_string(base) +
                       " and " + std::to_string(novel));
  }
  if (base > 100.0 || novel > 100.0) throw UsageError("harmonic_mean: accuracies are percentages <= 100");
  return 2.0 * base * novel / (base + novel);
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw UsageError("aggregate of no values");
  Aggregate a;
  a.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(a.n);
  double sq = 0.0;
  for (double v : values) sq += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(sq / static_cast<double>(a.n));
  return a;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::base: return "base";
    case Split::novel: return "novel";
    case Split::all: return "all";
  }
  return "?";
}

}  // namespace aple
