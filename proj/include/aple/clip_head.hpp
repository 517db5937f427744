// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aple/tensor.hpp"

namespace aple {

/// Floor applied to probabilities inside log terms.
inline constexpr double kProbFloor = 1e-12;

enum class Provenance { zero_shot, prompted };

/// Which distribution is the first argument of the KL divergence.
enum class KlDirection {
  teacher_first,  // KL(p_zs || p)
  student_first,  // KL(p || p_zs)
};

/// Cosine similarities of one image feature against every class feature.
struct Logits {
  std::vector<double> scores;
  Provenance provenance = Provenance::prompted;
};

struct Prediction {
  std::vector<double> probs;
  std::vector<double> log_probs;  // from the log-space softmax, not log(probs)
  double temperature = 1.0;

  std::size_t size() const { return probs.size(); }
  std::size_t argmax() const;
  /// Wraps a raw distribution; log_probs are log(max(p, floor)).
  static Prediction from_probs(std::vector<double> probs);
};

// Value-level API, computed in double. Used by evaluation and the zero-shot teacher.

/// Z [C x d], f [d]. A zero-norm class row raises NumericError naming it.
Logits similarity(const Tensor& class_features, const Tensor& image_feature,
                  Provenance provenance = Provenance::prompted);
/// Softmax of scores / tau. tau <= 0 raises ConfigError.
Prediction predict(const Logits& logits, double tau);
double ce_loss(const Prediction& p, std::size_t label);
double kl_loss(const Prediction& p, const Prediction& p_zs,
               KlDirection direction = KlDirection::teacher_first);
double stage1_loss(const Prediction& p, std::size_t label, const Prediction& p_zs, double lambda,
                   KlDirection direction = KlDirection::teacher_first);
/// Same value as ce_loss; kept separate so logs name the stage.
double stage2_loss(const Prediction& p, std::size_t label);

// Graph-level losses over a batch. `scaled_logits` is [B x C] and already
// divided by tau; teacher rows are constants and receive no gradient.

/// image features [B x d], class features [C x d] -> cosine / tau, [B x C].
Tensor scaled_cosine_logits(Graph* g, const Tensor& image_features, const Tensor& class_features,
                            double tau);
/// Mean over the batch of -log_softmax(logits)[label], shape [1].
Tensor batch_ce(Graph* g, const Tensor& scaled_logits, std::span<const std::size_t> labels);
/// Mean over the batch of the per-row KL, shape [1].
Tensor batch_kl(Graph* g, const Tensor& scaled_logits, std::span<const Prediction* const> teacher,
                KlDirection direction);

struct LossTerms {
  Tensor total;
  Tensor ce;
  Tensor kl;  // undefined for the CE-only objective
};

/// ce + lambda * kl.
LossTerms batch_stage1_loss(Graph* g, const Tensor& scaled_logits,
                            std::span<const std::size_t> labels,
                            std::span<const Prediction* const> teacher, double lambda,
                            KlDirection direction);
LossTerms batch_stage2_loss(Graph* g, const Tensor& scaled_logits,
                            std::span<const std::size_t> labels);

const char* to_string(KlDirection d);

}  // namespace aple
