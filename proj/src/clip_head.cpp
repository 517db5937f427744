// SPDX-License-Identifier: Apache-2.0
#include "aple/clip_head.hpp"

#include <algorithm>
#include <cmath>

#include "aple/error.hpp"
#include "aple/ops.hpp"

namespace aple {
namespace {

double row_norm(std::span<const float> row) {
  double s = 0.0;
  for (float v : row) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

void require_labels(std::span<const std::size_t> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw DimensionError("batch has " + std::to_string(batch) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (std::size_t y : labels) {
    if (y >= classes) {
      throw UsageError("label " + std::to_string(y) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
}

}  // namespace

std::size_t Prediction::argmax() const {
  if (probs.empty()) throw UsageError("argmax of an empty prediction");
  // log_probs keep their order where probs underflow to equal values.
  const auto& v = log_probs.size() == probs.size() ? log_probs : probs;
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Prediction Prediction::from_probs(std::vector<double> probs) {
  Prediction p;
  p.log_probs.reserve(probs.size());
  for (double v : probs) p.log_probs.push_back(std::log(std::max(v, kProbFloor)));
  p.probs = std::move(probs);
  return p;
}

Logits similarity(const Tensor& class_features, const Tensor& image_feature,
                  Provenance provenance) {
  if (class_features.rank() != 2) {
    throw DimensionError("similarity: class features must be [C x d], got " +
                         shape_str(class_features.shape()));
  }
  const std::size_t C = class_features.dim(0), d = class_features.dim(1);
  if (image_feature.numel() != d) {
    throw DimensionError("similarity: image feature " + shape_str(image_feature.shape()) +
                         " does not match class features " + shape_str(class_features.shape()));
  }
  const auto f = image_feature.data();
  const double fn = row_norm(f);
  if (fn == 0.0) throw NumericError("similarity: image feature has zero norm");
  const auto z = class_features.data();
  Logits out;
  out.provenance = provenance;
  out.scores.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto row = z.subspan(c * d, d);
    const double zn = row_norm(row);
    if (zn == 0.0) throw NumericError("similarity: class " + std::to_string(c) + " has zero norm");
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(row[j]) * f[j];
    out.scores[c] = std::clamp(dot / (zn * fn), -1.0, 1.0);
  }
  return out;
}

Prediction predict(const Logits& logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0, got " + std::to_string(tau));
  if (logits.scores.empty()) throw UsageError("predict: no classes");
  const std::size_t C = logits.scores.size();
  std::vector<double> z(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (!std::isfinite(logits.scores[c])) throw NumericError("predict: non-finite logit");
    z[c] = logits.scores[c] / tau;
  }
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  Prediction p;
  p.temperature = tau;
  p.probs.resize(C);
  p.log_probs.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    p.log_probs[c] = z[c] - lse;
    p.probs[c] = std::exp(p.log_probs[c]);
  }
  return p;
}

double ce_loss(const Prediction& p, std::size_t label) {
  if (label >= p.size()) {
    throw UsageError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(p.size()) + " classes");
  }
  return -p.log_probs[label];
}

double kl_loss(const Prediction& p, const Prediction& p_zs, KlDirection direction) {
  if (p.size() != p_zs.size()) {
    throw DimensionError("kl_loss: " + std::to_string(p.size()) + " vs " +
                         std::to_string(p_zs.size()) + " classes");
  }
  double kl = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double log_t = std::log(std::max(p_zs.probs[c], kProbFloor));
    if (direction == KlDirection::teacher_first) {
      if (p_zs.probs[c] > 0.0) kl += p_zs.probs[c] * (log_t - p.log_probs[c]);
    } else {
      if (p.probs[c] > 0.0) kl += p.probs[c] * (p.log_probs[c] - log_t);
    }
  }
  return kl;
}

double stage1_loss(const Prediction& p, std::size_t label, const Prediction& p_zs, double lambda,
                   KlDirection direction) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  return ce_loss(p, label) + lambda * kl_loss(p, p_zs, direction);
}

double stage2_loss(const Prediction& p, std::size_t label) { return ce_loss(p, label); }

Tensor scaled_cosine_logits(Graph* g, const Tensor& image_features, const Tensor& class_features,
                            double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
  const Tensor f = ops::normalize_rows(g, image_features);
  const Tensor z = ops::normalize_rows(g, class_features);
  return ops::scale(g, ops::matmul(g, f, ops::transpose(g, z)), static_cast<float>(1.0 / tau));
}

Tensor batch_ce(Graph* g, const Tensor& scaled_logits, std::span<const std::size_t> labels) {
  const std::size_t B = scaled_logits.dim(0), C = scaled_logits.dim(1);
  require_labels(labels, B, C);
  std::vector<float> onehot(B * C, 0.0f);
  for (std::size_t b = 0; b < B; ++b) onehot[b * C + labels[b]] = 1.0f;
  const Tensor ls = ops::log_softmax(g, scaled_logits, 1);
  const Tensor picked = ops::mul(g, Tensor({B, C}, std::move(onehot)), ls);
  return ops::scale(g, ops::sum(g, picked), -1.0f / static_cast<float>(B));
}

Tensor batch_kl(Graph* g, const Tensor& scaled_logits, std::span<const Prediction* const> teacher,
                KlDirection direction) {
  const std::size_t B = scaled_logits.dim(0), C = scaled_logits.dim(1);
  if (teacher.size() != B) {
    throw DimensionError("batch has " + std::to_string(B) + " rows but " +
                         std::to_string(teacher.size()) + " teacher predictions");
  }
  std::vector<float> t(B * C), log_t(B * C);
  for (std::size_t b = 0; b < B; ++b) {
    if (teacher[b]->size() != C) {
      throw DimensionError("teacher prediction has " + std::to_string(teacher[b]->size()) +
                           " classes, logits have " + std::to_string(C));
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double p = teacher[b]->probs[c];
      t[b * C + c] = static_cast<float>(p);
      log_t[b * C + c] = static_cast<float>(std::log(std::max(p, kProbFloor)));
    }
  }
  const Tensor T({B, C}, std::move(t));
  const Tensor logT({B, C}, std::move(log_t));
  const Tensor ls = ops::log_softmax(g, scaled_logits, 1);
  Tensor terms;
  if (direction == KlDirection::teacher_first) {
    terms = ops::mul(g, T, ops::sub(g, logT, ls));
  } else {
    terms = ops::mul(g, ops::exp(g, ls), ops::sub(g, ls, logT));
  }
  return ops::scale(g, ops::sum(g, terms), 1.0f / static_cast<float>(B));
}

LossTerms batch_stage1_loss(Graph* g, const Tensor& scaled_logits,
                            std::span<const std::size_t> labels,
                            std::span<const Prediction* const> teacher, double lambda,
                            KlDirection direction) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  LossTerms out;
  out.ce = batch_ce(g, scaled_logits, labels);
  out.kl = batch_kl(g, scaled_logits, teacher, direction);
  out.total = ops::add(g, out.ce, ops::scale(g, out.kl, static_cast<float>(lambda)));
  return out;
}

LossTerms batch_stage2_loss(Graph* g, const Tensor& scaled_logits,
                            std::span<const std::size_t> labels) {
  LossTerms out;
  out.ce = batch_ce(g, scaled_logits, labels);
  out.total = out.ce;
  return out;
}

const char* to_string(KlDirection d) {
  return d == KlDirection::teacher_first ? "teacher_first" : "student_first";
}

}  // namespace aple
