// SPDX-License-Identifier: Apache-2.0
#include "aple/pretrain.hpp"

#include <cmath>

#include "aple/clip_head.hpp"
#include "aple/error.hpp"
#include "aple/ops.hpp"
#include "aple/rng.hpp"

namespace aple {
namespace {

constexpr std::uint64_t kWarmupStream = 3;

// Adam with bias correction; moments kept in double.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
    for (const Tensor& t : params_) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& p = params_[k];
      if (!p.has_grad()) continue;
      auto x = p.mutable_data();
      auto g = p.grad();
      for (std::size_t i = 0; i < x.size(); ++i) {
        m_[k][i] = kBeta1 * m_[k][i] + (1.0 - kBeta1) * g[i];
        v_[k][i] = kBeta2 * v_[k][i] + (1.0 - kBeta2) * g[i] * g[i];
        const double upd = lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + kEps);
        x[i] = static_cast<float>(x[i] - upd);
      }
      p.clear_grad();
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_;
  std::size_t t_ = 0;
};

}  // namespace

EncoderWeights build_backbone(const ModelConfig& cfg, const DatasetSpec& spec,
                              const PretrainConfig& pcfg, std::vector<double>* losses) {
  cfg.validate();
  spec.validate();
  pcfg.validate();
  EncoderWeights w = EncoderWeights::init(cfg, pcfg.seed);
  if (!pcfg.enabled || pcfg.steps == 0) return w;

  const auto names = spec.class_names();
  const Vocabulary vocab = Vocabulary::for_classes(names);
  const ClassPromptSet classes = ClassPromptSet::build(vocab, names, cfg.max_text_len);
  const RenderStyle style{pcfg.noise_scale, pcfg.jitter_scale};

  w.set_trainable(true);
  Adam opt(w.tensors(), pcfg.learning_rate);
  Rng rng(derive_seed(pcfg.seed, {kWarmupStream}));
  for (std::size_t step = 0; step < pcfg.steps; ++step) {
    Graph g;
    std::vector<Tensor> rows;
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < pcfg.batch_size; ++b) {
      const std::size_t cls = rng.below(names.size());
      const ImageGrid img = render_image(spec, cls, kWarmupStream, step * pcfg.batch_size + b, style);
      rows.push_back(ops::reshape(&g, encode_image_prepared(&g, w, cfg, img, nullptr), {1, cfg.d_joint}));
      labels.push_back(cls);
    }
    const Tensor f = rows.size() == 1 ? rows[0] : ops::concat(&g, rows, 0);
    const Tensor z = encode_class_texts(&g, w, cfg, classes, nullptr);
    const Tensor loss = batch_ce(&g, scaled_cosine_logits(&g, f, z, cfg.temperature), labels);
    if (!std::isfinite(loss.item())) {
      throw DivergenceError("backbone warm-up diverged at step " + std::to_string(step));
    }
    if (losses) losses->push_back(loss.item());
    g.backward(loss);
    opt.step();
  }
  w.set_trainable(false);
  for (Tensor& t : w.tensors()) t.clear_grad();
  return w;
}

}  // namespace aple
