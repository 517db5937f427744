// SPDX-License-Identifier: Apache-2.0
#include "aple/audit.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "aple/clip_head.hpp"
#include "aple/dataset.hpp"
#include "aple/error.hpp"
#include "aple/eval.hpp"
#include "aple/image_adapter.hpp"
#include "aple/rng.hpp"
#include "aple/trainer.hpp"

namespace aple {
namespace {

constexpr std::uint64_t kAuditStream = 9;

struct AuditSetup {
  DatasetSpec spec;
  EncoderWeights weights;
  ClassPromptSet classes;
  TrainSet data;
};

AuditSetup make_setup(const ModelConfig& model, std::size_t n_classes, std::size_t per_class,
                      std::uint64_t seed) {
  AuditSetup s;
  s.spec = DatasetSpec::desk();
  s.spec.image_side = model.image_side();
  s.spec.channels = model.channels;
  if (n_classes < 2 || n_classes > s.spec.classes.size()) {
    throw UsageError("audit: class count must lie in [2, " + std::to_string(s.spec.classes.size()) + "]");
  }
  s.weights = EncoderWeights::init(model, seed);
  const Vocabulary vocab = Vocabulary::for_classes(s.spec.class_names());
  std::vector<std::string> names;
  std::vector<ImageGrid> raw;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < n_classes; ++c) {
    names.push_back(s.spec.classes[c].name);
    for (std::size_t i = 0; i < per_class; ++i) {
      raw.push_back(render_image(s.spec, c, kAuditStream, i));
      labels.push_back(c);
    }
  }
  s.classes = ClassPromptSet::build(vocab, names, model.max_text_len);
  const AdapterConfig adapter;
  s.data = TrainSet::build(std::move(raw), std::move(labels), &adapter);
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

CheckOutcome check(std::string name, const std::function<std::string()>& body) {
  CheckOutcome out{std::move(name), false, ""};
  try {
    out.detail = body();
    out.passed = out.detail.rfind("FAIL", 0) != 0;
  } catch (const std::exception& e) {
    out.detail = std::string("FAIL exception: ") + e.what();
  }
  return out;
}

}  // namespace

GradAudit audit_stage1_gradients(const GradAuditConfig& cfg) {
  cfg.model.validate();
  AuditSetup s = make_setup(cfg.model, cfg.classes, cfg.images_per_class, cfg.seed);
  const TrainContext ctx{s.weights, cfg.model, s.classes};
  const TeacherCache teacher = TeacherCache::build(ctx, s.data, TeacherInput::raw_image);
  PromptPack prompts = init_prompts(cfg.model, cfg.prompt_length, derive_seed(cfg.seed, {1}),
                                    PromptInit::random_gauss);
  TrainConfig tcfg;
  tcfg.lambda_d = cfg.lambda_d;
  tcfg.lambda_g = cfg.lambda_g;
  std::vector<std::size_t> batch(s.data.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});

  auto phase = [&](bool language) {
    prompts.set_text_trainable(language);
    prompts.set_vision_trainable(!language);
    const LossFn f = [&](Graph* g) {
      return stage1_batch_loss(g, ctx, prompts, s.data, teacher, batch, tcfg, language).total;
    };
    std::vector<Tensor>& params = language ? prompts.text : prompts.vision;
    return grad_check(f, params, cfg.eps);
  };
  GradAudit out;
  out.language = phase(true);
  out.vision = phase(false);
  prompts.set_text_trainable(true);
  prompts.set_vision_trainable(true);
  return out;
}

std::vector<CheckOutcome> run_selftest(const std::function<void(const CheckOutcome&)>& report) {
  std::vector<CheckOutcome> results;
  auto add = [&](CheckOutcome c) {
    if (report) report(c);
    results.push_back(std::move(c));
  };

  add(check("harmonic mean reproduces reference rows", [] {
    const double rows[][3] = {{69.34, 74.22, 71.70}, {82.69, 63.22, 71.66}, {80.47, 71.69, 75.83},
                              {82.28, 75.14, 78.55}, {81.99, 75.11, 78.40}};
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(harmonic_mean(r[0], r[1]) - r[2]));
    return std::string(worst <= 0.005 ? "" : "FAIL ") + "max |diff| " + fmt(worst);
  }));

  add(check("aggregate mean and population std", [] {
    const double v[] = {82.33, 81.60, 82.27, 82.05, 81.94, 82.62};
    const Aggregate a = aggregate(v);
    const bool ok = std::abs(a.mean - 82.14) <= 0.005 && a.n == 6;
    return std::string(ok ? "" : "FAIL ") + "mean " + fmt(a.mean) + " std " + fmt(a.std);
  }));

  add(check("adapter identities", [] {
    Rng rng(3);
    ImageGrid img = ImageGrid::zeros(16, 16, 3);
    for (float& p : img.pixels) p = static_cast<float>(rng.uniform());
    AdapterConfig keep;
    keep.alpha = 1.0;
    double worst = 0.0;
    const ImageGrid same = adapt(img, keep);
    const ImageGrid round = ifft2(fft2(img));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(same.pixels[i] - img.pixels[i])));
      worst = std::max(worst, static_cast<double>(std::abs(round.pixels[i] - img.pixels[i])));
    }
    AdapterConfig literal;
    literal.normalize_peak = false;
    const double g_lit = gaussian_gain_at(0.0, 0.0, literal);
    const double g_norm = gaussian_gain_at(0.0, 0.0, AdapterConfig{});
    const bool ok = worst < 1e-6 && std::abs(g_lit - 63.662) <= 0.001 && g_norm == 1.0;
    return std::string(ok ? "" : "FAIL ") + "max |diff| " + fmt(worst) + ", literal peak " + fmt(g_lit);
  }));

  add(check("loss identities", [] {
    Rng rng(4);
    double worst_self = 0.0, most_negative = 0.0;
    for (int t = 0; t < 200; ++t) {
      Logits a, b;
      for (int c = 0; c < 5; ++c) {
        a.scores.push_back(2 * rng.uniform() - 1);
        b.scores.push_back(2 * rng.uniform() - 1);
      }
      const Prediction p = predict(a, 0.1), q = predict(b, 0.1);
      worst_self = std::max(worst_self, std::abs(kl_loss(p, p)));
      most_negative = std::min(most_negative, kl_loss(p, q));
      if (stage1_loss(p, 1, q, 0.0) != ce_loss(p, 1)) return std::string("FAIL lambda=0 differs from CE");
    }
    const bool ok = worst_self <= 1e-9 && most_negative >= -1e-9;
    return std::string(ok ? "" : "FAIL ") + "max |KL(p,p)| " + fmt(worst_self) + ", min KL " +
           fmt(most_negative);
  }));

  add(check("stage-1 gradient audit", [] {
    const GradAudit a = audit_stage1_gradients({});
    const double worst = std::max(a.language.max_rel_error, a.vision.max_rel_error);
    return std::string(worst < 1e-3 ? "" : "FAIL ") + "language " + fmt(a.language.max_rel_error) +
           ", vision " + fmt(a.vision.max_rel_error) + " (norm-wise " + fmt(a.language.norm_rel_error) +
           ", " + fmt(a.vision.norm_rel_error) + ")";
  }));

  add(check("frozen backbone and sequential phases", [] {
    const ModelConfig model = ModelConfig::desk();
    AuditSetup s = make_setup(model, 4, 2, 8);
    const TrainContext ctx{s.weights, model, s.classes};
    const TeacherCache teacher = TeacherCache::build(ctx, s.data, TeacherInput::raw_image);
    const PromptPack init = init_prompts(model, 2, 8, PromptInit::random_gauss);
    const std::uint64_t backbone = s.weights.checksum();
    TrainConfig tcfg;
    tcfg.epochs_stage1_lang = 1;
    tcfg.epochs_stage1_vis = 0;
    tcfg.epochs_stage2 = 1;
    const StageResult a = train_stage1(ctx, init, s.data, teacher, tcfg);
    const bool g_frozen = a.prompts.vision_checksum() == init.vision_checksum();
    tcfg.epochs_stage1_lang = 0;
    tcfg.epochs_stage1_vis = 1;
    const StageResult b = train_stage1(ctx, a.prompts, s.data, teacher, tcfg);
    const bool d_frozen = b.prompts.text_checksum() == a.prompts.text_checksum();
    const StageResult c = train_stage2(ctx, b.prompts, s.data, tcfg);
    const bool moved = c.prompts.text_checksum() != b.prompts.text_checksum();
    const bool ok = g_frozen && d_frozen && moved && s.weights.checksum() == backbone;
    return std::string(ok ? "" : "FAIL ") + "G frozen in language phase " + (g_frozen ? "yes" : "no") +
           ", D frozen in vision phase " + (d_frozen ? "yes" : "no");
  }));

  return results;
}

}  // namespace aple
