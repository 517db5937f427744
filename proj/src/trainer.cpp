// SPDX-License-Identifier: Apache-2.0
#include "aple/trainer.hpp"

#include <cmath>
#include <numeric>
#include <limits>
#include <sstream>

#include "aple/checksum.hpp"
#include "aple/error.hpp"
#include "aple/ops.hpp"
#include "aple/rng.hpp"

namespace aple {
namespace {

enum class Phase { language, vision, joint };

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::language: return "language";
    case Phase::vision: return "vision";
    case Phase::joint: return "joint";
  }
  return "?";
}

// Features that stay constant for a whole phase are computed once, without a
// graph. Rows are bitwise identical to what a fresh forward would produce.
struct FrozenFeatures {
  Tensor images;   // [N x d_joint] or undefined
  Tensor classes;  // [C x d_joint] or undefined
};

Tensor all_image_features(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data) {
  const std::size_t d = ctx.model.d_joint;
  std::vector<float> out(data.size() * d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor f = encode_image_prepared(nullptr, ctx.weights, ctx.model, data.fused[i], &prompts);
    std::copy(f.data().begin(), f.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor({data.size(), d}, std::move(out));
}

Tensor gather_rows(const Tensor& all, std::span<const std::size_t> rows) {
  const std::size_t d = all.dim(1);
  std::vector<float> out(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(all.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return Tensor({rows.size(), d}, std::move(out));
}

Tensor logits_for(Graph* g, const TrainContext& ctx, const PromptPack& prompts,
                  const TrainSet& data, std::span<const std::size_t> batch,
                  const FrozenFeatures& frozen) {
  if (batch.empty()) throw UsageError("empty batch");
  const Tensor z = frozen.classes.defined()
                       ? frozen.classes
                       : encode_class_texts(g, ctx.weights, ctx.model, ctx.classes, &prompts);
  Tensor f;
  if (frozen.images.defined()) {
    f = gather_rows(frozen.images, batch);
  } else {
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (std::size_t i : batch) {
      if (i >= data.size()) throw UsageError("batch index out of range");
      const Tensor feat = encode_image_prepared(g, ctx.weights, ctx.model, data.fused[i], &prompts);
      rows.push_back(ops::reshape(g, feat, {1, ctx.model.d_joint}));
    }
    f = rows.size() == 1 ? rows[0] : ops::concat(g, rows, 0);
  }
  return scaled_cosine_logits(g, f, z, ctx.model.temperature);
}

std::vector<std::size_t> labels_of(const TrainSet& data, std::span<const std::size_t> batch) {
  std::vector<std::size_t> out;
  out.reserve(batch.size());
  for (std::size_t i : batch) out.push_back(data.labels.at(i));
  return out;
}

std::vector<const Prediction*> teacher_of(const TeacherCache& t, std::span<const std::size_t> batch) {
  std::vector<const Prediction*> out;
  out.reserve(batch.size());
  for (std::size_t i : batch) out.push_back(&t.at(i));
  return out;
}

double tensor_norm(std::span<const Tensor> ts) {
  double s = 0.0;
  for (const Tensor& t : ts) {
    for (float v : t.data()) s += static_cast<double>(v) * v;
  }
  return std::sqrt(s);
}

[[noreturn]] void diverged(const StepRecord& r, const PromptPack& p, const char* cause = nullptr) {
  std::ostringstream os;
  os.precision(9);
  if (cause) os << cause << "; ";
  os << "non-finite loss at " << r.stage << "/" << r.phase << " step " << r.step << ": ce=" << r.ce
     << " kl=" << r.kl << " lambda=" << r.lambda << " total=" << r.total
     << " |D|=" << tensor_norm(p.text) << " |G|=" << tensor_norm(p.vision);
  throw DivergenceError(os.str());
}

void sgd_step(std::vector<Tensor>& params, double lr) {
  const float step = static_cast<float>(lr);
  for (Tensor& t : params) {
    if (!t.has_grad()) continue;
    auto v = t.mutable_data();
    auto g = t.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
    t.clear_grad();
  }
}

// One epoch order per (seed, stage, phase, epoch), Fisher-Yates on our own Rng.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t stage, Phase phase,
                                     std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {stage, static_cast<std::uint64_t>(phase), epoch}));
  rng.shuffle(order);
  return order;
}

struct PhaseSpec {
  Phase phase;
  std::string stage;
  std::uint64_t stage_tag;
  std::size_t epochs;
  double lambda;  // < 0 means CE only
};

// Runs one phase in place on `p`; only `trainable` tensors move.
void run_phase(const TrainContext& ctx, PromptPack& p, std::vector<Tensor> trainable,
               const TrainSet& data, const TeacherCache* teacher, const TrainConfig& tcfg,
               const PhaseSpec& spec, const FrozenFeatures& frozen, RunState& state,
               const StepSink& sink) {
  state.stage = spec.stage;
  state.phase = phase_name(spec.phase);
  const std::size_t n = data.size();
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto order = epoch_order(tcfg.seed, spec.stage_tag, spec.phase, epoch, n);
    for (std::size_t start = 0; start < n; start += tcfg.batch_size) {
      const std::size_t len = std::min(tcfg.batch_size, n - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      StepRecord rec;
      rec.stage = spec.stage;
      rec.phase = phase_name(spec.phase);
      rec.step = state.step;
      rec.lambda = spec.lambda >= 0.0 ? spec.lambda : 0.0;
      Graph g;
      LossTerms terms;
      try {
        const Tensor logits = logits_for(&g, ctx, p, data, batch, frozen);
        const auto labels = labels_of(data, batch);
        if (spec.lambda >= 0.0) {
          const auto t = teacher_of(*teacher, batch);
          terms = batch_stage1_loss(&g, logits, labels, t, spec.lambda, tcfg.kl_direction);
        } else {
          terms = batch_stage2_loss(&g, logits, labels);
        }
      } catch (const NumericError& e) {
        // Non-finite prompts surface inside an op before any loss exists.
        rec.ce = rec.kl = rec.total = std::numeric_limits<double>::quiet_NaN();
        diverged(rec, p, e.what());
      }
      rec.ce = terms.ce.item();
      rec.kl = terms.kl.defined() ? terms.kl.item() : 0.0;
      rec.total = terms.total.item();
      if (!std::isfinite(rec.total)) diverged(rec, p);
      g.backward(terms.total);
      sgd_step(trainable, tcfg.learning_rate);
      state.history.push_back(rec);
      ++state.step;
      if (sink) sink(rec);
    }
  }
}

void require_ready(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data) {
  if (data.size() == 0) throw UsageError("training set is empty");
  if (data.fused.size() != data.size() || data.raw.size() != data.size()) {
    throw UsageError("training set images and labels differ in count");
  }
  for (std::size_t y : data.labels) {
    if (y >= ctx.classes.size()) throw UsageError("training label out of range for the class set");
  }
  prompts.check(ctx.model);
}

// Detached copy of `src` whose tensors are all frozen.
PromptPack frozen_copy(const PromptPack& src) {
  PromptPack p = src.clone();
  p.set_text_trainable(false);
  p.set_vision_trainable(false);
  return p;
}

}  // namespace

nlohmann::json StepRecord::to_json() const {
  return {{"stage", stage}, {"phase", phase}, {"step", step},    {"ce", ce},
          {"kl", kl},       {"lambda", lambda}, {"total", total}};
}

nlohmann::json RunState::to_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& r : history) h.push_back(r.to_json());
  return {{"stage", stage}, {"phase", phase}, {"step", step}, {"history", h},
          {"checkpoints", checkpoints}};
}

RunState RunState::from_json(const nlohmann::json& j) {
  RunState s;
  try {
    s.stage = j.at("stage").get<std::string>();
    s.phase = j.at("phase").get<std::string>();
    s.step = j.at("step").get<std::size_t>();
    for (const auto& r : j.at("history")) {
      StepRecord rec;
      rec.stage = r.at("stage").get<std::string>();
      rec.phase = r.at("phase").get<std::string>();
      rec.step = r.at("step").get<std::size_t>();
      rec.ce = r.at("ce").get<double>();
      rec.kl = r.at("kl").get<double>();
      rec.lambda = r.at("lambda").get<double>();
      rec.total = r.at("total").get<double>();
      s.history.push_back(std::move(rec));
    }
    s.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("run state: ") + e.what());
  }
  if (s.history.size() != s.step) throw IoError("run state: history length differs from step count");
  return s;
}

TrainSet TrainSet::build(std::vector<ImageGrid> raw, std::vector<std::size_t> labels,
                         const AdapterConfig* adapter) {
  if (raw.size() != labels.size()) throw UsageError("TrainSet: image and label counts differ");
  TrainSet s;
  s.fused.reserve(raw.size());
  for (const ImageGrid& img : raw) s.fused.push_back(adapter ? adapt(img, *adapter) : img);
  s.raw = std::move(raw);
  s.labels = std::move(labels);
  return s;
}

Prediction zero_shot_predict(const EncoderWeights& w, const ModelConfig& cfg,
                             const ClassPromptSet& classes, const ImageGrid& img) {
  const Tensor z = encode_class_texts(nullptr, w, cfg, classes, nullptr);
  const Tensor f = encode_image_prepared(nullptr, w, cfg, img, nullptr);
  return predict(similarity(z, f, Provenance::zero_shot), cfg.temperature);
}

TeacherCache TeacherCache::build(const TrainContext& ctx, const TrainSet& data, TeacherInput input) {
  TeacherCache cache;
  const Tensor z = encode_class_texts(nullptr, ctx.weights, ctx.model, ctx.classes, nullptr);
  cache.preds_.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ImageGrid& img = input == TeacherInput::raw_image ? data.raw[i] : data.fused[i];
    const Tensor f = encode_image_prepared(nullptr, ctx.weights, ctx.model, img, nullptr);
    cache.preds_.push_back(predict(similarity(z, f, Provenance::zero_shot), ctx.model.temperature));
  }
  return cache;
}

std::uint64_t TeacherCache::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Prediction& p : preds_) {
    h = fnv1a64(std::as_bytes(std::span<const double>(p.probs)), h);
  }
  return h;
}

Tensor batch_logits(Graph* g, const TrainContext& ctx, const PromptPack& prompts,
                    const TrainSet& data, std::span<const std::size_t> batch) {
  return logits_for(g, ctx, prompts, data, batch, {});
}

LossTerms stage1_batch_loss(Graph* g, const TrainContext& ctx, const PromptPack& prompts,
                            const TrainSet& data, const TeacherCache& teacher,
                            std::span<const std::size_t> batch, const TrainConfig& tcfg,
                            bool language) {
  const Tensor logits = batch_logits(g, ctx, prompts, data, batch);
  const auto labels = labels_of(data, batch);
  const auto t = teacher_of(teacher, batch);
  return batch_stage1_loss(g, logits, labels, t, language ? tcfg.lambda_d : tcfg.lambda_g,
                           tcfg.kl_direction);
}

double mean_teacher_kl(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data,
                       const TeacherCache& teacher) {
  const PromptPack p = frozen_copy(prompts);
  const Tensor z = encode_class_texts(nullptr, ctx.weights, ctx.model, ctx.classes, &p);
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor f = encode_image_prepared(nullptr, ctx.weights, ctx.model, data.fused[i], &p);
    const Prediction student = predict(similarity(z, f), ctx.model.temperature);
    sum += kl_loss(student, teacher.at(i), KlDirection::teacher_first);
  }
  return sum / static_cast<double>(data.size());
}

StageResult train_stage1(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data,
                         const TeacherCache& teacher, const TrainConfig& tcfg, RunState state,
                         const StepSink& sink) {
  tcfg.validate();
  require_ready(ctx, prompts, data);
  if (teacher.size() != data.size()) throw UsageError("teacher cache does not cover the training set");
  PromptPack p = frozen_copy(prompts);
  const PromptPack initial = frozen_copy(prompts);

  std::vector<Phase> phases;
  if (tcfg.order == PhaseOrder::language_first) {
    phases = {Phase::language, Phase::vision};
  } else {
    phases = {Phase::vision, Phase::language};
  }
  for (Phase phase : phases) {
    if (p.empty()) break;
    if (phase == Phase::language && !tcfg.trains_language()) continue;
    if (phase == Phase::vision && !tcfg.trains_vision()) continue;
    FrozenFeatures frozen;
    std::vector<Tensor> trainable;
    PhaseSpec spec{phase, "stage1", 1, 0, 0.0};
    if (phase == Phase::language) {
      p.set_text_trainable(true);
      trainable = p.text;
      frozen.images = all_image_features(ctx, p, data);
      spec.epochs = tcfg.epochs_stage1_lang;
      spec.lambda = tcfg.lambda_d;
      run_phase(ctx, p, trainable, data, &teacher, tcfg, spec, frozen, state, sink);
      p.set_text_trainable(false);
    } else {
      // Under scratch the vision phase sees the initial language tokens.
      const PromptPack& text_side =
          tcfg.vision_phase_init == VisionPhaseInit::scratch ? initial : p;
      frozen.classes = encode_class_texts(nullptr, ctx.weights, ctx.model, ctx.classes, &text_side);
      p.set_vision_trainable(true);
      trainable = p.vision;
      spec.epochs = tcfg.epochs_stage1_vis;
      spec.lambda = tcfg.lambda_g;
      run_phase(ctx, p, trainable, data, &teacher, tcfg, spec, frozen, state, sink);
      p.set_vision_trainable(false);
    }
  }
  state.stage = "stage1";
  state.phase = "done";
  p.set_text_trainable(true);
  p.set_vision_trainable(true);
  return {std::move(p), std::move(state)};
}

StageResult train_stage2(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data,
                         const TrainConfig& tcfg, RunState state, const StepSink& sink) {
  tcfg.validate();
  require_ready(ctx, prompts, data);
  PromptPack p = frozen_copy(prompts);
  if (!p.empty() && tcfg.epochs_stage2 > 0) {
    FrozenFeatures frozen;
    std::vector<Tensor> trainable;
    if (tcfg.trains_language()) {
      p.set_text_trainable(true);
      trainable.insert(trainable.end(), p.text.begin(), p.text.end());
    } else {
      frozen.classes = encode_class_texts(nullptr, ctx.weights, ctx.model, ctx.classes, &p);
    }
    if (tcfg.trains_vision()) {
      p.set_vision_trainable(true);
      trainable.insert(trainable.end(), p.vision.begin(), p.vision.end());
    } else {
      frozen.images = all_image_features(ctx, p, data);
    }
    const PhaseSpec spec{Phase::joint, "stage2", 2, tcfg.epochs_stage2, -1.0};
    run_phase(ctx, p, trainable, data, nullptr, tcfg, spec, frozen, state, sink);
  }
  state.stage = "stage2";
  state.phase = "done";
  p.set_text_trainable(true);
  p.set_vision_trainable(true);
  return {std::move(p), std::move(state)};
}

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::both: return "both";
    case TrainMode::language_only: return "language_only";
    case TrainMode::vision_only: return "vision_only";
  }
  return "?";
}

const char* to_string(PhaseOrder o) {
  return o == PhaseOrder::language_first ? "language_first" : "vision_first";
}

const char* to_string(TeacherInput t) {
  return t == TeacherInput::raw_image ? "raw_image" : "fused_image";
}

const char* to_string(VisionPhaseInit v) {
  return v == VisionPhaseInit::resume ? "resume" : "scratch";
}

}  // namespace aple
