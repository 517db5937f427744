// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <filesystem>

#include "aple/audit.hpp"
#include "aple/dataset.hpp"
#include "aple/error.hpp"
#include "aple/pretrain.hpp"
#include "aple/rng.hpp"
#include "aple/trainer.hpp"

using namespace aple;
namespace fs = std::filesystem;

namespace {

// Two-class task on the desk model: small enough for quick training checks.
struct Toy {
  ModelConfig cfg = ModelConfig::desk();
  DatasetSpec spec = DatasetSpec::desk();
  EncoderWeights w = EncoderWeights::init(cfg, 21);
  ClassPromptSet classes;
  TrainSet data;
  AdapterConfig adapter;

  Toy() {
    const Vocabulary vocab = Vocabulary::for_classes(spec.class_names());
    const std::vector<std::string> names = {spec.classes[0].name, spec.classes[1].name};
    classes = ClassPromptSet::build(vocab, names, cfg.max_text_len);
    std::vector<ImageGrid> raw;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        raw.push_back(render_image(spec, c, 1, i));
        labels.push_back(c);
      }
    }
    data = TrainSet::build(std::move(raw), std::move(labels), &adapter);
  }
  TrainContext ctx() const { return {w, cfg, classes}; }
};

TrainConfig short_schedule() {
  TrainConfig t;
  t.epochs_stage1_lang = 2;
  t.epochs_stage1_vis = 2;
  t.epochs_stage2 = 1;
  t.batch_size = 3;
  return t;
}

}  // namespace

// ---------------------------------------------------------------- dataset

TEST(Dataset, DeterministicAndSeparable) {
  const DatasetSpec spec = DatasetSpec::desk();
  const Dataset a = generate_dataset(spec), b = generate_dataset(spec);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.train.size(), 16u * 4);
  EXPECT_EQ(a.eval.size(), 64u * 8);
  for (const Sample& s : a.train) EXPECT_LT(s.label, 4u);
  for (const Sample& s : a.eval) EXPECT_NO_THROW(s.image.validate());
  EXPECT_GT(nearest_centroid_accuracy(a), 0.60);
  DatasetSpec other = spec;
  other.seed = 7;
  EXPECT_NE(generate_dataset(other).fingerprint(), a.fingerprint());
}

TEST(Dataset, RenderStreamsAreIndependent) {
  const DatasetSpec spec = DatasetSpec::desk();
  const ImageGrid a = render_image(spec, 0, 1, 0), b = render_image(spec, 0, 2, 0);
  EXPECT_NE(a.pixels, b.pixels);
  EXPECT_EQ(a.pixels, render_image(spec, 0, 1, 0).pixels);
}

TEST(Dataset, SaveLoadRoundTrip) {
  DatasetSpec spec = DatasetSpec::desk();
  spec.shots = 2;
  spec.eval_per_class = 2;
  const Dataset ds = generate_dataset(spec);
  const fs::path dir = fs::temp_directory_path() / "aple-unit" / "dataset";
  fs::remove_all(dir);
  save_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.fingerprint(), ds.fingerprint());
}

TEST(Dataset, ValidationFindsPartitionErrors) {
  DatasetSpec spec = DatasetSpec::desk();
  spec.base = {0, 1, 2, 3, 4};  // 4 is also novel
  spec.novel = {4, 5, 6};        // 7 missing
  spec.image_side = 2;
  try {
    spec.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.issues().size(), 3u);
  }
}

// ---------------------------------------------------------------- trainer

TEST(Trainer, TeacherIsIndependentOfPrompts) {
  Toy t;
  const TeacherCache c = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  EXPECT_EQ(c.size(), t.data.size());
  const Prediction direct = zero_shot_predict(t.w, t.cfg, t.classes, t.data.raw[3]);
  EXPECT_EQ(direct.probs, c.at(3).probs);
  const TeacherCache fused = TeacherCache::build(t.ctx(), t.data, TeacherInput::fused_image);
  EXPECT_NE(fused.checksum(), c.checksum());
}

TEST(Trainer, PhasesTouchOnlyTheirSide) {
  Toy t;
  const TeacherCache teacher = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  const std::uint64_t backbone = t.w.checksum();
  const std::uint64_t teacher_sum = teacher.checksum();

  TrainConfig a = short_schedule();
  a.epochs_stage1_vis = 0;
  const StageResult ra = train_stage1(t.ctx(), init, t.data, teacher, a);
  EXPECT_EQ(ra.prompts.vision_checksum(), init.vision_checksum());
  EXPECT_NE(ra.prompts.text_checksum(), init.text_checksum());

  TrainConfig b = short_schedule();
  b.epochs_stage1_lang = 0;
  const StageResult rb = train_stage1(t.ctx(), ra.prompts, t.data, teacher, b);
  EXPECT_EQ(rb.prompts.text_checksum(), ra.prompts.text_checksum());
  EXPECT_NE(rb.prompts.vision_checksum(), ra.prompts.vision_checksum());

  // The input pack is never mutated and the frozen state never moves.
  EXPECT_EQ(init.text_checksum(), init_prompts(t.cfg, 2, 4, PromptInit::random_gauss).text_checksum());
  EXPECT_EQ(t.w.checksum(), backbone);
  EXPECT_EQ(teacher.checksum(), teacher_sum);
}

TEST(Trainer, LoggedTotalsDecompose) {
  Toy t;
  const TeacherCache teacher = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  std::vector<StepRecord> seen;
  const StepSink sink = [&](const StepRecord& r) { seen.push_back(r); };
  const TrainConfig tc = short_schedule();
  StageResult s1 = train_stage1(t.ctx(), init, t.data, teacher, tc, {}, sink);
  const StageResult s2 = train_stage2(t.ctx(), s1.prompts, t.data, tc, std::move(s1.state), sink);
  // 8 samples, batch 3 -> 3 steps per epoch.
  ASSERT_EQ(seen.size(), 3u * (2 + 2 + 1));
  EXPECT_EQ(s2.state.history.size(), seen.size());
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const StepRecord& r = seen[i];
    EXPECT_EQ(r.step, i);
    EXPECT_LE(std::abs(r.total - (r.ce + r.lambda * r.kl)), 1e-6);
    if (r.stage == "stage2") {
      EXPECT_EQ(r.kl, 0.0);
      EXPECT_EQ(r.phase, "joint");
    } else {
      EXPECT_EQ(r.lambda, r.phase == "language" ? tc.lambda_d : tc.lambda_g);
    }
  }
  EXPECT_EQ(seen.front().phase, "language");
  EXPECT_EQ(seen[6].phase, "vision");
  EXPECT_EQ(s2.state.stage, "stage2");
}

TEST(Trainer, VisionFirstOrderAndModes) {
  Toy t;
  const TeacherCache teacher = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  TrainConfig tc = short_schedule();
  tc.order = PhaseOrder::vision_first;
  std::vector<std::string> phases;
  train_stage1(t.ctx(), init, t.data, teacher, tc, {}, [&](const StepRecord& r) { phases.push_back(r.phase); });
  EXPECT_EQ(phases.front(), "vision");
  EXPECT_EQ(phases.back(), "language");

  tc = short_schedule();
  tc.mode = TrainMode::language_only;
  StageResult s1 = train_stage1(t.ctx(), init, t.data, teacher, tc);
  const StageResult s2 = train_stage2(t.ctx(), s1.prompts, t.data, tc);
  EXPECT_EQ(s2.prompts.vision_checksum(), init.vision_checksum());
  tc.mode = TrainMode::vision_only;
  s1 = train_stage1(t.ctx(), init, t.data, teacher, tc);
  EXPECT_EQ(train_stage2(t.ctx(), s1.prompts, t.data, tc).prompts.text_checksum(), init.text_checksum());
}

TEST(Trainer, ZeroEpochStageTwoIsNoOp) {
  Toy t;
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  TrainConfig tc = short_schedule();
  tc.epochs_stage2 = 0;
  const StageResult r = train_stage2(t.ctx(), init, t.data, tc);
  EXPECT_EQ(r.prompts.text_checksum(), init.text_checksum());
  EXPECT_EQ(r.prompts.vision_checksum(), init.vision_checksum());
}

TEST(Trainer, ScratchVisionPhaseUsesInitialLanguageTokens) {
  Toy t;
  const TeacherCache teacher = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  TrainConfig resume = short_schedule(), scratch = short_schedule();
  scratch.vision_phase_init = VisionPhaseInit::scratch;
  const StageResult a = train_stage1(t.ctx(), init, t.data, teacher, resume);
  const StageResult b = train_stage1(t.ctx(), init, t.data, teacher, scratch);
  // Same language result, different vision result.
  EXPECT_EQ(a.prompts.text_checksum(), b.prompts.text_checksum());
  EXPECT_NE(a.prompts.vision_checksum(), b.prompts.vision_checksum());
}

TEST(Trainer, RunsAreBitwiseReproducible) {
  Toy t;
  const TeacherCache teacher = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  const TrainConfig tc = short_schedule();
  const StageResult a = train_stage1(t.ctx(), init, t.data, teacher, tc);
  const StageResult b = train_stage1(t.ctx(), init, t.data, teacher, tc);
  EXPECT_EQ(a.prompts.text_checksum(), b.prompts.text_checksum());
  EXPECT_EQ(a.prompts.vision_checksum(), b.prompts.vision_checksum());
  EXPECT_EQ(a.state.to_json(), b.state.to_json());
  EXPECT_EQ(RunState::from_json(a.state.to_json()).to_json(), a.state.to_json());
}

TEST(Trainer, DivergenceIsReported) {
  Toy t;
  const TeacherCache teacher = TeacherCache::build(t.ctx(), t.data, TeacherInput::raw_image);
  const PromptPack init = init_prompts(t.cfg, 2, 4, PromptInit::random_gauss);
  PromptPack poisoned = init;
  poisoned.text = {};
  for (const Tensor& x : init.text) poisoned.text.push_back(x.clone());
  poisoned.text[0].mutable_data()[1] = std::numeric_limits<float>::quiet_NaN();
  const TrainConfig tc = short_schedule();
  EXPECT_THROW(train_stage1(t.ctx(), poisoned, t.data, teacher, tc), DivergenceError);
  // A finite but enormous step is absorbed by the layer norms.
  TrainConfig big = tc;
  big.learning_rate = 1e30;
  EXPECT_NO_THROW(train_stage1(t.ctx(), init, t.data, teacher, big));
}

TEST(Trainer, ConfigValidation) {
  TrainConfig tc;
  tc.lambda_d = -1;
  tc.batch_size = 0;
  tc.learning_rate = 0;
  try {
    tc.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.issues().size(), 3u);
  }
}

// Full stage-1 loss on a 2-class toy model against central differences.
// The toy runs at temperature 0.1, where the loss is strongly curved, so the
// difference quotient carries an O(eps^2) truncation error. A correct
// gradient shows exactly that: the error shrinks ninefold when eps shrinks
// threefold, until float32 rounding of the loss takes over near 1e-4.
TEST(Trainer, StageOneGradientsMatchFiniteDifferences) {
  GradAuditConfig c;
  c.classes = 2;
  c.images_per_class = 2;
  ModelConfig& m = c.model;
  m.d_lang = 8;
  m.d_vis = 8;
  m.d_joint = 8;
  m.n_layers = 2;
  m.n_heads = 2;
  m.patch_grid = 2;
  m.patch_size = 4;
  m.temperature = 0.1f;
  c.eps = 1e-2f;
  const GradAudit coarse = audit_stage1_gradients(c);
  c.eps = 1e-2f / 3;
  const GradAudit mid = audit_stage1_gradients(c);
  c.eps = 3e-4f;
  const GradAudit fine = audit_stage1_gradients(c);
  const GradCheckResult* sides[][3] = {{&coarse.language, &mid.language, &fine.language},
                                       {&coarse.vision, &mid.vision, &fine.vision}};
  for (const auto& s : sides) {
    const double ratio = s[0]->norm_rel_error / s[1]->norm_rel_error;
    EXPECT_GT(ratio, 7.0);
    EXPECT_LT(ratio, 11.0);
    EXPECT_LT(s[2]->norm_rel_error, 1e-3);
    EXPECT_LT(s[2]->max_abs_error, 1e-3) << "max rel error " << s[2]->max_rel_error;
  }
}

// ---------------------------------------------------------------- warm-up

TEST(Pretrain, WarmUpLowersLossAndFreezes) {
  ModelConfig cfg = ModelConfig::desk();
  PretrainConfig p;
  p.steps = 30;
  std::vector<double> losses;
  const EncoderWeights w = build_backbone(cfg, DatasetSpec::desk(), p, &losses);
  ASSERT_EQ(losses.size(), 30u);
  EXPECT_LT(losses.back(), losses.front());
  for (const Tensor& t : w.tensors()) EXPECT_FALSE(t.trainable());
  PretrainConfig off = p;
  off.enabled = false;
  EXPECT_EQ(build_backbone(cfg, DatasetSpec::desk(), off).checksum(), EncoderWeights::init(cfg, p.seed).checksum());
}
