// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aple/clip_head.hpp"
#include "aple/encoders.hpp"
#include "aple/image.hpp"
#include "aple/image_adapter.hpp"
#include "aple/tokenizer.hpp"

namespace aple {

enum class TrainMode { both, language_only, vision_only };
enum class PhaseOrder { language_first, vision_first };
enum class TeacherInput { raw_image, fused_image };
/// Whether the stage-1 vision phase sees the language tokens learned in the
/// language phase (resume) or their initial values (scratch).
enum class VisionPhaseInit { resume, scratch };

struct TrainConfig {
  TrainMode mode = TrainMode::both;
  double lambda_d = 0.5;
  double lambda_g = 0.3;
  double learning_rate = 0.05;
  std::size_t epochs_stage1_lang = 20;
  std::size_t epochs_stage1_vis = 20;
  std::size_t epochs_stage2 = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  PhaseOrder order = PhaseOrder::language_first;
  TeacherInput teacher_input = TeacherInput::raw_image;
  KlDirection kl_direction = KlDirection::teacher_first;
  VisionPhaseInit vision_phase_init = VisionPhaseInit::resume;
  std::size_t shots = 16;

  void validate() const;
  bool trains_language() const { return mode != TrainMode::vision_only; }
  bool trains_vision() const { return mode != TrainMode::language_only; }
};

/// One optimization step. kl is 0 in stage 2, where total == ce.
struct StepRecord {
  std::string stage;  // "stage1" | "stage2"
  std::string phase;  // "language" | "vision" | "joint"
  std::size_t step = 0;
  double ce = 0.0;
  double kl = 0.0;
  double lambda = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

struct RunState {
  std::string stage = "init";
  std::string phase = "none";
  std::size_t step = 0;
  std::vector<StepRecord> history;
  std::vector<std::string> checkpoints;

  nlohmann::json to_json() const;
  static RunState from_json(const nlohmann::json& j);
};

/// Called after every optimization step (for JSON-lines logging).
using StepSink = std::function<void(const StepRecord&)>;

/// Training images with labels local to the class set being trained.
/// `raw` feeds the teacher, `fused` (adapter output, or raw when the adapter
/// is off) feeds the student.
struct TrainSet {
  std::vector<ImageGrid> raw;
  std::vector<ImageGrid> fused;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  static TrainSet build(std::vector<ImageGrid> raw, std::vector<std::size_t> labels,
                        const AdapterConfig* adapter);
};

/// Frozen state shared by every training step.
struct TrainContext {
  const EncoderWeights& weights;
  const ModelConfig& model;
  const ClassPromptSet& classes;
};

/// Zero-shot prediction over `classes`: hand-crafted prompts, no learnable
/// tokens, no adapter.
Prediction zero_shot_predict(const EncoderWeights& w, const ModelConfig& cfg,
                             const ClassPromptSet& classes, const ImageGrid& img);

/// p^zs for every training image, computed once. The teacher never changes
/// during training, so lookups return the cached value.
class TeacherCache {
 public:
  TeacherCache() = default;
  static TeacherCache build(const TrainContext& ctx, const TrainSet& data, TeacherInput input);

  const Prediction& at(std::size_t i) const { return preds_.at(i); }
  std::size_t size() const { return preds_.size(); }
  std::uint64_t checksum() const;

 private:
  std::vector<Prediction> preds_;
};

struct StageResult {
  PromptPack prompts;
  RunState state;
};

/// Stage 1: language phase (D trainable, CE + lambda_d KL) and vision phase
/// (G trainable, CE + lambda_g KL) in `tcfg.order`, skipping any phase the
/// mode excludes. Throws DivergenceError on a non-finite loss.
StageResult train_stage1(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data,
                         const TeacherCache& teacher, const TrainConfig& tcfg,
                         RunState state = {}, const StepSink& sink = {});

/// Stage 2: every prompt tensor the mode allows trains jointly on CE alone.
StageResult train_stage2(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data,
                         const TrainConfig& tcfg, RunState state = {}, const StepSink& sink = {});

/// Scaled logits [B x C] for the samples in `batch` (graph-recorded when
/// the prompts are trainable). Exposed for gradient audits.
Tensor batch_logits(Graph* g, const TrainContext& ctx, const PromptPack& prompts,
                    const TrainSet& data, std::span<const std::size_t> batch);

/// Stage-1 loss of one phase over `batch`, recorded on `g`. `language`
/// selects lambda_d vs lambda_g.
LossTerms stage1_batch_loss(Graph* g, const TrainContext& ctx, const PromptPack& prompts,
                            const TrainSet& data, const TeacherCache& teacher,
                            std::span<const std::size_t> batch, const TrainConfig& tcfg,
                            bool language);

/// Mean KL(p_zs || p) over the whole training set (teacher-first, detached).
double mean_teacher_kl(const TrainContext& ctx, const PromptPack& prompts, const TrainSet& data,
                       const TeacherCache& teacher);

const char* to_string(TrainMode m);
const char* to_string(PhaseOrder o);
const char* to_string(TeacherInput t);
const char* to_string(VisionPhaseInit v);

}  // namespace aple
