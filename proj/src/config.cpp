// SPDX-License-Identifier: Apache-2.0
#include "aple/config.hpp"

#include <cmath>
#include <fstream>

#include "aple/checksum.hpp"
#include "aple/error.hpp"
#include "aple/json_fields.hpp"

namespace aple {
namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::string msg = "invalid configuration";
  for (const auto& i : issues) msg += "\n  " + i;
  return msg;
}

template <class Fn>
void collect(std::vector<std::string>& issues, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
  }
}

// Enum fields round-trip through their to_string names.
template <class E, std::size_t N>
void get_enum(FieldReader& r, const nlohmann::json& obj, std::string_view prefix, const char* key,
              E& out, const E (&values)[N]) {
  std::string name = to_string(out);
  r.get(obj, prefix, key, name);
  for (E v : values) {
    if (name == to_string(v)) {
      out = v;
      return;
    }
  }
  std::string allowed;
  for (E v : values) allowed += std::string(allowed.empty() ? "" : ", ") + to_string(v);
  r.fail(FieldReader::join(prefix, key) + ": unknown value '" + name + "' (expected " + allowed + ")");
}

constexpr DeepMode kDeepModes[] = {DeepMode::fresh, DeepMode::carried};
constexpr PromptInit kPromptInits[] = {PromptInit::random_gauss, PromptInit::embed_text};
constexpr TrainMode kModes[] = {TrainMode::both, TrainMode::language_only, TrainMode::vision_only};
constexpr PhaseOrder kOrders[] = {PhaseOrder::language_first, PhaseOrder::vision_first};
constexpr TeacherInput kTeacherInputs[] = {TeacherInput::raw_image, TeacherInput::fused_image};
constexpr KlDirection kKlDirections[] = {KlDirection::teacher_first, KlDirection::student_first};
constexpr VisionPhaseInit kVisionInits[] = {VisionPhaseInit::resume, VisionPhaseInit::scratch};

nlohmann::json model_json(const std::string& preset, const ModelConfig& m) {
  return {{"preset", preset},
          {"vocab_size", m.vocab_size},
          {"max_text_len", m.max_text_len},
          {"d_lang", m.d_lang},
          {"d_vis", m.d_vis},
          {"d_joint", m.d_joint},
          {"n_layers", m.n_layers},
          {"prompt_depth", m.prompt_depth},
          {"n_heads", m.n_heads},
          {"patch_grid", m.patch_grid},
          {"patch_size", m.patch_size},
          {"channels", m.channels},
          {"mlp_ratio", m.mlp_ratio},
          {"temperature", m.temperature},
          {"ln_eps", m.ln_eps},
          {"deep_mode", to_string(m.deep_mode)}};
}

void read_model(FieldReader& r, const nlohmann::json& j, ExperimentConfig& c) {
  const char* p = "model";
  if (!r.check_object(j, p,
                      {"preset", "vocab_size", "max_text_len", "d_lang", "d_vis", "d_joint",
                       "n_layers", "prompt_depth", "n_heads", "patch_grid", "patch_size",
                       "channels", "mlp_ratio", "temperature", "ln_eps", "deep_mode"})) {
    return;
  }
  r.get(j, p, "preset", c.model_preset);
  if (c.model_preset == "desk") {
    c.model = ModelConfig::desk();
  } else if (c.model_preset == "vit_b16") {
    c.model = ModelConfig::vit_b16();
  } else {
    r.fail("model.preset: unknown preset '" + c.model_preset + "' (expected desk, vit_b16)");
  }
  ModelConfig& m = c.model;
  r.get(j, p, "vocab_size", m.vocab_size);
  r.get(j, p, "max_text_len", m.max_text_len);
  r.get(j, p, "d_lang", m.d_lang);
  r.get(j, p, "d_vis", m.d_vis);
  r.get(j, p, "d_joint", m.d_joint);
  r.get(j, p, "n_layers", m.n_layers);
  r.get(j, p, "prompt_depth", m.prompt_depth);
  r.get(j, p, "n_heads", m.n_heads);
  r.get(j, p, "patch_grid", m.patch_grid);
  r.get(j, p, "patch_size", m.patch_size);
  r.get(j, p, "channels", m.channels);
  r.get(j, p, "mlp_ratio", m.mlp_ratio);
  r.get(j, p, "temperature", m.temperature);
  r.get(j, p, "ln_eps", m.ln_eps);
  get_enum(r, j, p, "deep_mode", m.deep_mode, kDeepModes);
}

void read_train(FieldReader& r, const nlohmann::json& j, TrainConfig& t) {
  const char* p = "train";
  if (!r.check_object(j, p,
                      {"mode", "lambda_d", "lambda_g", "learning_rate", "epochs_stage1_lang",
                       "epochs_stage1_vis", "epochs_stage2", "batch_size", "seed", "order",
                       "teacher_input", "kl_direction", "vision_phase_init", "shots"})) {
    return;
  }
  get_enum(r, j, p, "mode", t.mode, kModes);
  r.get(j, p, "lambda_d", t.lambda_d);
  r.get(j, p, "lambda_g", t.lambda_g);
  r.get(j, p, "learning_rate", t.learning_rate);
  r.get(j, p, "epochs_stage1_lang", t.epochs_stage1_lang);
  r.get(j, p, "epochs_stage1_vis", t.epochs_stage1_vis);
  r.get(j, p, "epochs_stage2", t.epochs_stage2);
  r.get(j, p, "batch_size", t.batch_size);
  r.get(j, p, "seed", t.seed);
  get_enum(r, j, p, "order", t.order, kOrders);
  get_enum(r, j, p, "teacher_input", t.teacher_input, kTeacherInputs);
  get_enum(r, j, p, "kl_direction", t.kl_direction, kKlDirections);
  get_enum(r, j, p, "vision_phase_init", t.vision_phase_init, kVisionInits);
  r.get(j, p, "shots", t.shots);
}

void read_pretrain(FieldReader& r, const nlohmann::json& j, PretrainConfig& t) {
  const char* p = "pretrain";
  if (!r.check_object(j, p,
                      {"enabled", "seed", "steps", "batch_size", "learning_rate", "noise_scale",
                       "jitter_scale"})) {
    return;
  }
  r.get(j, p, "enabled", t.enabled);
  r.get(j, p, "seed", t.seed);
  r.get(j, p, "steps", t.steps);
  r.get(j, p, "batch_size", t.batch_size);
  r.get(j, p, "learning_rate", t.learning_rate);
  r.get(j, p, "noise_scale", t.noise_scale);
  r.get(j, p, "jitter_scale", t.jitter_scale);
}

nlohmann::json dataset_json(const DatasetSpec& d) {
  nlohmann::json j = d.to_json();
  j.erase("shots");  // owned by train.shots
  return j;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : Error(join_issues(issues)), issues_(std::move(issues)) {}

void TrainConfig::validate() const {
  std::vector<std::string> issues;
  if (!(lambda_d >= 0.0)) issues.push_back("train.lambda_d must be >= 0");
  if (!(lambda_g >= 0.0)) issues.push_back("train.lambda_g must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    issues.push_back("train.learning_rate must be > 0");
  }
  if (batch_size == 0) issues.push_back("train.batch_size must be positive");
  if (shots == 0) issues.push_back("train.shots must be positive");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

void PretrainConfig::validate() const {
  std::vector<std::string> issues;
  if (batch_size == 0) issues.push_back("pretrain.batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    issues.push_back("pretrain.learning_rate must be > 0");
  }
  if (!(noise_scale >= 0.0)) issues.push_back("pretrain.noise_scale must be >= 0");
  if (!(jitter_scale >= 0.0)) issues.push_back("pretrain.jitter_scale must be >= 0");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

void ExperimentConfig::validate() const {
  std::vector<std::string> issues;
  collect(issues, [&] { model.validate(); });
  collect(issues, [&] { adapter.params.validate(); });
  collect(issues, [&] { train.validate(); });
  collect(issues, [&] { pretrain.validate(); });
  collect(issues, [&] { dataset.validate(); });
  if (repeats == 0) issues.push_back("repeats must be positive");
  if (prompt.length > 256) issues.push_back("prompt.length must be <= 256");
  if (output.dir.empty()) issues.push_back("output.dir must not be empty");
  if (model.image_side() != dataset.image_side) {
    issues.push_back("model.patch_grid * model.patch_size (" + std::to_string(model.image_side()) +
                     ") must equal dataset.image_side (" + std::to_string(dataset.image_side) + ")");
  }
  if (model.channels != dataset.channels) {
    issues.push_back("model.channels must equal dataset.channels");
  }
  const std::size_t needed = Vocabulary::for_classes(dataset.class_names()).size();
  if (model.vocab_size < needed) {
    issues.push_back("model.vocab_size (" + std::to_string(model.vocab_size) +
                     ") is smaller than the class vocabulary (" + std::to_string(needed) + ")");
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["model"] = model_json(model_preset, model);
  j["adapter"] = {{"enabled", adapter.enabled},
                  {"sigma", adapter.params.sigma},
                  {"alpha", adapter.params.alpha},
                  {"normalize_peak", adapter.params.normalize_peak}};
  j["prompt"] = {{"length", prompt.length}, {"init", to_string(prompt.init)}};
  j["train"] = {{"mode", to_string(train.mode)},
                {"lambda_d", train.lambda_d},
                {"lambda_g", train.lambda_g},
                {"learning_rate", train.learning_rate},
                {"epochs_stage1_lang", train.epochs_stage1_lang},
                {"epochs_stage1_vis", train.epochs_stage1_vis},
                {"epochs_stage2", train.epochs_stage2},
                {"batch_size", train.batch_size},
                {"seed", train.seed},
                {"order", to_string(train.order)},
                {"teacher_input", to_string(train.teacher_input)},
                {"kl_direction", to_string(train.kl_direction)},
                {"vision_phase_init", to_string(train.vision_phase_init)},
                {"shots", train.shots}};
  j["pretrain"] = {{"enabled", pretrain.enabled},
                   {"seed", pretrain.seed},
                   {"steps", pretrain.steps},
                   {"batch_size", pretrain.batch_size},
                   {"learning_rate", pretrain.learning_rate},
                   {"noise_scale", pretrain.noise_scale},
                   {"jitter_scale", pretrain.jitter_scale}};
  j["dataset"] = dataset_json(dataset);
  j["output"] = {{"dir", output.dir},
                 {"weights_cache", output.weights_cache},
                 {"checkpoints", output.checkpoints}};
  j["repeats"] = repeats;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  std::vector<std::string> issues;
  FieldReader r(issues);
  ExperimentConfig c;
  if (r.check_object(j, "", {"model", "adapter", "prompt", "train", "pretrain", "dataset", "output",
                             "repeats"})) {
    if (j.contains("model")) read_model(r, j.at("model"), c);
    if (j.contains("adapter") &&
        r.check_object(j.at("adapter"), "adapter", {"enabled", "sigma", "alpha", "normalize_peak"})) {
      const auto& a = j.at("adapter");
      r.get(a, "adapter", "enabled", c.adapter.enabled);
      r.get(a, "adapter", "sigma", c.adapter.params.sigma);
      r.get(a, "adapter", "alpha", c.adapter.params.alpha);
      r.get(a, "adapter", "normalize_peak", c.adapter.params.normalize_peak);
    }
    if (j.contains("prompt") && r.check_object(j.at("prompt"), "prompt", {"length", "init"})) {
      r.get(j.at("prompt"), "prompt", "length", c.prompt.length);
      get_enum(r, j.at("prompt"), "prompt", "init", c.prompt.init, kPromptInits);
    }
    if (j.contains("train")) read_train(r, j.at("train"), c.train);
    if (j.contains("pretrain")) read_pretrain(r, j.at("pretrain"), c.pretrain);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.is_object() && d.contains("shots")) {
        r.fail("dataset.shots: unknown field (set train.shots)");
      } else {
        collect(issues, [&] {
          c.dataset = DatasetSpec::from_json(d);
        });
      }
    }
    if (j.contains("output") &&
        r.check_object(j.at("output"), "output", {"dir", "weights_cache", "checkpoints"})) {
      r.get(j.at("output"), "output", "dir", c.output.dir);
      r.get(j.at("output"), "output", "weights_cache", c.output.weights_cache);
      r.get(j.at("output"), "output", "checkpoints", c.output.checkpoints);
    }
    r.get(j, "", "repeats", c.repeats);
  }
  c.dataset.shots = c.train.shots;
  collect(issues, [&] { c.validate(); });
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

nlohmann::json ExperimentConfig::experiment_json() const {
  nlohmann::json j = to_json();
  j.erase("output");
  return j;
}

std::uint64_t ExperimentConfig::fingerprint() const { return fnv1a64(experiment_json().dump()); }

std::uint64_t ExperimentConfig::backbone_key() const {
  nlohmann::json j = to_json();
  nlohmann::json key = {{"model", j["model"]}, {"pretrain", j["pretrain"]}, {"dataset", j["dataset"]}};
  key["model"].erase("deep_mode");
  key["model"].erase("prompt_depth");
  return fnv1a64(key.dump());
}

void apply_override(nlohmann::json& doc, const std::string& dotted_path, const std::string& value) {
  if (dotted_path.empty()) throw ConfigError("override with an empty field path");
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("override '" + dotted_path + "': empty path segment");
    if (!node->is_object()) {
      throw ConfigError("override '" + dotted_path + "': '" + dotted_path.substr(0, start - 1) +
                        "' is not a section");
    }
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    if (!node->contains(key)) (*node)[key] = nlohmann::json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  nlohmann::json doc;
  if (path.empty()) {
    doc = ExperimentConfig{}.to_json();
  } else {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  }
  for (const auto& [k, v] : overrides) apply_override(doc, k, v);
  return ExperimentConfig::from_json(doc);
}

}  // namespace aple
