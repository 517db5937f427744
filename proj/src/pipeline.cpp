// SPDX-License-Identifier: Apache-2.0
#include "aple/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <fstream>

#include "aple/archive.hpp"
#include "aple/checksum.hpp"
#include "aple/dataset.hpp"
#include "aple/error.hpp"
#include "aple/eval.hpp"
#include "aple/pretrain.hpp"

namespace aple {
namespace {

namespace fs = std::filesystem;

void say(const RunOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

struct SingleRun {
  SplitResult base, novel;
  PromptPack initial, final_prompts;
  RunState state;
};

SingleRun run_once(const ExperimentConfig& cfg, const Dataset& ds, const EncoderWeights& w,
                   std::uint64_t seed, const fs::path& dir, const RunOptions& opts) {
  const ModelConfig& model = cfg.model;
  const AdapterConfig* adapter = cfg.adapter.enabled ? &cfg.adapter.params : nullptr;
  const BaseTask task = make_base_task(cfg, ds);
  const TrainSet& data = task.data;
  const TrainContext ctx{w, model, task.classes};

  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;
  SingleRun out;
  out.initial = init_prompts(model, cfg.prompt.length, seed, cfg.prompt.init, &w, &task.vocab);

  const TeacherCache teacher = TeacherCache::build(ctx, data, tcfg.teacher_input);

  std::ofstream log;
  const bool files = opts.write_files;
  if (files) {
    fs::create_directories(dir / "checkpoints");
    log.open(dir / "steps.jsonl", std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + (dir / "steps.jsonl").string());
  }
  const StepSink sink = [&](const StepRecord& r) {
    if (files) log << r.to_json().dump() << '\n';
  };
  auto checkpoint = [&](const char* name, const PromptPack& p, RunState& st) {
    if (!files || !cfg.output.checkpoints) return;
    const std::string rel = std::string("checkpoints/") + name + ".apla";
    save_archive(dir / rel, p.named());
    st.checkpoints.push_back(rel);
  };

  RunState state;
  checkpoint("init", out.initial, state);
  say(opts, "stage 1");
  StageResult s1 = train_stage1(ctx, out.initial, data, teacher, tcfg, std::move(state), sink);
  checkpoint("stage1", s1.prompts, s1.state);
  say(opts, "stage 2");
  StageResult s2 = train_stage2(ctx, s1.prompts, data, tcfg, std::move(s1.state), sink);
  checkpoint("stage2", s2.prompts, s2.state);
  if (files) {
    log.flush();
    if (!log) throw IoError("cannot write " + (dir / "steps.jsonl").string());
    write_json(dir / "state.json", s2.state.to_json());
  }

  say(opts, "evaluating");
  out.base = evaluate(w, model, &s2.prompts, adapter, ds, Split::base);
  out.novel = evaluate(w, model, &s2.prompts, adapter, ds, Split::novel);
  out.final_prompts = std::move(s2.prompts);
  out.state = std::move(s2.state);
  return out;
}

std::vector<ClassAccuracy> pooled(const std::vector<SingleRun>& runs, bool base) {
  std::vector<ClassAccuracy> out = base ? runs[0].base.per_class : runs[0].novel.per_class;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const auto& pc = base ? runs[r].base.per_class : runs[r].novel.per_class;
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k].correct += pc[k].correct;
      out[k].total += pc[k].total;
    }
  }
  for (auto& c : out) {
    c.accuracy = c.total ? 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.total) : 0.0;
  }
  return out;
}

double parse_number(const std::string& s, const char* axis) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(std::string("sweep ") + axis + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

BaseTask make_base_task(const ExperimentConfig& cfg, const Dataset& ds) {
  BaseTask t;
  t.vocab = Vocabulary::for_classes(ds.spec.class_names());
  t.classes = ClassPromptSet::build(t.vocab, ds.spec.base_names(), cfg.model.max_text_len);
  std::vector<std::size_t> local(ds.spec.classes.size(), 0);
  for (std::size_t k = 0; k < ds.spec.base.size(); ++k) local[ds.spec.base[k]] = k;
  std::vector<ImageGrid> raw;
  std::vector<std::size_t> labels;
  for (const Sample& s : ds.train) {
    raw.push_back(s.image);
    labels.push_back(local[s.label]);
  }
  t.data = TrainSet::build(std::move(raw), std::move(labels),
                           cfg.adapter.enabled ? &cfg.adapter.params : nullptr);
  return t;
}

EncoderWeights load_or_build_backbone(const ExperimentConfig& cfg, const RunOptions& opts,
                                      bool* from_cache) {
  if (from_cache) *from_cache = false;
  fs::path path;
  if (!cfg.output.weights_cache.empty()) {
    path = fs::path(cfg.output.weights_cache) / ("backbone-" + hex64(cfg.backbone_key()) + ".apla");
    if (fs::exists(path)) {
      say(opts, "backbone from cache " + path.string());
      const auto entries = load_archive(path);
      if (from_cache) *from_cache = true;
      return EncoderWeights::from_named(cfg.model, entries);
    }
  }
  say(opts, "building backbone (" + std::to_string(cfg.pretrain.enabled ? cfg.pretrain.steps : 0) +
                " warm-up steps)");
  EncoderWeights w = build_backbone(cfg.model, cfg.dataset, cfg.pretrain);
  if (!path.empty()) {
    fs::create_directories(path.parent_path());
    // Write under a temporary name so a concurrent reader never sees half a file.
    const fs::path tmp = path.string() + ".tmp";
    save_archive(tmp, w.named());
    fs::rename(tmp, path);
  }
  return w;
}

RunOutputs run_pipeline(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = cfg_in;
  cfg.dataset.shots = cfg.train.shots;
  cfg.validate();

  say(opts, "generating dataset");
  const Dataset ds = generate_dataset(cfg.dataset);
  const EncoderWeights w = load_or_build_backbone(cfg, opts);
  const std::uint64_t backbone_before = w.checksum();

  say(opts, "zero-shot baseline");
  const SplitResult zs_base = evaluate(w, cfg.model, nullptr, nullptr, ds, Split::base);
  const SplitResult zs_novel = evaluate(w, cfg.model, nullptr, nullptr, ds, Split::novel);

  const fs::path dir(cfg.output.dir);
  if (opts.write_files) fs::create_directories(dir);

  std::vector<SingleRun> runs;
  EvalReport rep;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = cfg.train.seed + r;
    const fs::path run_dir = cfg.repeats == 1 ? dir : dir / ("repeat-" + std::to_string(r));
    if (cfg.repeats > 1) say(opts, "repeat " + std::to_string(r) + " (seed " + std::to_string(seed) + ")");
    runs.push_back(run_once(cfg, ds, w, seed, run_dir, opts));
    const auto& last = runs.back();
    rep.repeats.push_back({seed, last.base.accuracy, last.novel.accuracy,
                           harmonic_mean(last.base.accuracy, last.novel.accuracy)});
  }

  double base_sum = 0.0, novel_sum = 0.0;
  for (const auto& r : rep.repeats) {
    base_sum += r.base;
    novel_sum += r.novel;
  }
  rep.kind = "run";
  rep.config = cfg.experiment_json();
  rep.config_fingerprint = hex64(cfg.fingerprint());
  rep.dataset_fingerprint = hex64(ds.fingerprint());
  rep.backbone_checksum = hex64(backbone_before);
  rep.backbone_unchanged = w.checksum() == backbone_before;
  rep.base_accuracy = base_sum / static_cast<double>(rep.repeats.size());
  rep.novel_accuracy = novel_sum / static_cast<double>(rep.repeats.size());
  rep.harmonic_mean = harmonic_mean(rep.base_accuracy, rep.novel_accuracy);
  rep.zs_base_accuracy = zs_base.accuracy;
  rep.zs_novel_accuracy = zs_novel.accuracy;
  rep.zs_harmonic_mean = harmonic_mean(zs_base.accuracy, zs_novel.accuracy);
  rep.per_class_base = pooled(runs, true);
  rep.per_class_novel = pooled(runs, false);

  const SingleRun& last = runs.back();
  rep.prompts.text_init = hex64(last.initial.text_checksum());
  rep.prompts.text_final = hex64(last.final_prompts.text_checksum());
  rep.prompts.vision_init = hex64(last.initial.vision_checksum());
  rep.prompts.vision_final = hex64(last.final_prompts.vision_checksum());
  rep.prompts.text_untouched = rep.prompts.text_init == rep.prompts.text_final;
  rep.prompts.vision_untouched = rep.prompts.vision_init == rep.prompts.vision_final;

  RunOutputs out;
  out.report = std::move(rep);
  out.state = last.state;
  out.initial_prompts = last.initial;
  out.final_prompts = last.final_prompts;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opts.write_files) {
    emit_report(out.report, dir);
    write_json(dir / "config.json", cfg.to_json());
    write_json(dir / "timing.json", {{"seconds", out.seconds}});
  }
  return out;
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "prompt_length") return SweepAxis::prompt_length;
  if (s == "sigma") return SweepAxis::sigma;
  if (s == "lambda_d") return SweepAxis::lambda_d;
  if (s == "lambda_g") return SweepAxis::lambda_g;
  if (s == "adaptation_on_off") return SweepAxis::adaptation_on_off;
  throw ConfigError("unknown sweep axis '" + s +
                    "' (expected prompt_length, sigma, lambda_d, lambda_g, adaptation_on_off)");
}

const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::prompt_length: return "prompt_length";
    case SweepAxis::sigma: return "sigma";
    case SweepAxis::lambda_d: return "lambda_d";
    case SweepAxis::lambda_g: return "lambda_g";
    case SweepAxis::adaptation_on_off: return "adaptation_on_off";
  }
  return "?";
}

ExperimentConfig sweep_point_config(const ExperimentConfig& base, SweepAxis axis,
                                    const std::string& value) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::prompt_length: {
      const double v = parse_number(value, "prompt_length");
      if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw ConfigError("sweep prompt_length: '" + value + "' is not a non-negative integer");
      }
      c.prompt.length = static_cast<std::size_t>(v);
      break;
    }
    case SweepAxis::sigma: c.adapter.params.sigma = parse_number(value, "sigma"); break;
    case SweepAxis::lambda_d: c.train.lambda_d = parse_number(value, "lambda_d"); break;
    case SweepAxis::lambda_g: c.train.lambda_g = parse_number(value, "lambda_g"); break;
    case SweepAxis::adaptation_on_off:
      if (value == "off") {
        c.train.epochs_stage2 = 0;
      } else if (value != "on") {
        throw ConfigError("sweep adaptation_on_off: expected 'on' or 'off', got '" + value + "'");
      }
      break;
  }
  c.validate();
  return c;
}

SweepOutputs run_sweep(const ExperimentConfig& base, SweepAxis axis,
                       const std::vector<std::string>& values, const RunOptions& opts) {
  if (values.size() < 2) throw UsageError("a sweep needs at least two values");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(sweep_point_config(base, axis, v));

  const fs::path dir(base.output.dir);
  SweepOutputs out;
  std::vector<SweepRow> rows;
  auto assemble = [&](bool complete) {
    EvalReport rep;
    rep.kind = "sweep";
    rep.config = base.experiment_json();
    rep.config_fingerprint = hex64(base.fingerprint());
    rep.sweep = make_sweep_table(to_string(axis), rows, complete);
    if (!out.points.empty()) {
      const EvalReport& first = out.points.front().report;
      rep.dataset_fingerprint = first.dataset_fingerprint;
      rep.backbone_checksum = first.backbone_checksum;
      rep.zs_base_accuracy = first.zs_base_accuracy;
      rep.zs_novel_accuracy = first.zs_novel_accuracy;
      rep.zs_harmonic_mean = first.zs_harmonic_mean;
      bool unchanged = true;
      for (const auto& p : out.points) unchanged = unchanged && p.report.backbone_unchanged;
      rep.backbone_unchanged = unchanged;
      rep.base_accuracy = rep.sweep->base.mean;
      rep.novel_accuracy = rep.sweep->novel.mean;
      rep.harmonic_mean = harmonic_mean(rep.base_accuracy, rep.novel_accuracy);
    }
    return rep;
  };

  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig c = configs[i];
    c.output.dir = (dir / ("point-" + std::to_string(i))).string();
    say(opts, std::string("sweep ") + to_string(axis) + " = " + values[i]);
    try {
      out.points.push_back(run_pipeline(c, opts));
    } catch (...) {
      if (opts.write_files && !rows.empty()) emit_report(assemble(false), dir);
      throw;
    }
    const EvalReport& r = out.points.back().report;
    rows.push_back({values[i], r.base_accuracy, r.novel_accuracy, r.harmonic_mean, r.zs_base_accuracy,
                    r.zs_novel_accuracy, r.zs_harmonic_mean, r.config_fingerprint,
                    r.dataset_fingerprint});
  }
  out.report = assemble(true);
  if (opts.write_files) emit_report(out.report, dir);
  return out;
}

}  // namespace aple
