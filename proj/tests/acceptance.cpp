// SPDX-License-Identifier: Apache-2.0
// Acceptance checks: one PASS/FAIL line per criterion.
//
//   aple_acceptance [--work DIR] [--only N[,N...]] [--allow-fail N[,N...]]
//
// Exit status is 0 when every selected criterion passes or is listed in
// --allow-fail, 1 otherwise. Listed failures are still printed as FAIL.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aple/audit.hpp"
#include "aple/clip_head.hpp"
#include "aple/config.hpp"
#include "aple/dataset.hpp"
#include "aple/eval.hpp"
#include "aple/image_adapter.hpp"
#include "aple/pipeline.hpp"
#include "aple/report.hpp"
#include "aple/rng.hpp"
#include "aple/trainer.hpp"

namespace fs = std::filesystem;
using namespace aple;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Work {
 public:
  explicit Work(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  ExperimentConfig config(const std::string& name) const {
    ExperimentConfig c;
    c.output.dir = (root_ / name).string();
    c.output.weights_cache = (root_ / "cache").string();
    return c;
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
};

// ---------------------------------------------------------------------------

Verdict c1_harmonic_rows() {
  const double rows[][3] = {{69.34, 74.22, 71.70}, {82.69, 63.22, 71.66}, {80.47, 71.69, 75.83},
                            {82.28, 75.14, 78.55}, {81.99, 75.11, 78.40}};
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(harmonic_mean(r[0], r[1]) - r[2]));
  return {worst <= 0.005, "max |HM - reference| = " + fmt("%.4f", worst)};
}

Verdict c2_aggregate() {
  const double col[] = {82.33, 81.60, 82.27, 82.05, 81.94, 82.62};
  std::vector<SweepRow> rows;
  for (double v : col) {
    SweepRow r;
    r.value = std::to_string(rows.size());
    r.base = v;
    r.novel = v;
    r.hm = v;
    rows.push_back(r);
  }
  const SweepTable t = make_sweep_table("prompt_length", rows);
  return {std::abs(t.base.mean - 82.14) <= 0.005, "sweep mean " + fmt("%.6f", t.base.mean)};
}

Verdict c3_grad_audit() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradAudit a = audit_stage1_gradients({});
  const double secs = seconds_since(t0);
  const double worst = std::max(a.language.max_rel_error, a.vision.max_rel_error);
  return {worst < 1e-3 && secs < 120.0,
          "per-coordinate max rel error language " + fmt("%.3e", a.language.max_rel_error) +
              ", vision " + fmt("%.3e", a.vision.max_rel_error) + " (norm-wise " +
              fmt("%.2e", a.language.norm_rel_error) + " / " + fmt("%.2e", a.vision.norm_rel_error) +
              "), " + fmt("%.1f", secs) + " s"};
}

Verdict c4_frozen_sequential(const Work& work) {
  const ExperimentConfig cfg = work.config("c4");
  const Dataset ds = generate_dataset(cfg.dataset);
  const EncoderWeights w = load_or_build_backbone(cfg);
  const std::uint64_t backbone = w.checksum();
  const BaseTask task = make_base_task(cfg, ds);
  const TrainContext ctx{w, cfg.model, task.classes};
  const TeacherCache teacher = TeacherCache::build(ctx, task.data, cfg.train.teacher_input);
  const PromptPack init =
      init_prompts(cfg.model, cfg.prompt.length, cfg.train.seed, cfg.prompt.init, &w, &task.vocab);

  // Phase A alone, then phase B alone from its output.
  TrainConfig only_a = cfg.train;
  only_a.epochs_stage1_vis = 0;
  TrainConfig only_b = cfg.train;
  only_b.epochs_stage1_lang = 0;
  const StageResult a = train_stage1(ctx, init, task.data, teacher, only_a);
  const StageResult b = train_stage1(ctx, a.prompts, task.data, teacher, only_b);
  const bool g_kept = a.prompts.vision_checksum() == init.vision_checksum();
  const bool d_kept = b.prompts.text_checksum() == a.prompts.text_checksum();
  const bool d_moved = a.prompts.text_checksum() != init.text_checksum();
  const bool g_moved = b.prompts.vision_checksum() != a.prompts.vision_checksum();

  // The full two-stage run must follow the same path.
  const StageResult s1 = train_stage1(ctx, init, task.data, teacher, cfg.train);
  const bool same_path = s1.prompts.text_checksum() == b.prompts.text_checksum() &&
                         s1.prompts.vision_checksum() == b.prompts.vision_checksum();
  const StageResult s2 = train_stage2(ctx, s1.prompts, task.data, cfg.train);
  const bool frozen = w.checksum() == backbone;
  const bool ok = g_kept && d_kept && d_moved && g_moved && same_path && frozen &&
                  s2.prompts.text_checksum() != s1.prompts.text_checksum();
  return {ok, std::string("backbone unchanged ") + (frozen ? "yes" : "NO") + ", G after phase A " +
                  (g_kept ? "unchanged" : "CHANGED") + ", D after phase B " +
                  (d_kept ? "unchanged" : "CHANGED") + ", phases compose to full stage 1 " +
                  (same_path ? "yes" : "NO")};
}

// Naive O(N^4) DFT of channel 0 against fft2.
double dft_gap(const ImageGrid& img) {
  const Spectrum s = fft2(img);
  const std::size_t h = img.height, w = img.width;
  double worst = 0.0;
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double ang = -2.0 * M_PI * (static_cast<double>(ky * y) / h + static_cast<double>(kx * x) / w);
          acc += static_cast<double>(img.at(0, y, x)) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      }
      worst = std::max(worst, std::abs(acc - s.at(0, ky, kx)));
    }
  }
  return worst;
}

Verdict c5_adapter() {
  Rng rng(55);
  ImageGrid img = ImageGrid::zeros(16, 16, 3);
  for (float& p : img.pixels) p = static_cast<float>(rng.uniform());
  AdapterConfig keep;
  keep.alpha = 1.0;
  double id_gap = 0.0, round_gap = 0.0;
  const ImageGrid same = adapt(img, keep);
  const ImageGrid round = ifft2(fft2(img));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    id_gap = std::max(id_gap, static_cast<double>(std::abs(same.pixels[i] - img.pixels[i])));
    round_gap = std::max(round_gap, static_cast<double>(std::abs(round.pixels[i] - img.pixels[i])));
  }
  AdapterConfig literal;
  literal.normalize_peak = false;
  const double g_lit = gaussian_gain_at(0.0, 0.0, literal);
  const double g_norm = gaussian_gain_at(0.0, 0.0, AdapterConfig{});
  const double dft = dft_gap(img);
  const bool ok = id_gap <= 1e-6 && round_gap < 1e-6 && std::abs(g_lit - 63.662) <= 0.001 &&
                  g_norm == 1.0 && dft < 1e-4;
  return {ok, "alpha=1 gap " + fmt("%.1e", id_gap) + ", round trip " + fmt("%.1e", round_gap) +
                  ", G(0,0) literal " + fmt("%.4f", g_lit) + " normalized " + fmt("%.1f", g_norm) +
                  ", FFT vs DFT " + fmt("%.1e", dft)};
}

Verdict c6_losses(const RunState& logged) {
  Rng rng(66);
  auto random_pred = [&] {
    std::vector<double> p(5);
    double s = 0.0;
    for (double& v : p) s += (v = rng.uniform() + 1e-3);
    for (double& v : p) v /= s;
    return Prediction::from_probs(std::move(p));
  };
  double self = 0.0, most_negative = 0.0;
  bool lambda0 = true;
  for (int t = 0; t < 1000; ++t) {
    const Prediction p = random_pred(), q = random_pred();
    self = std::max(self, std::abs(kl_loss(p, p)));
    most_negative = std::min(most_negative, kl_loss(p, q));
    lambda0 = lambda0 && stage1_loss(p, t % 5, q, 0.0) == ce_loss(p, t % 5);
  }
  double decomposition = 0.0;
  for (const StepRecord& r : logged.history) {
    decomposition = std::max(decomposition, std::abs(r.total - (r.ce + r.lambda * r.kl)));
  }
  const bool ok = self <= 1e-9 && most_negative >= -1e-9 && lambda0 && !logged.history.empty() &&
                  decomposition <= 1e-6;
  return {ok, "max |KL(p,p)| " + fmt("%.1e", self) + ", min KL " + fmt("%.1e", most_negative) +
                  ", lambda=0 bitwise " + (lambda0 ? "yes" : "NO") + ", max |total - ce - l*kl| " +
                  fmt("%.1e", decomposition) + " over " + std::to_string(logged.history.size()) + " steps"};
}

Verdict c7_end_to_end(const Work& work, RunState* logged) {
  double worst_secs = 0.0;
  RunOutputs first;
  for (const char* name : {"c7-a", "c7-b"}) {
    const ExperimentConfig cfg = work.config(name);
    fs::remove_all(cfg.output.dir);
    // Each run builds its own backbone so the timing covers the warm-up.
    ExperimentConfig timed = cfg;
    timed.output.weights_cache = (work.root() / name / "cache").string();
    const auto t0 = std::chrono::steady_clock::now();
    RunOutputs out = run_pipeline(timed);
    worst_secs = std::max(worst_secs, seconds_since(t0));
    if (std::string(name) == "c7-a") first = std::move(out);
  }
  *logged = first.state;
  const EvalReport& r = first.report;
  const bool identical = read_file(work.root() / "c7-a" / "report.json") ==
                         read_file(work.root() / "c7-b" / "report.json");
  const bool ok = r.base_accuracy >= 90.0 && r.base_accuracy > r.zs_base_accuracy && identical &&
                  worst_secs < 300.0;
  return {ok, "base " + fmt("%.2f", r.base_accuracy) + " vs zero-shot " + fmt("%.2f", r.zs_base_accuracy) +
                  " (novel " + fmt("%.2f", r.novel_accuracy) + ", HM " + fmt("%.2f", r.harmonic_mean) +
                  "), reports " + (identical ? "bitwise identical" : "DIFFER") + ", " +
                  fmt("%.1f", worst_secs) + " s per run"};
}

Verdict c8_lambda(const Work& work) {
  const ExperimentConfig cfg = work.config("c8");
  const Dataset ds = generate_dataset(cfg.dataset);
  const EncoderWeights w = load_or_build_backbone(cfg);
  const BaseTask task = make_base_task(cfg, ds);
  const TrainContext ctx{w, cfg.model, task.classes};
  const TeacherCache teacher = TeacherCache::build(ctx, task.data, cfg.train.teacher_input);
  const PromptPack init =
      init_prompts(cfg.model, cfg.prompt.length, cfg.train.seed, cfg.prompt.init, &w, &task.vocab);
  std::vector<double> kl;
  for (double lambda : {0.0, 0.5, 5.0}) {
    TrainConfig t = cfg.train;
    t.lambda_d = lambda;
    t.epochs_stage1_vis = 0;
    const StageResult a = train_stage1(ctx, init, task.data, teacher, t);
    kl.push_back(mean_teacher_kl(ctx, a.prompts, task.data, teacher));
  }
  const bool ok = kl[1] <= kl[0] && kl[2] <= kl[1];
  return {ok, "mean KL(p_zs||p) at lambda_d 0 / 0.5 / 5: " + fmt("%.5f", kl[0]) + " / " +
                  fmt("%.5f", kl[1]) + " / " + fmt("%.5f", kl[2])};
}

Verdict c9_sweep(const Work& work) {
  const ExperimentConfig cfg = work.config("c9");
  fs::remove_all(cfg.output.dir);
  const SweepOutputs out = run_sweep(cfg, SweepAxis::prompt_length, {"2", "4", "8"});
  const SweepTable& t = *out.report.sweep;
  // Two-pass oracle in long double over the emitted rows.
  auto oracle = [&](auto field) {
    long double s = 0.0L;
    for (const auto& r : t.rows) s += field(r);
    const long double mean = s / t.rows.size();
    long double sq = 0.0L;
    for (const auto& r : t.rows) sq += (field(r) - mean) * (field(r) - mean);
    return std::pair<double, double>(static_cast<double>(mean), static_cast<double>(std::sqrt(sq / t.rows.size())));
  };
  double gap = 0.0;
  const std::pair<const Aggregate*, std::function<long double(const SweepRow&)>> cols[] = {
      {&t.base, [](const SweepRow& r) { return static_cast<long double>(r.base); }},
      {&t.novel, [](const SweepRow& r) { return static_cast<long double>(r.novel); }},
      {&t.hm, [](const SweepRow& r) { return static_cast<long double>(r.hm); }}};
  for (const auto& [agg, field] : cols) {
    const auto [m, s] = oracle(field);
    gap = std::max({gap, std::abs(agg->mean - m), std::abs(agg->std - s)});
  }
  const bool ok = t.rows.size() == 3 && t.complete && gap <= 1e-9;
  std::string rows;
  for (const auto& r : t.rows) rows += " m=" + r.value + ":" + fmt("%.2f", r.hm);
  return {ok, std::to_string(t.rows.size()) + " rows (HM" + rows + "), mean " + fmt("%.3f", t.hm.mean) +
                  " std " + fmt("%.3f", t.hm.std) + ", max |aggregate - oracle| " + fmt("%.1e", gap)};
}

Verdict c10_modes(const Work& work) {
  ExperimentConfig lang = work.config("c10-language");
  lang.train.mode = TrainMode::language_only;
  ExperimentConfig vis = work.config("c10-vision");
  vis.train.mode = TrainMode::vision_only;
  const RunOutputs a = run_pipeline(lang, {false, {}});
  const RunOutputs b = run_pipeline(vis, {false, {}});
  const auto& pa = a.report.prompts;
  const auto& pb = b.report.prompts;
  const bool ok = pa.vision_untouched && !pa.text_untouched && pb.text_untouched && !pb.vision_untouched;
  return {ok, "language_only: G " + std::string(pa.vision_untouched ? "untouched" : "CHANGED") + ", base " +
                  fmt("%.2f", a.report.base_accuracy) + "; vision_only: D " +
                  (pb.text_untouched ? "untouched" : "CHANGED") + ", base " +
                  fmt("%.2f", b.report.base_accuracy)};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = (fs::temp_directory_path() / "aple-acceptance").string();
  std::string only, allow;
  app.add_option("--work", work_dir, "Scratch directory for runs and the weights cache");
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--allow-fail", allow, "Criteria whose failure does not affect the exit status");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected = parse_list(only), allowed = parse_list(allow);
  const Work work(work_dir);
  RunState logged;  // step log of the criterion-7 run, reused by criterion 6

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"metric arithmetic", c1_harmonic_rows},
      {"aggregation", c2_aggregate},
      {"gradient audit", c3_grad_audit},
      {"frozen/sequential contracts", [&] { return c4_frozen_sequential(work); }},
      {"adapter identities", c5_adapter},
      {"loss identities", [&] {
         if (logged.history.empty()) {
           RunOutputs out = run_pipeline(work.config("c6"), {false, {}});
           logged = out.state;
         }
         return c6_losses(logged);
       }},
      {"end-to-end learning", [&] { return c7_end_to_end(work, &logged); }},
      {"distillation direction", [&] { return c8_lambda(work); }},
      {"sweep machinery", [&] { return c9_sweep(work); }},
      {"ablation modes", [&] { return c10_modes(work); }},
  };
  // Criterion 7 produces the step log criterion 6 inspects, so run it first.
  const int order[] = {1, 2, 3, 4, 5, 7, 6, 8, 9, 10};

  std::vector<std::string> lines(criteria.size() + 1);
  bool ok = true;
  for (int n : order) {
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[n - 1].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    lines[n] = "criterion " + std::to_string(n) + " " + (v.pass ? "PASS" : "FAIL") + "  " +
               criteria[n - 1].first + ": " + v.detail + "  [" + fmt("%.1f", seconds_since(t0)) + " s]";
    std::fprintf(stderr, "%s\n", lines[n].c_str());
    if (!v.pass && !allowed.count(n)) ok = false;
  }
  std::printf("\n");
  for (const auto& l : lines) {
    if (!l.empty()) std::printf("%s\n", l.c_str());
  }
  return ok ? 0 : 1;
}
