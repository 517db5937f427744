// SPDX-License-Identifier: Apache-2.0
// aple: experiment command line.
//
//   aple run        [--config FILE] [--repeats N] [--<section>.<field> VALUE ...]
//   aple sweep      --axis NAME --values V1,V2[,...] [--config FILE] [overrides]
//   aple gen-data   --out DIR [--config FILE] [overrides]
//   aple report     --run DIR [--out DIR]
//   aple grad-check [--eps E] [--classes C] [--seed S]
//   aple selftest
//
// Exit codes: 0 success, 1 validation, 2 runtime, 3 numeric divergence.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "aple/audit.hpp"
#include "aple/checksum.hpp"
#include "aple/config.hpp"
#include "aple/dataset.hpp"
#include "aple/error.hpp"
#include "aple/pipeline.hpp"
#include "aple/report.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2, kDivergence = 3 };

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Turns leftover "--a.b value" / "--a.b=value" arguments into overrides.
Overrides parse_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
      throw aple::UsageError("unexpected argument '" + arg + "'");
    }
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw aple::UsageError("override '" + arg + "' has no value");
    }
  }
  return out;
}

void print_summary(const aple::EvalReport& r) {
  std::printf("base %.2f  novel %.2f  HM %.2f  (zero-shot base %.2f  novel %.2f  HM %.2f)\n",
              r.base_accuracy, r.novel_accuracy, r.harmonic_mean, r.zs_base_accuracy,
              r.zs_novel_accuracy, r.zs_harmonic_mean);
  if (r.sweep) {
    std::printf("%-12s %8s %8s %8s\n", r.sweep->axis.c_str(), "base", "novel", "HM");
    for (const auto& row : r.sweep->rows) {
      std::printf("%-12s %8.2f %8.2f %8.2f\n", row.value.c_str(), row.base, row.novel, row.hm);
    }
    std::printf("%-12s %8.2f %8.2f %8.2f\n", "mean", r.sweep->base.mean, r.sweep->novel.mean,
                r.sweep->hm.mean);
    std::printf("%-12s %8.2f %8.2f %8.2f\n", "std(pop)", r.sweep->base.std, r.sweep->novel.std,
                r.sweep->hm.std);
  }
}

aple::RunOptions cli_options(bool quiet) {
  aple::RunOptions opts;
  if (!quiet) opts.log = [](const std::string& m) { std::fprintf(stderr, "[aple] %s\n", m.c_str()); };
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-wise adaptive multi-modal prompt learning experiments"};
  app.require_subcommand(1);

  std::string config_path, axis, run_dir, out_dir;
  std::vector<std::string> values;
  std::size_t repeats = 0, classes = 4;
  std::uint64_t seed = 5;
  float eps = 1e-3f;
  float temperature = 0.0f;
  bool quiet = false, print_config = false;

  auto* run = app.add_subcommand("run", "Run one experiment and write its report");
  run->add_option("--config", config_path, "Experiment config JSON (defaults when omitted)");
  run->add_option("--repeats", repeats, "Independent seeds to average");
  run->add_flag("--quiet", quiet, "No progress messages");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");
  run->allow_extras();

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of an axis");
  sweep->add_option("--config", config_path, "Experiment config JSON");
  sweep->add_option("--axis", axis, "prompt_length | sigma | lambda_d | lambda_g | adaptation_on_off")
      ->required();
  sweep->add_option("--values", values, "Comma-separated axis values")->required()->delimiter(',');
  sweep->add_flag("--quiet", quiet, "No progress messages");
  sweep->allow_extras();

  auto* gen = app.add_subcommand("gen-data", "Materialize the synthetic dataset");
  gen->add_option("--config", config_path, "Experiment config JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->allow_extras();

  auto* rep = app.add_subcommand("report", "Re-emit tables from a stored run");
  rep->add_option("--run", run_dir, "Run directory holding report.json")->required();
  rep->add_option("--out", out_dir, "Where to write the tables (default: the run directory)");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of the stage-1 loss");
  gc->add_option("--eps", eps, "Central-difference step");
  gc->add_option("--classes", classes, "Number of classes in the audit model");
  gc->add_option("--seed", seed, "Seed for weights, images and prompts");
  gc->add_option("--temperature", temperature, "Override the model temperature");

  auto* self = app.add_subcommand("selftest", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (*run) {
      Overrides ov = parse_overrides(run->remaining());
      if (repeats) ov.emplace_back("repeats", std::to_string(repeats));
      const aple::ExperimentConfig cfg = aple::load_config(config_path, ov);
      if (print_config) {
        std::printf("%s\n", cfg.to_json().dump(2).c_str());
        return kOk;
      }
      const aple::RunOutputs out = aple::run_pipeline(cfg, cli_options(quiet));
      print_summary(out.report);
      std::printf("wrote %s (%.1f s)\n", cfg.output.dir.c_str(), out.seconds);
    } else if (*sweep) {
      const aple::ExperimentConfig cfg = aple::load_config(config_path, parse_overrides(sweep->remaining()));
      const aple::SweepOutputs out =
          aple::run_sweep(cfg, aple::sweep_axis_from_string(axis), values, cli_options(quiet));
      print_summary(out.report);
      std::printf("wrote %s\n", cfg.output.dir.c_str());
    } else if (*gen) {
      const aple::ExperimentConfig cfg = aple::load_config(config_path, parse_overrides(gen->remaining()));
      aple::DatasetSpec spec = cfg.dataset;
      spec.shots = cfg.train.shots;
      const aple::Dataset ds = aple::generate_dataset(spec);
      aple::save_dataset(out_dir, ds);
      std::printf("%zu train / %zu eval images, fingerprint %s, nearest-centroid accuracy %.4f\n",
                  ds.train.size(), ds.eval.size(), aple::hex64(ds.fingerprint()).c_str(),
                  aple::nearest_centroid_accuracy(ds));
    } else if (*rep) {
      const aple::EvalReport r = aple::load_report(std::filesystem::path(run_dir) / "report.json");
      aple::emit_report(r, out_dir.empty() ? run_dir : out_dir);
      print_summary(r);
    } else if (*gc) {
      aple::GradAuditConfig cfg;
      cfg.eps = eps;
      cfg.classes = classes;
      cfg.seed = seed;
      if (temperature > 0.0f) cfg.model.temperature = temperature;
      const aple::GradAudit a = aple::audit_stage1_gradients(cfg);
      for (const auto& [name, r] : {std::pair{"language", a.language}, std::pair{"vision", a.vision}}) {
        std::printf("%-8s coords %zu  max rel error %.3e  (tensor %zu index %zu: analytic %.6e numeric %.6e)"
                  "  norm-wise %.3e\n",
                  name, r.coordinates, r.max_rel_error, r.worst_param, r.worst_index, r.worst_analytic,
                  r.worst_numeric, r.norm_rel_error);
      }
      const bool ok = a.language.max_rel_error < 1e-3 && a.vision.max_rel_error < 1e-3;
      std::printf("%s\n", ok ? "PASS" : "FAIL");
      return ok ? kOk : kRuntime;
    } else if (*self) {
      bool ok = true;
      aple::run_selftest([&](const aple::CheckOutcome& c) {
        ok = ok && c.passed;
        std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
      });
      return ok ? kOk : kRuntime;
    }
  } catch (const aple::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const aple::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const aple::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
