// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "aple/eval.hpp"

namespace aple {

/// One point of a sweep (or the single row of a plain run).
struct SweepRow {
  std::string value;
  double base = 0.0;
  double novel = 0.0;
  double hm = 0.0;
  double zs_base = 0.0;
  double zs_novel = 0.0;
  double zs_hm = 0.0;
  std::string config_fingerprint;
  std::string dataset_fingerprint;

  bool operator==(const SweepRow&) const = default;
};

struct SweepTable {
  std::string axis;
  std::vector<SweepRow> rows;
  Aggregate base, novel, hm;  // population std
  bool complete = true;       // false when a point failed and the table is partial

  bool operator==(const SweepTable& o) const;
};

struct RepeatRow {
  std::uint64_t seed = 0;
  double base = 0.0;
  double novel = 0.0;
  double hm = 0.0;

  bool operator==(const RepeatRow&) const = default;
};

struct PromptAudit {
  std::string text_init, text_final;
  std::string vision_init, vision_final;
  bool text_untouched = false;
  bool vision_untouched = false;

  bool operator==(const PromptAudit&) const = default;
};

/// Everything a run or sweep reports. Accuracies are percentages at full
/// precision; wall-clock time lives outside the report so equal inputs give
/// byte-identical report.json files.
struct EvalReport {
  std::string kind = "run";  // "run" | "sweep"
  std::string config_fingerprint;
  std::string dataset_fingerprint;
  std::string backbone_checksum;
  bool backbone_unchanged = true;

  double base_accuracy = 0.0;
  double novel_accuracy = 0.0;
  double harmonic_mean = 0.0;
  double zs_base_accuracy = 0.0;
  double zs_novel_accuracy = 0.0;
  double zs_harmonic_mean = 0.0;

  std::vector<ClassAccuracy> per_class_base;
  std::vector<ClassAccuracy> per_class_novel;
  PromptAudit prompts;
  std::vector<RepeatRow> repeats;
  std::optional<SweepTable> sweep;
  nlohmann::json config;

  /// Rows for tables.csv / plotdata.csv: the sweep rows, or this run as one row.
  std::vector<SweepRow> table_rows() const;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport& o) const;
};

/// Builds a table with its aggregate rows.
SweepTable make_sweep_table(std::string axis, std::vector<SweepRow> rows, bool complete = true);

/// Writes report.json, tables.csv and plotdata.csv into `dir` (created if needed).
void emit_report(const EvalReport& report, const std::filesystem::path& dir);
EvalReport load_report(const std::filesystem::path& report_json);

/// CSV text, exposed for tests.
std::string tables_csv(const EvalReport& report);
std::string plotdata_csv(const EvalReport& report);

}  // namespace aple
