// SPDX-License-Identifier: Apache-2.0
#include "aple/report.hpp"

#include <cstdio>
#include <fstream>

#include "aple/error.hpp"

namespace aple {
namespace {

using nlohmann::json;

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Quotes a CSV field when it holds a separator or quote.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json agg_json(const Aggregate& a) { return {{"n", a.n}, {"mean", a.mean}, {"std", a.std}}; }

Aggregate agg_from(const json& j) {
  return {j.at("n").get<std::size_t>(), j.at("mean").get<double>(), j.at("std").get<double>()};
}

json classes_json(const std::vector<ClassAccuracy>& v) {
  json out = json::array();
  for (const auto& c : v) {
    out.push_back({{"name", c.name}, {"correct", c.correct}, {"total", c.total}, {"accuracy", c.accuracy}});
  }
  return out;
}

std::vector<ClassAccuracy> classes_from(const json& j) {
  std::vector<ClassAccuracy> out;
  for (const auto& c : j) {
    out.push_back({c.at("name").get<std::string>(), c.at("correct").get<std::size_t>(),
                   c.at("total").get<std::size_t>(), c.at("accuracy").get<double>()});
  }
  return out;
}

json row_json(const SweepRow& r) {
  return {{"value", r.value},     {"base", r.base},         {"novel", r.novel},
          {"hm", r.hm},           {"zs_base", r.zs_base},   {"zs_novel", r.zs_novel},
          {"zs_hm", r.zs_hm},     {"config_fingerprint", r.config_fingerprint},
          {"dataset_fingerprint", r.dataset_fingerprint}};
}

SweepRow row_from(const json& j) {
  SweepRow r;
  r.value = j.at("value").get<std::string>();
  r.base = j.at("base").get<double>();
  r.novel = j.at("novel").get<double>();
  r.hm = j.at("hm").get<double>();
  r.zs_base = j.at("zs_base").get<double>();
  r.zs_novel = j.at("zs_novel").get<double>();
  r.zs_hm = j.at("zs_hm").get<double>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  r.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  return r;
}

bool same(const Aggregate& a, const Aggregate& b) {
  return a.n == b.n && a.mean == b.mean && a.std == b.std;
}

bool same(const std::vector<ClassAccuracy>& a, const std::vector<ClassAccuracy>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].correct != b[i].correct || a[i].total != b[i].total ||
        a[i].accuracy != b[i].accuracy) {
      return false;
    }
  }
  return true;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

bool SweepTable::operator==(const SweepTable& o) const {
  return axis == o.axis && rows == o.rows && same(base, o.base) && same(novel, o.novel) &&
         same(hm, o.hm) && complete == o.complete;
}

std::vector<SweepRow> EvalReport::table_rows() const {
  if (sweep) return sweep->rows;
  return {{"run", base_accuracy, novel_accuracy, harmonic_mean, zs_base_accuracy, zs_novel_accuracy,
           zs_harmonic_mean, config_fingerprint, dataset_fingerprint}};
}

json EvalReport::to_json() const {
  json j;
  j["kind"] = kind;
  j["config_fingerprint"] = config_fingerprint;
  j["dataset_fingerprint"] = dataset_fingerprint;
  j["backbone_checksum"] = backbone_checksum;
  j["backbone_unchanged"] = backbone_unchanged;
  j["accuracy"] = {{"base", base_accuracy}, {"novel", novel_accuracy}, {"hm", harmonic_mean}};
  j["zero_shot"] = {{"base", zs_base_accuracy}, {"novel", zs_novel_accuracy}, {"hm", zs_harmonic_mean}};
  j["per_class"] = {{"base", classes_json(per_class_base)}, {"novel", classes_json(per_class_novel)}};
  j["prompts"] = {{"text_init", prompts.text_init},
                  {"text_final", prompts.text_final},
                  {"vision_init", prompts.vision_init},
                  {"vision_final", prompts.vision_final},
                  {"text_untouched", prompts.text_untouched},
                  {"vision_untouched", prompts.vision_untouched}};
  json reps = json::array();
  for (const auto& r : repeats) {
    reps.push_back({{"seed", r.seed}, {"base", r.base}, {"novel", r.novel}, {"hm", r.hm}});
  }
  j["repeats"] = reps;
  if (sweep) {
    json rows = json::array();
    for (const auto& r : sweep->rows) rows.push_back(row_json(r));
    j["sweep"] = {{"axis", sweep->axis},
                  {"rows", rows},
                  {"aggregate",
                   {{"base", agg_json(sweep->base)},
                    {"novel", agg_json(sweep->novel)},
                    {"hm", agg_json(sweep->hm)}}},
                  {"std_convention", "population"},
                  {"complete", sweep->complete}};
  } else {
    j["sweep"] = nullptr;
  }
  j["config"] = config;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  try {
    r.kind = j.at("kind").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    r.backbone_checksum = j.at("backbone_checksum").get<std::string>();
    r.backbone_unchanged = j.at("backbone_unchanged").get<bool>();
    r.base_accuracy = j.at("accuracy").at("base").get<double>();
    r.novel_accuracy = j.at("accuracy").at("novel").get<double>();
    r.harmonic_mean = j.at("accuracy").at("hm").get<double>();
    r.zs_base_accuracy = j.at("zero_shot").at("base").get<double>();
    r.zs_novel_accuracy = j.at("zero_shot").at("novel").get<double>();
    r.zs_harmonic_mean = j.at("zero_shot").at("hm").get<double>();
    r.per_class_base = classes_from(j.at("per_class").at("base"));
    r.per_class_novel = classes_from(j.at("per_class").at("novel"));
    const auto& p = j.at("prompts");
    r.prompts = {p.at("text_init").get<std::string>(),   p.at("text_final").get<std::string>(),
                 p.at("vision_init").get<std::string>(), p.at("vision_final").get<std::string>(),
                 p.at("text_untouched").get<bool>(),     p.at("vision_untouched").get<bool>()};
    for (const auto& x : j.at("repeats")) {
      r.repeats.push_back({x.at("seed").get<std::uint64_t>(), x.at("base").get<double>(),
                           x.at("novel").get<double>(), x.at("hm").get<double>()});
    }
    if (!j.at("sweep").is_null()) {
      const auto& s = j.at("sweep");
      SweepTable t;
      t.axis = s.at("axis").get<std::string>();
      for (const auto& row : s.at("rows")) t.rows.push_back(row_from(row));
      t.base = agg_from(s.at("aggregate").at("base"));
      t.novel = agg_from(s.at("aggregate").at("novel"));
      t.hm = agg_from(s.at("aggregate").at("hm"));
      t.complete = s.at("complete").get<bool>();
      r.sweep = std::move(t);
    }
    r.config = j.at("config");
  } catch (const json::exception& e) {
    throw IoError(std::string("report: ") + e.what());
  }
  return r;
}

bool EvalReport::operator==(const EvalReport& o) const {
  return kind == o.kind && config_fingerprint == o.config_fingerprint &&
         dataset_fingerprint == o.dataset_fingerprint && backbone_checksum == o.backbone_checksum &&
         backbone_unchanged == o.backbone_unchanged && base_accuracy == o.base_accuracy &&
         novel_accuracy == o.novel_accuracy && harmonic_mean == o.harmonic_mean &&
         zs_base_accuracy == o.zs_base_accuracy && zs_novel_accuracy == o.zs_novel_accuracy &&
         zs_harmonic_mean == o.zs_harmonic_mean && same(per_class_base, o.per_class_base) &&
         same(per_class_novel, o.per_class_novel) && prompts == o.prompts && repeats == o.repeats &&
         sweep == o.sweep && config == o.config;
}

SweepTable make_sweep_table(std::string axis, std::vector<SweepRow> rows, bool complete) {
  SweepTable t;
  t.axis = std::move(axis);
  t.rows = std::move(rows);
  t.complete = complete;
  if (!t.rows.empty()) {
    std::vector<double> b, n, h;
    for (const auto& r : t.rows) {
      b.push_back(r.base);
      n.push_back(r.novel);
      h.push_back(r.hm);
    }
    t.base = aggregate(b);
    t.novel = aggregate(n);
    t.hm = aggregate(h);
  }
  return t;
}

std::string tables_csv(const EvalReport& report) {
  std::string out = "point,value,base,novel,hm,zs_base,zs_novel,zs_hm,config_fingerprint\n";
  const auto rows = report.table_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += std::to_string(i) + "," + csv_field(r.value) + "," + fixed2(r.base) + "," +
           fixed2(r.novel) + "," + fixed2(r.hm) + "," + fixed2(r.zs_base) + "," +
           fixed2(r.zs_novel) + "," + fixed2(r.zs_hm) + "," + r.config_fingerprint + "\n";
  }
  // Aggregate rows (population std) close a sweep table.
  if (const auto& t = report.sweep) {
    out += "mean,," + fixed2(t->base.mean) + "," + fixed2(t->novel.mean) + "," + fixed2(t->hm.mean) + ",,,,\n";
    out += "std,," + fixed2(t->base.std) + "," + fixed2(t->novel.std) + "," + fixed2(t->hm.std) + ",,,,\n";
  }
  return out;
}

std::string plotdata_csv(const EvalReport& report) {
  std::string out = "x,hm\n";
  for (const auto& r : report.table_rows()) out += csv_field(r.value) + "," + sig6(r.hm) + "\n";
  return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "tables.csv", tables_csv(report));
  write_text(dir / "plotdata.csv", plotdata_csv(report));
}

EvalReport load_report(const std::filesystem::path& report_json) {
  std::ifstream in(report_json);
  if (!in) throw IoError("cannot read " + report_json.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError(report_json.string() + ": not valid JSON");
  return EvalReport::from_json(j);
}

}  // namespace aple
