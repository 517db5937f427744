// SPDX-License-Identifier: Apache-2.0
#include "aple/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "aple/checksum.hpp"
#include "aple/error.hpp"
#include "aple/json_fields.hpp"
#include "aple/rng.hpp"

namespace aple {
namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvalStream = 2;


ClassRecipe recipe(const char* color_name, std::array<float, 3> rgb, ShapeKind shape,
                   double frequency) {
  return {std::string(color_name) + " " + to_string(shape), shape, rgb, frequency};
}

std::vector<std::string> names_of(const DatasetSpec& s, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(s.classes.at(i).name);
  return out;
}

bool inside(const ClassRecipe& r, double x, double y, const std::array<double, 4>& geo) {
  switch (r.shape) {
    case ShapeKind::disc: {
      const double dx = x - geo[0], dy = y - geo[1];
      return dx * dx + dy * dy <= geo[2] * geo[2];
    }
    case ShapeKind::square:
      return std::abs(x - geo[0]) <= geo[2] && std::abs(y - geo[1]) <= geo[2];
    case ShapeKind::stripes: {
      // geo[2] holds the orientation angle, geo[3] the phase.
      const double t = x * std::cos(geo[2]) + y * std::sin(geo[2]);
      return std::sin(2.0 * std::numbers::pi * r.frequency * t + geo[3]) > 0.0;
    }
    case ShapeKind::checker: {
      const double cell = 0.5 / r.frequency;
      const auto cx = static_cast<long>(std::floor((x + geo[0]) / cell));
      const auto cy = static_cast<long>(std::floor((y + geo[1]) / cell));
      return ((cx + cy) & 1) == 0;
    }
  }
  return false;
}

void write_samples(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   nlohmann::json& index) {
  std::filesystem::create_directories(dir);
  index = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.f32", i);
    save_image_f32(dir / name, samples[i].image);
    index.push_back({{"file", dir.filename().string() + "/" + name}, {"label", samples[i].label}});
  }
}

std::vector<Sample> read_samples(const std::filesystem::path& root, const nlohmann::json& index,
                                 std::size_t n_classes) {
  std::vector<Sample> out;
  for (const auto& e : index) {
    Sample s;
    s.image = load_image_f32(root / e.at("file").get<std::string>());
    s.label = e.at("label").get<std::size_t>();
    if (s.label >= n_classes) throw IoError("dataset label out of range in " + root.string());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

DatasetSpec DatasetSpec::desk() {
  DatasetSpec s;
  const std::array<float, 3> red{0.85f, 0.15f, 0.15f}, green{0.15f, 0.75f, 0.2f},
      blue{0.15f, 0.3f, 0.9f}, yellow{0.9f, 0.85f, 0.15f};
  s.classes = {
      recipe("red", red, ShapeKind::disc, 0.0),
      recipe("green", green, ShapeKind::stripes, 0.125),
      recipe("blue", blue, ShapeKind::checker, 0.25),
      recipe("yellow", yellow, ShapeKind::square, 0.0),
      recipe("red", red, ShapeKind::checker, 0.25),
      recipe("green", green, ShapeKind::square, 0.0),
      recipe("blue", blue, ShapeKind::disc, 0.0),
      recipe("yellow", yellow, ShapeKind::stripes, 0.125),
  };
  s.base = {0, 1, 2, 3};
  s.novel = {4, 5, 6, 7};
  return s;
}

std::vector<std::string> DatasetSpec::class_names() const {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

std::vector<std::string> DatasetSpec::base_names() const { return names_of(*this, base); }
std::vector<std::string> DatasetSpec::novel_names() const { return names_of(*this, novel); }

void DatasetSpec::validate() const {
  std::vector<std::string> issues;
  if (classes.size() < 2) issues.push_back("dataset.classes: need at least 2 classes");
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& c = classes[i];
    const std::string p = "dataset.classes[" + std::to_string(i) + "]";
    if (c.name.empty()) issues.push_back(p + ".name: must not be empty");
    if (!names.insert(c.name).second) issues.push_back(p + ".name: duplicate '" + c.name + "'");
    for (float v : c.color) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        issues.push_back(p + ".color: components must lie in [0, 1]");
        break;
      }
    }
    if ((c.shape == ShapeKind::stripes || c.shape == ShapeKind::checker) &&
        !(c.frequency > 0.0 && c.frequency <= 0.5)) {
      issues.push_back(p + ".frequency: must lie in (0, 0.5] for textured shapes");
    }
  }
  std::vector<int> seen(classes.size(), 0);
  auto mark = [&](const std::vector<std::size_t>& idx, const char* field) {
    if (idx.empty()) issues.push_back(std::string("dataset.") + field + ": must not be empty");
    for (std::size_t i : idx) {
      if (i >= classes.size()) {
        issues.push_back(std::string("dataset.") + field + ": class index " + std::to_string(i) +
                         " out of range");
      } else {
        ++seen[i];
      }
    }
  };
  mark(base, "base");
  mark(novel, "novel");
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] == 0) issues.push_back("dataset: class " + std::to_string(i) + " is in neither base nor novel");
    if (seen[i] > 1) issues.push_back("dataset: class " + std::to_string(i) + " is listed more than once in base/novel");
  }
  if (shots == 0) issues.push_back("train.shots: must be positive");
  if (eval_per_class < 2) issues.push_back("dataset.eval_per_class: must be at least 2");
  // Any side renders; the frequency adapter itself needs powers of two and
  // says so when it runs.
  if (image_side < 4) issues.push_back("dataset.image_side: must be >= 4");
  if (channels != 1 && channels != 3) issues.push_back("dataset.channels: must be 1 or 3");
  if (!(noise >= 0.0)) issues.push_back("dataset.noise: must be >= 0");
  if (!(color_jitter >= 0.0)) issues.push_back("dataset.color_jitter: must be >= 0");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : classes) {
    cls.push_back({{"name", c.name},
                   {"shape", to_string(c.shape)},
                   {"color", {c.color[0], c.color[1], c.color[2]}},
                   {"frequency", c.frequency}});
  }
  return {{"seed", seed},         {"classes", cls},
          {"base", base},         {"novel", novel},
          {"shots", shots},       {"eval_per_class", eval_per_class},
          {"image_side", image_side}, {"channels", channels},
          {"noise", noise},       {"color_jitter", color_jitter}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  std::vector<std::string> issues;
  FieldReader r(issues);
  DatasetSpec s = desk();
  if (r.check_object(j, "dataset",
                     {"seed", "classes", "base", "novel", "shots", "eval_per_class", "image_side",
                      "channels", "noise", "color_jitter"})) {
    r.get(j, "dataset", "seed", s.seed);
    r.get(j, "dataset", "base", s.base);
    r.get(j, "dataset", "novel", s.novel);
    r.get(j, "dataset", "shots", s.shots);
    r.get(j, "dataset", "eval_per_class", s.eval_per_class);
    r.get(j, "dataset", "image_side", s.image_side);
    r.get(j, "dataset", "channels", s.channels);
    r.get(j, "dataset", "noise", s.noise);
    r.get(j, "dataset", "color_jitter", s.color_jitter);
    if (j.contains("classes")) {
      s.classes.clear();
      const auto& arr = j.at("classes");
      if (!arr.is_array()) {
        r.fail("dataset.classes: expected an array");
      } else {
        for (std::size_t i = 0; i < arr.size(); ++i) {
          const std::string p = "dataset.classes[" + std::to_string(i) + "]";
          ClassRecipe c;
          std::string shape = "disc";
          std::vector<float> color{1.0f, 0.0f, 0.0f};
          if (!r.check_object(arr[i], p, {"name", "shape", "color", "frequency"})) continue;
          r.get(arr[i], p, "name", c.name);
          r.get(arr[i], p, "shape", shape);
          r.get(arr[i], p, "color", color);
          r.get(arr[i], p, "frequency", c.frequency);
          try {
            c.shape = shape_kind_from_string(shape);
          } catch (const ConfigError&) {
            r.fail(p + ".shape: unknown shape '" + shape + "'");
          }
          if (color.size() != 3) {
            r.fail(p + ".color: expected 3 components");
          } else {
            c.color = {color[0], color[1], color[2]};
          }
          s.classes.push_back(std::move(c));
        }
      }
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return s;
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = fnv1a64(spec.to_json().dump());
  auto mix = [&](const std::vector<Sample>& v) {
    for (const Sample& s : v) {
      h = fnv1a64(std::as_bytes(std::span<const float>(s.image.pixels)), h);
      const std::uint64_t label = s.label;
      h = fnv1a64(std::as_bytes(std::span<const std::uint64_t>(&label, 1)), h);
    }
  };
  mix(train);
  mix(eval);
  return h;
}

ImageGrid render_image(const DatasetSpec& spec, std::size_t cls, std::uint64_t stream,
                       std::size_t index, const RenderStyle& style) {
  const ClassRecipe& r = spec.classes.at(cls);
  Rng rng(derive_seed(spec.seed, {stream, cls, index}));
  const std::size_t n = spec.image_side;
  const double side = static_cast<double>(n);
  const double span = side / 8.0;  // position jitter and size range scale with the image

  const double bg = 0.35 + 0.3 * rng.uniform();
  std::array<double, 3> fg{};
  const double tint = spec.color_jitter * style.jitter_scale;
  for (std::size_t c = 0; c < 3; ++c) {
    fg[c] = std::clamp(static_cast<double>(r.color[c]) + tint * rng.normal(0.0, 1.0), 0.0, 1.0);
  }

  std::array<double, 4> geo{};
  switch (r.shape) {
    case ShapeKind::disc:
      geo = {side / 2 + span * (2 * rng.uniform() - 1), side / 2 + span * (2 * rng.uniform() - 1),
             side * (0.22 + 0.12 * rng.uniform()), 0.0};
      break;
    case ShapeKind::square:
      geo = {side / 2 + span * (2 * rng.uniform() - 1), side / 2 + span * (2 * rng.uniform() - 1),
             side * (0.18 + 0.12 * rng.uniform()), 0.0};
      break;
    case ShapeKind::stripes: {
      const double angle = (rng.below(2) ? 0.5 * std::numbers::pi : 0.0) + 0.2 * (2 * rng.uniform() - 1);
      geo = {0.0, 0.0, angle, 2.0 * std::numbers::pi * rng.uniform()};
      break;
    }
    case ShapeKind::checker:
      geo = {static_cast<double>(rng.below(4)), static_cast<double>(rng.below(4)), 0.0, 0.0};
      break;
  }

  const double noise = spec.noise * style.noise_scale;
  ImageGrid img = ImageGrid::zeros(n, n, spec.channels);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const bool on = inside(r, x + 0.5, y + 0.5, geo);
      for (std::size_t c = 0; c < spec.channels; ++c) {
        // Grey images take the luminance of the foreground colour.
        const double base = on ? (spec.channels == 3 ? fg[c] : (fg[0] + fg[1] + fg[2]) / 3.0) : bg;
        const double v = base + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  for (std::size_t cls : spec.base) {
    for (std::size_t i = 0; i < spec.shots; ++i) {
      ds.train.push_back({render_image(spec, cls, kTrainStream, i), cls});
    }
  }
  for (std::size_t cls = 0; cls < spec.classes.size(); ++cls) {
    for (std::size_t i = 0; i < spec.eval_per_class; ++i) {
      ds.eval.push_back({render_image(spec, cls, kEvalStream, i), cls});
    }
  }
  return ds;
}

double nearest_centroid_accuracy(const Dataset& ds) {
  const std::size_t C = ds.spec.classes.size();
  std::vector<std::vector<const Sample*>> by_class(C);
  for (const Sample& s : ds.eval) by_class[s.label].push_back(&s);
  const std::size_t dim = ds.eval.at(0).image.pixels.size();
  std::vector<std::vector<double>> centroid(C, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t half = by_class[c].size() / 2;
    if (half == 0) throw UsageError("nearest_centroid_accuracy: class with fewer than 2 images");
    for (std::size_t i = 0; i < half; ++i) {
      const auto& px = by_class[c][i]->image.pixels;
      for (std::size_t k = 0; k < dim; ++k) centroid[c][k] += px[k];
    }
    for (double& v : centroid[c]) v /= static_cast<double>(half);
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = by_class[c].size() / 2; i < by_class[c].size(); ++i) {
      const auto& px = by_class[c][i]->image.pixels;
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < C; ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double diff = px[j] - centroid[k][j];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      correct += best == c;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  nlohmann::json j;
  j["spec"] = ds.spec.to_json();
  j["fingerprint"] = hex64(ds.fingerprint());
  write_samples(dir / "train", ds.train, j["train"]);
  write_samples(dir / "eval", ds.eval, j["eval"]);
  std::ofstream out(dir / "dataset.json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw IoError("cannot read " + (dir / "dataset.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("dataset.json: " + std::string(e.what()));
  }
  Dataset ds;
  ds.spec = DatasetSpec::from_json(j.at("spec"));
  ds.spec.validate();
  ds.train = read_samples(dir, j.at("train"), ds.spec.classes.size());
  ds.eval = read_samples(dir, j.at("eval"), ds.spec.classes.size());
  return ds;
}

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::square: return "square";
    case ShapeKind::stripes: return "stripes";
    case ShapeKind::checker: return "checker";
  }
  return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "disc") return ShapeKind::disc;
  if (s == "square") return ShapeKind::square;
  if (s == "stripes") return ShapeKind::stripes;
  if (s == "checker") return ShapeKind::checker;
  throw ConfigError("unknown shape '" + s + "'");
}

}  // namespace aple
