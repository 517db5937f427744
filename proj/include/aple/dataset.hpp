// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "aple/image.hpp"

namespace aple {

enum class ShapeKind {
  disc,     // smooth filled circle
  square,   // filled axis-aligned square
  stripes,  // mid-frequency sinusoidal bands
  checker,  // high-frequency checkerboard
};

struct ClassRecipe {
  std::string name;  // used verbatim in "a photo of {class}"
  ShapeKind shape = ShapeKind::disc;
  std::array<float, 3> color{1.0f, 0.0f, 0.0f};
  double frequency = 0.0;  // cycles per pixel for stripes/checker; ignored otherwise
};

struct DatasetSpec {
  std::uint64_t seed = 2024;
  std::vector<ClassRecipe> classes;
  std::vector<std::size_t> base;
  std::vector<std::size_t> novel;
  std::size_t shots = 16;            // training images per base class
  std::size_t eval_per_class = 64;   // evaluation images per class
  std::size_t image_side = 32;
  std::size_t channels = 3;
  double noise = 0.10;               // pixel noise std
  double color_jitter = 0.12;        // per-image foreground tint shift

  /// 8 classes, 4 base / 4 novel.
  static DatasetSpec desk();

  std::vector<std::string> class_names() const;
  std::vector<std::string> base_names() const;
  std::vector<std::string> novel_names() const;

  /// Throws ConfigError listing every problem, including a base/novel
  /// partition that overlaps or leaves a class out.
  void validate() const;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct Sample {
  ImageGrid image;
  std::size_t label = 0;  // index into DatasetSpec::classes
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;  // base classes only, `shots` each
  std::vector<Sample> eval;   // every class, `eval_per_class` each

  /// Hash of the spec and every pixel.
  std::uint64_t fingerprint() const;
};

/// Rendering knobs that do not change class identity. The backbone warm-up
/// draws from a shifted style so its images never coincide with the dataset's.
struct RenderStyle {
  double noise_scale = 1.0;
  double jitter_scale = 1.0;
};

Dataset generate_dataset(const DatasetSpec& spec);

/// Renders image `index` of class `cls` in stream `stream`; deterministic in
/// (spec.seed, stream, cls, index).
ImageGrid render_image(const DatasetSpec& spec, std::size_t cls, std::uint64_t stream,
                       std::size_t index, const RenderStyle& style = {});

/// Pixel-space nearest-centroid accuracy over all classes: centroids from the
/// first half of each class's eval images, scored on the second half.
double nearest_centroid_accuracy(const Dataset& ds);

/// Writes train/ and eval/ image files plus dataset.json (spec and labels).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

const char* to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

}  // namespace aple
