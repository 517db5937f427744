// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace aple {

/// Planar float image: pixels[c * H * W + y * W + x].
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  static ImageGrid zeros(std::size_t height, std::size_t width, std::size_t channels);
  static ImageGrid filled(std::size_t height, std::size_t width, std::size_t channels, float v);

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  bool same_shape(const ImageGrid& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  /// Ingestion check: extents consistent, channels in {1, 3}, all pixels
  /// finite and within [0, 1]. Throws DimensionError / NumericError.
  void validate() const;
};

/// Flat binary float32 (little-endian, planar) plus a JSON sidecar at
/// `<path>.json` holding {"height", "width", "channels"}.
void save_image_f32(const std::filesystem::path& path, const ImageGrid& img);
ImageGrid load_image_f32(const std::filesystem::path& path);

/// Netpbm import: P2/P5 (grey) and P3/P6 (RGB), maxval up to 65535.
ImageGrid load_pnm(const std::filesystem::path& path);
/// Writes P5 or P6 with maxval 255; values are clamped to [0, 1] for display.
void save_pnm(const std::filesystem::path& path, const ImageGrid& img);

}  // namespace aple
