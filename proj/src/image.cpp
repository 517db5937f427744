// SPDX-License-Identifier: Apache-2.0
#include "aple/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "aple/error.hpp"

namespace aple {

ImageGrid ImageGrid::zeros(std::size_t height, std::size_t width, std::size_t channels) {
  return filled(height, width, channels, 0.0f);
}

ImageGrid ImageGrid::filled(std::size_t height, std::size_t width, std::size_t channels, float v) {
  ImageGrid img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.assign(height * width * channels, v);
  return img;
}

void ImageGrid::validate() const {
  if (height == 0 || width == 0) throw DimensionError("image has zero extent");
  if (channels != 1 && channels != 3) {
    throw DimensionError("image channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (pixels.size() != height * width * channels) {
    throw DimensionError("image pixel count does not match extents");
  }
  for (float v : pixels) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw NumericError("image pixel outside [0, 1]: " + std::to_string(v));
    }
  }
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_image_f32(const std::filesystem::path& path, const ImageGrid& img) {
  std::string bytes;
  bytes.reserve(img.pixels.size() * 4);
  for (float v : img.pixels) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

  nlohmann::json meta = {{"height", img.height}, {"width", img.width}, {"channels", img.channels}};
  std::ofstream m(sidecar(path), std::ios::trunc);
  if (!m) throw IoError("cannot write sidecar for " + path.string());
  m << meta.dump(2) << '\n';
}

ImageGrid load_image_f32(const std::filesystem::path& path) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_all(sidecar(path)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad image sidecar for " + path.string() + ": " + e.what());
  }
  ImageGrid img;
  img.height = meta.at("height").get<std::size_t>();
  img.width = meta.at("width").get<std::size_t>();
  img.channels = meta.at("channels").get<std::size_t>();
  const std::string bytes = read_all(path);
  if (bytes.size() != img.height * img.width * img.channels * 4) {
    throw IoError("image payload size does not match sidecar: " + path.string());
  }
  img.pixels.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) {
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    }
    img.pixels[i] = std::bit_cast<float>(u);
  }
  img.validate();
  return img;
}

ImageGrid load_pnm(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  std::size_t pos = 0;
  // Header tokens, skipping whitespace and '#' comments.
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw IoError("truncated PNM header: " + path.string());
    return bytes.substr(start, pos - start);
  };
  auto number = [&]() {
    const std::string t = token();
    try {
      return static_cast<std::size_t>(std::stoul(t));
    } catch (const std::exception&) {
      throw IoError("bad PNM header value '" + t + "' in " + path.string());
    }
  };

  const std::string magic = token();
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    throw IoError("unsupported PNM type '" + magic + "' in " + path.string());
  }
  const bool rgb = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  const std::size_t w = number(), h = number(), maxval = number();
  if (maxval == 0 || maxval > 65535) throw IoError("bad PNM maxval in " + path.string());

  ImageGrid img = ImageGrid::zeros(h, w, rgb ? 3 : 1);
  const std::size_t n = h * w * img.channels;
  std::vector<std::size_t> raw(n);
  if (binary) {
    ++pos;  // single whitespace byte after maxval
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (bytes.size() - pos < n * bps) throw IoError("truncated PNM payload: " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bps);
      raw[i] = bps == 2 ? (static_cast<std::size_t>(p[0]) << 8) | p[1] : p[0];
    }
  } else {
    for (auto& v : raw) v = number();
  }
  // Interleaved samples to planar floats.
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        const std::size_t v = raw[(y * w + x) * img.channels + c];
        if (v > maxval) throw IoError("PNM sample exceeds maxval in " + path.string());
        img.at(c, y, x) = static_cast<float>(v) / static_cast<float>(maxval);
      }
    }
  }
  return img;
}

void save_pnm(const std::filesystem::path& path, const ImageGrid& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    }
  }
}

}  // namespace aple
