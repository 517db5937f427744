// SPDX-License-Identifier: Apache-2.0
#include "aple/image_adapter.hpp"

#include <cmath>
#include <numbers>

#include "aple/error.hpp"

namespace aple {
namespace {

constexpr double kMaxImagResidue = 1e-6;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT over `n` elements spaced by `stride`.
void fft1d(std::complex<double>* data, std::size_t n, std::size_t stride, bool inverse) {
  std::vector<std::complex<double>> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = data[i * stride];

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = a[i];
}

void fft2_inplace(Spectrum& s, bool inverse) {
  const std::size_t H = s.height, W = s.width;
  for (std::size_t c = 0; c < s.channels; ++c) {
    std::complex<double>* plane = s.bins.data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y) fft1d(plane + y * W, W, 1, inverse);
    for (std::size_t x = 0; x < W; ++x) fft1d(plane + x, H, W, inverse);
  }
}

}  // namespace

void AdapterConfig::validate() const {
  std::vector<std::string> issues;
  if (!(sigma > 0.0) || !std::isfinite(sigma)) issues.push_back("adapter.sigma must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) issues.push_back("adapter.alpha must be in [0, 1]");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

long centered_index(std::size_t k, std::size_t n) {
  return k < n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

Spectrum fft2(const ImageGrid& img) {
  if (!is_pow2(img.height) || !is_pow2(img.width)) {
    throw UsageError("fft2: extents must be powers of two, got " + std::to_string(img.height) +
                     "x" + std::to_string(img.width));
  }
  Spectrum s;
  s.height = img.height;
  s.width = img.width;
  s.channels = img.channels;
  s.bins.assign(img.pixels.begin(), img.pixels.end());
  fft2_inplace(s, false);
  return s;
}

ImageGrid ifft2(const Spectrum& spec) {
  if (!is_pow2(spec.height) || !is_pow2(spec.width)) {
    throw UsageError("ifft2: extents must be powers of two");
  }
  Spectrum s = spec;
  fft2_inplace(s, true);
  const double inv = 1.0 / static_cast<double>(s.height * s.width);
  ImageGrid img = ImageGrid::zeros(s.height, s.width, s.channels);
  for (std::size_t i = 0; i < s.bins.size(); ++i) {
    const double im = std::abs(s.bins[i].imag() * inv);
    if (im > kMaxImagResidue) {
      throw NumericError("ifft2: imaginary residue " + std::to_string(im) +
                         " exceeds tolerance; spectrum is not Hermitian");
    }
    img.pixels[i] = static_cast<float>(s.bins[i].real() * inv);
  }
  return img;
}

double gaussian_gain_at(double u, double v, const AdapterConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw ConfigError("adapter.sigma must be > 0");
  const double s2 = cfg.sigma * cfg.sigma;
  const double g = std::exp(-(u * u + v * v) / (2.0 * s2));
  return cfg.normalize_peak ? g : g / (2.0 * std::numbers::pi * s2);
}

double gaussian_gain(long fx, long fy, std::size_t height, std::size_t width,
                     const AdapterConfig& cfg) {
  const double u = static_cast<double>(fx) / static_cast<double>(width);
  const double v = static_cast<double>(fy) / static_cast<double>(height);
  return gaussian_gain_at(u, v, cfg);
}

Spectrum apply_filter(const Spectrum& spec, const AdapterConfig& cfg) {
  cfg.validate();
  Spectrum out = spec;
  for (std::size_t ky = 0; ky < spec.height; ++ky) {
    const long fy = centered_index(ky, spec.height);
    for (std::size_t kx = 0; kx < spec.width; ++kx) {
      const double g = gaussian_gain(centered_index(kx, spec.width), fy, spec.height, spec.width, cfg);
      for (std::size_t c = 0; c < spec.channels; ++c) out.at(c, ky, kx) *= g;
    }
  }
  return out;
}

ImageGrid fuse(const ImageGrid& orig, const ImageGrid& filtered, double alpha) {
  if (!orig.same_shape(filtered)) throw DimensionError("fuse: image shapes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fuse: alpha must be in [0, 1]");
  ImageGrid out = orig;
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<float>(alpha * orig.pixels[i] + beta * filtered.pixels[i]);
  }
  return out;
}

ImageGrid adapt(const ImageGrid& img, const AdapterConfig& cfg) {
  cfg.validate();
  return fuse(img, ifft2(apply_filter(fft2(img), cfg)), cfg.alpha);
}

}  // namespace aple
