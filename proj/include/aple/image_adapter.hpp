// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "aple/image.hpp"

namespace aple {

/// Gaussian frequency filter followed by an alpha blend with the original.
///
/// Frequencies are taken on the centered, normalized grid: bin k of an
/// N-point axis maps to (k < N/2 ? k : k - N) / N, which lies in [-0.5, 0.5).
/// The filter gain at (u, v) is
///
///     G(u, v) = 1 / (2 pi sigma^2) * exp(-(u^2 + v^2) / (2 sigma^2))
///
/// and with normalize_peak the leading factor is dropped so G(0, 0) == 1.
struct AdapterConfig {
  double sigma = 0.05;
  double alpha = 0.9;
  bool normalize_peak = true;

  /// Throws ConfigError listing every invalid field.
  void validate() const;
};

/// Per-channel 2-D spectrum; bins[c * H * W + ky * W + kx], DC at (0, 0).
struct Spectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::complex<double>> bins;

  std::complex<double>& at(std::size_t c, std::size_t ky, std::size_t kx) {
    return bins[(c * height + ky) * width + kx];
  }
  const std::complex<double>& at(std::size_t c, std::size_t ky, std::size_t kx) const {
    return bins[(c * height + ky) * width + kx];
  }
};

/// Signed centered frequency index of bin k on an n-point axis.
long centered_index(std::size_t k, std::size_t n);

/// Unnormalized forward 2-D DFT per channel (radix-2; extents must be powers of two).
Spectrum fft2(const ImageGrid& img);
/// Inverse with the 1/(H*W) factor. Imaginary residue up to 1e-6 is dropped;
/// anything larger raises NumericError.
ImageGrid ifft2(const Spectrum& spec);

/// Filter gain at normalized frequency (u, v).
double gaussian_gain_at(double u, double v, const AdapterConfig& cfg);
/// Filter gain at signed centered frequency indices (fx along width, fy along
/// height) of an height x width grid.
double gaussian_gain(long fx, long fy, std::size_t height, std::size_t width,
                     const AdapterConfig& cfg);

Spectrum apply_filter(const Spectrum& spec, const AdapterConfig& cfg);

/// alpha * orig + (1 - alpha) * filtered, pixel-wise.
ImageGrid fuse(const ImageGrid& orig, const ImageGrid& filtered, double alpha);

/// fuse(img, ifft2(apply_filter(fft2(img), cfg)), cfg.alpha). No clamping.
ImageGrid adapt(const ImageGrid& img, const AdapterConfig& cfg);

}  // namespace aple
