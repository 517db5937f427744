// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aple/archive.hpp"
#include "aple/checksum.hpp"
#include "aple/error.hpp"
#include "aple/image.hpp"
#include "aple/image_adapter.hpp"
#include "aple/rng.hpp"

using namespace aple;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "aple-unit" / name;
  fs::create_directories(p.parent_path());
  return p;
}

ImageGrid random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  ImageGrid img = ImageGrid::zeros(h, w, c);
  for (float& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

std::complex<double> naive_dft(const ImageGrid& img, std::size_t c, std::size_t ky, std::size_t kx) {
  std::complex<double> acc = 0.0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double ang = -2.0 * M_PI *
                         (double(ky * y) / double(img.height) + double(kx * x) / double(img.width));
      acc += double(img.at(c, y, x)) * std::complex<double>(std::cos(ang), std::sin(ang));
    }
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------- archive

TEST(Archive, RoundTripIsBitwise) {
  Rng rng(1);
  std::vector<float> v(24);
  for (float& x : v) x = static_cast<float>(rng.normal(0, 1));
  v[3] = -0.0f;
  v[5] = 1e-40f;  // subnormal
  const std::vector<NamedTensor> entries = {{"a.w", Tensor({2, 3, 4}, v)},
                                            {"b", Tensor({1}, {3.25f})}};
  const fs::path p = scratch("roundtrip.apla");
  save_archive(p, entries);
  const auto back = load_archive(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "a.w");
  EXPECT_EQ(back[0].tensor.shape(), (Shape{2, 3, 4}));
  EXPECT_EQ(checksum(back[0].tensor), checksum(entries[0].tensor));
  EXPECT_EQ(find_tensor(back, "b").item(), 3.25f);
  EXPECT_FALSE(back[0].tensor.trainable());
  EXPECT_THROW(find_tensor(back, "missing"), IoError);
}

TEST(Archive, HeaderLayout) {
  const std::vector<NamedTensor> entries = {{"x", Tensor({2}, {1.0f, 2.0f})}};
  const std::string bytes = encode_archive(entries);
  // magic, version, count, name len, name, dtype, rank, extent, payload
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 1 + 1 + 1 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "APLA");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[16], 'x');
}

TEST(Archive, RejectsCorruptInput) {
  const std::vector<NamedTensor> entries = {{"x", Tensor({2}, {1.0f, 2.0f})}};
  std::string bytes = encode_archive(entries);
  EXPECT_THROW(decode_archive(bytes.substr(0, bytes.size() - 1)), IoError);
  EXPECT_THROW(decode_archive(bytes + "z"), IoError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_archive(bad_magic), IoError);
  const std::vector<NamedTensor> dup = {{"x", Tensor({1}, {1.0f})}, {"x", Tensor({1}, {2.0f})}};
  EXPECT_THROW(encode_archive(dup), UsageError);
  EXPECT_THROW(load_archive(scratch("does-not-exist.apla")), IoError);
}

// ---------------------------------------------------------------- images

TEST(Image, F32RoundTripWithSidecar) {
  const ImageGrid img = random_image(4, 8, 3, 2);
  const fs::path p = scratch("img.f32");
  save_image_f32(p, img);
  EXPECT_TRUE(fs::exists(p.string() + ".json"));
  const ImageGrid back = load_image_f32(p);
  EXPECT_EQ(back.height, 4u);
  EXPECT_EQ(back.width, 8u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Image, PnmImport) {
  const fs::path p = scratch("grey.pgm");
  {
    std::ofstream out(p);
    out << "P2\n# comment\n2 2\n255\n0 255\n51 102\n";
  }
  const ImageGrid g = load_pnm(p);
  ASSERT_EQ(g.channels, 1u);
  EXPECT_FLOAT_EQ(g.at(0, 0, 1), 1.0f);
  EXPECT_FLOAT_EQ(g.at(0, 1, 0), 0.2f);

  const ImageGrid rgb = random_image(4, 4, 3, 3);
  const fs::path q = scratch("rgb.ppm");
  save_pnm(q, rgb);
  const ImageGrid back = load_pnm(q);
  ASSERT_TRUE(back.same_shape(rgb));
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], rgb.pixels[i], 0.5 / 255 + 1e-6);
}

TEST(Image, ValidateRejectsOutOfRange) {
  ImageGrid img = ImageGrid::filled(2, 2, 1, 0.5f);
  EXPECT_NO_THROW(img.validate());
  img.pixels[1] = 1.5f;
  EXPECT_THROW(img.validate(), NumericError);
  img.pixels[1] = std::nanf("");
  EXPECT_THROW(img.validate(), NumericError);
  img.channels = 2;
  EXPECT_THROW(img.validate(), DimensionError);
}

// ---------------------------------------------------------------- adapter

TEST(Adapter, FftMatchesNaiveDft) {
  const ImageGrid img = random_image(16, 16, 3, 4);
  const Spectrum s = fft2(img);
  double worst = 0.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t ky = 0; ky < 16; ++ky)
      for (std::size_t kx = 0; kx < 16; ++kx) worst = std::max(worst, std::abs(s.at(c, ky, kx) - naive_dft(img, c, ky, kx)));
  EXPECT_LT(worst, 1e-4);
}

TEST(Adapter, NonSquareFftAndRoundTrip) {
  const ImageGrid img = random_image(8, 32, 1, 5);
  const Spectrum s = fft2(img);
  EXPECT_LT(std::abs(s.at(0, 3, 5) - naive_dft(img, 0, 3, 5)), 1e-4);
  const ImageGrid back = ifft2(s);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-6);
  EXPECT_THROW(fft2(ImageGrid::zeros(6, 8, 1)), UsageError);
}

TEST(Adapter, Parseval) {
  const ImageGrid img = random_image(16, 8, 1, 6);
  const Spectrum s = fft2(img);
  double space = 0.0, freq = 0.0;
  for (float p : img.pixels) space += double(p) * p;
  for (const auto& b : s.bins) freq += std::norm(b);
  EXPECT_NEAR(space, freq / (16.0 * 8.0), 1e-9 * space);
}

TEST(Adapter, GainFormula) {
  AdapterConfig lit;
  lit.normalize_peak = false;
  EXPECT_NEAR(gaussian_gain_at(0.0, 0.0, lit), 63.662, 0.001);
  EXPECT_EQ(gaussian_gain_at(0.0, 0.0, AdapterConfig{}), 1.0);
  const double u = 0.1, v = -0.05, s = 0.05;
  EXPECT_NEAR(gaussian_gain_at(u, v, AdapterConfig{}), std::exp(-(u * u + v * v) / (2 * s * s)), 1e-15);
  // Centered indices: bin k of n maps to k or k - n.
  EXPECT_EQ(centered_index(0, 8), 0);
  EXPECT_EQ(centered_index(3, 8), 3);
  EXPECT_EQ(centered_index(4, 8), -4);
  EXPECT_EQ(centered_index(7, 8), -1);
  EXPECT_DOUBLE_EQ(gaussian_gain(2, -1, 16, 8, AdapterConfig{}), gaussian_gain_at(2.0 / 8, -1.0 / 16, AdapterConfig{}));
}

TEST(Adapter, AlphaEndpoints) {
  const ImageGrid img = random_image(16, 16, 3, 7);
  AdapterConfig keep;
  keep.alpha = 1.0;
  EXPECT_EQ(adapt(img, keep).pixels, img.pixels);
  AdapterConfig filt;
  filt.alpha = 0.0;
  const ImageGrid low = adapt(img, filt);
  const ImageGrid ref = ifft2(apply_filter(fft2(img), filt));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(low.pixels[i], ref.pixels[i], 1e-6);
}

TEST(Adapter, LowPassPreservesMeanAndSmooths) {
  // A constant image is unchanged by the normalized filter; noise is damped.
  const ImageGrid flat = ImageGrid::filled(8, 8, 1, 0.3f);
  AdapterConfig cfg;
  cfg.alpha = 0.0;
  for (float p : adapt(flat, cfg).pixels) EXPECT_NEAR(p, 0.3f, 1e-6);
  const ImageGrid noisy = random_image(32, 32, 1, 8);
  const ImageGrid smooth = adapt(noisy, cfg);
  auto variance = [](const ImageGrid& g) {
    double m = 0.0, v = 0.0;
    for (float p : g.pixels) m += p / double(g.pixels.size());
    for (float p : g.pixels) v += (p - m) * (p - m);
    return v;
  };
  EXPECT_LT(variance(smooth), 0.5 * variance(noisy));
}

TEST(Adapter, ConfigValidation) {
  AdapterConfig bad;
  bad.sigma = 0.0;
  bad.alpha = 2.0;
  try {
    bad.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.issues().size(), 2u);
  }
}
