// SPDX-License-Identifier: Apache-2.0
#include "aple/checksum.hpp"

#include <cstdio>

namespace aple {

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t e : t.shape()) {
    const std::uint64_t v = e;
    h = fnv1a64(std::as_bytes(std::span<const std::uint64_t>(&v, 1)), h);
  }
  return fnv1a64(std::as_bytes(t.data()), h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace aple
