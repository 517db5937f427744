// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aple/tensor.hpp"

namespace aple {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Named-tensor archive, version 1. All integers little-endian.
//
//   offset  size  field
//   0       4     magic "APLA"
//   4       4     u32 version (= 1)
//   8       4     u32 entry count N
//   then N header entries, each:
//           4     u32 name length L
//           L     name bytes (UTF-8, no terminator)
//           1     u8 dtype (0 = float32)
//           1     u8 rank R (>= 1)
//           8*R   u64 extents, outermost first
//   then N payloads in header order, each prod(extents) float32 values,
//   row-major, IEEE-754 little-endian, no padding between payloads.
//
// Names must be unique and non-empty. Loaded tensors are not trainable.

std::string encode_archive(std::span<const NamedTensor> entries);
std::vector<NamedTensor> decode_archive(std::string_view bytes);

void save_archive(const std::filesystem::path& path, std::span<const NamedTensor> entries);
std::vector<NamedTensor> load_archive(const std::filesystem::path& path);

/// Looks up an entry by name; throws IoError if absent.
const Tensor& find_tensor(std::span<const NamedTensor> entries, std::string_view name);

}  // namespace aple
