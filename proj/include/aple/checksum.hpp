// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "aple/tensor.hpp"

namespace aple {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

/// Hash of a tensor's shape and exact float bit patterns.
std::uint64_t checksum(const Tensor& t);

std::string hex64(std::uint64_t v);

}  // namespace aple
