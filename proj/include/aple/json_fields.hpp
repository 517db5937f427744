// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <type_traits>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace aple {

/// Reads optional fields out of JSON objects, collecting every problem
/// instead of stopping at the first. Missing keys keep the caller's default.
class FieldReader {
 public:
  explicit FieldReader(std::vector<std::string>& issues) : issues_(issues) {}

  template <class T>
  void get(const nlohmann::json& obj, std::string_view prefix, const char* key, T& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    const nlohmann::json& v = obj.at(key);
    const std::string path = join(prefix, key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_unsigned_v<T>) {
        // Programmatic documents store small integers as signed.
        const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
        if (!ok) throw std::invalid_argument("expected a non-negative integer");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      issues_.push_back(path + ": " + e.what());
    }
  }

  /// Flags keys of `obj` outside `known`. Also flags `obj` itself if it is not an object.
  bool check_object(const nlohmann::json& obj, std::string_view prefix,
                    std::initializer_list<const char*> known) {
    if (!obj.is_object()) {
      issues_.push_back(std::string(prefix.empty() ? "config" : prefix) + ": expected an object");
      return false;
    }
    for (const auto& item : obj.items()) {
      bool found = false;
      for (const char* k : known) found = found || item.key() == k;
      if (!found) issues_.push_back(join(prefix, item.key()) + ": unknown field");
    }
    return true;
  }

  void fail(std::string message) { issues_.push_back(std::move(message)); }

  static std::string join(std::string_view prefix, std::string_view key) {
    if (prefix.empty()) return std::string(key);
    return std::string(prefix) + "." + std::string(key);
  }

 private:
  std::vector<std::string>& issues_;
};

}  // namespace aple
