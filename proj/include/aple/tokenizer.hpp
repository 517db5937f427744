// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aple {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kUnkToken = 1;
inline constexpr TokenId kEndToken = 2;
inline constexpr TokenId kFirstWordToken = 3;

inline constexpr std::string_view kClassTemplate = "a photo of {class}";

/// Lowercases and splits on whitespace and ASCII punctuation.
std::vector<std::string> split_words(std::string_view text);

/// Fixed word-level vocabulary. Word ids are assigned in sorted order after
/// the reserved PAD/UNK/END ids, so the same word set always yields the same ids.
class Vocabulary {
 public:
  Vocabulary() = default;
  static Vocabulary build(std::span<const std::string> words);
  /// Template words plus every word in the given class names.
  static Vocabulary for_classes(std::span<const std::string> class_names);

  TokenId id(std::string_view word) const;
  std::size_t size() const { return words_.size() + kFirstWordToken; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenizedQuery {
  std::vector<TokenId> ids;  // exactly max_len entries
  std::size_t end_position = 0;
  bool truncated = false;
};

/// words..., END, PAD... padded to max_len. Words beyond max_len - 1 are
/// dropped and `truncated` is set. Unknown words map to UNK.
TokenizedQuery tokenize(const Vocabulary& vocab, std::string_view text, std::size_t max_len);

/// "a photo of {class}" with the class name substituted.
std::string class_query(std::string_view class_name);

/// Tokenized hand-crafted queries, one per class, in class order.
struct ClassPromptSet {
  std::vector<std::string> class_names;
  std::vector<TokenizedQuery> queries;

  static ClassPromptSet build(const Vocabulary& vocab, std::span<const std::string> class_names,
                              std::size_t max_len);
  std::size_t size() const { return class_names.size(); }

  nlohmann::json to_json() const;
  static ClassPromptSet from_json(const nlohmann::json& j);
};

}  // namespace aple
