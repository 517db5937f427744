// SPDX-License-Identifier: Apache-2.0
#include "aple/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "aple/error.hpp"

namespace aple {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary Vocabulary::build(std::span<const std::string> words) {
  std::set<std::string> unique;
  for (const auto& w : words) {
    for (auto& piece : split_words(w)) unique.insert(std::move(piece));
  }
  Vocabulary v;
  v.words_.assign(unique.begin(), unique.end());
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    v.index_.emplace(v.words_[i], static_cast<TokenId>(i + kFirstWordToken));
  }
  return v;
}

Vocabulary Vocabulary::for_classes(std::span<const std::string> class_names) {
  std::vector<std::string> words(class_names.begin(), class_names.end());
  words.emplace_back(kClassTemplate.substr(0, kClassTemplate.find('{')));
  return build(words);
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkToken : it->second;
}

TokenizedQuery tokenize(const Vocabulary& vocab, std::string_view text, std::size_t max_len) {
  if (max_len == 0) throw UsageError("tokenize: max_len must be positive");
  const auto words = split_words(text);
  TokenizedQuery q;
  q.ids.assign(max_len, kPadToken);
  const std::size_t keep = std::min(words.size(), max_len - 1);
  q.truncated = keep < words.size();
  for (std::size_t i = 0; i < keep; ++i) q.ids[i] = vocab.id(words[i]);
  q.ids[keep] = kEndToken;
  q.end_position = keep;
  return q;
}

std::string class_query(std::string_view class_name) {
  std::string q(kClassTemplate);
  const auto at = q.find("{class}");
  q.replace(at, 7, class_name);
  return q;
}

ClassPromptSet ClassPromptSet::build(const Vocabulary& vocab,
                                     std::span<const std::string> class_names,
                                     std::size_t max_len) {
  ClassPromptSet set;
  for (const auto& name : class_names) {
    set.class_names.push_back(name);
    set.queries.push_back(tokenize(vocab, class_query(name), max_len));
  }
  return set;
}

nlohmann::json ClassPromptSet::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    classes.push_back({{"name", class_names[i]},
                       {"tokens", queries[i].ids},
                       {"end_position", queries[i].end_position},
                       {"truncated", queries[i].truncated}});
  }
  return {{"template", kClassTemplate}, {"classes", classes}};
}

ClassPromptSet ClassPromptSet::from_json(const nlohmann::json& j) {
  ClassPromptSet set;
  for (const auto& c : j.at("classes")) {
    set.class_names.push_back(c.at("name").get<std::string>());
    TokenizedQuery q;
    q.ids = c.at("tokens").get<std::vector<TokenId>>();
    q.end_position = c.at("end_position").get<std::size_t>();
    q.truncated = c.value("truncated", false);
    if (q.end_position >= q.ids.size() || q.ids[q.end_position] != kEndToken) {
      throw UsageError("class prompt '" + set.class_names.back() + "' has no END token at its end_position");
    }
    set.queries.push_back(std::move(q));
  }
  return set;
}

}  // namespace aple
