#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgst/common.hpp"

namespace kgst {

// Word-level tokenizer: words are maximal runs of non-space, non-punctuation
// characters; the punctuation characters . , ? : are single-character
// tokens. Decoding re-attaches punctuation to the preceding word, so
// encode(decode(ids)) == ids and decode(encode(text)) == text on
// canonically spaced in-vocabulary text.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;

  // Assembles the vocabulary covering the question templates, graph-text
  // serialization, canonical answers, the given label/relation vocabularies
  // (labels also in pluralized form) and the integers 0..max_integer.
  static Tokenizer build(std::span<const std::string> labels,
                         std::span<const std::string> relations,
                         int max_integer);
  static Tokenizer from_vocab(std::vector<std::string> vocab);

  const std::vector<std::string>& vocab() const { return vocab_; }
  int vocab_size() const { return static_cast<int>(vocab_.size()); }

  // Unknown words map to <unk>.
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  int token_id(const std::string& word) const;  // throws LookupError
  bool contains(const std::string& word) const;
  const std::string& token(int id) const;
  bool any_unknown(std::span<const int> ids) const;

  static std::vector<std::string> split_words(std::string_view text);
  static bool is_punctuation(const std::string& token);

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace kgst
