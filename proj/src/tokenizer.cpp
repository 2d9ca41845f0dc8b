#include "kgst/tokenizer.hpp"

#include <algorithm>

namespace kgst {

namespace {

constexpr std::string_view kPunctuation = ".,?:";

bool is_punct_char(char c) {
  return kPunctuation.find(c) != std::string_view::npos;
}

const std::vector<std::string>& template_words() {
  static const std::vector<std::string> words = {
      "Which", "How",  "many",     "Are",   "there", "nodes", "that",
      "are",   "have", "a",        "as",    "neighbor", "who", "and",
      "in",    "the",  "graph",    "Nodes", "Edges", "is",    "yes",
      "no",    "none"};
  return words;
}

}  // namespace

bool Tokenizer::is_punctuation(const std::string& token) {
  return token.size() == 1 && is_punct_char(token[0]);
}

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else if (is_punct_char(c)) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
      words.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Tokenizer Tokenizer::build(std::span<const std::string> labels,
                           std::span<const std::string> relations,
                           int max_integer) {
  std::vector<std::string> vocab = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};
  auto push_unique = [&vocab](const std::string& word) {
    if (std::find(vocab.begin(), vocab.end(), word) == vocab.end()) {
      vocab.push_back(word);
    }
  };
  for (const auto& w : template_words()) push_unique(w);
  for (const auto& label : labels) {
    push_unique(label);
    push_unique(label + "s");
  }
  for (const auto& rel : relations) push_unique(rel);
  for (int i = 0; i <= max_integer; ++i) push_unique(std::to_string(i));
  for (char c : kPunctuation) push_unique(std::string(1, c));
  return from_vocab(std::move(vocab));
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab) {
  if (vocab.size() < 5 || vocab[0] != "<pad>" || vocab[1] != "<bos>" ||
      vocab[2] != "<eos>" || vocab[3] != "<sep>" || vocab[4] != "<unk>") {
    throw ConfigError("tokenizer vocab must start with the special tokens");
  }
  Tokenizer t;
  t.vocab_ = std::move(vocab);
  for (size_t i = 0; i < t.vocab_.size(); ++i) {
    if (!t.index_.emplace(t.vocab_[i], static_cast<int>(i)).second) {
      throw ConfigError("tokenizer vocab has duplicate word: " + t.vocab_[i]);
    }
  }
  return t;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& word : split_words(text)) {
    const auto it = index_.find(word);
    ids.push_back(it == index_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    const std::string& word = token(id);
    if (!out.empty() && !is_punctuation(word)) out.push_back(' ');
    out += word;
  }
  return out;
}

int Tokenizer::token_id(const std::string& word) const {
  const auto it = index_.find(word);
  if (it == index_.end()) throw LookupError("word not in vocabulary: " + word);
  return it->second;
}

bool Tokenizer::contains(const std::string& word) const {
  return index_.count(word) > 0;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= vocab_size()) {
    throw LookupError("token id out of range: " + std::to_string(id));
  }
  return vocab_[static_cast<size_t>(id)];
}

bool Tokenizer::any_unknown(std::span<const int> ids) const {
  return std::any_of(ids.begin(), ids.end(), [](int id) { return id == kUnk; });
}

}  // namespace kgst
