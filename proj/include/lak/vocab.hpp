#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lak/errors.hpp"

namespace lak {

namespace detail {

inline bool is_ascii_punct(unsigned char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

inline bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace detail

/// Lowercased whitespace tokenization with each ASCII punctuation
/// character emitted as its own token. Bytes >= 0x80 are treated as word
/// characters so UTF-8 text passes through unmangled.
inline std::vector<std::string> tokenize(const std::string& text) {
  if (text.empty()) throw ValueError("tokenize: empty text");
  std::vector<std::string> out;
  std::string word;
  auto flush = [&]() {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (detail::is_ascii_space(c)) {
      flush();
    } else if (detail::is_ascii_punct(c)) {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    } else {
      if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
      word.push_back(static_cast<char>(c));
    }
  }
  flush();
  if (out.empty()) throw ValueError("tokenize: text contains no tokens");
  return out;
}

/// Token -> dense id map with reserved padding (0) and unknown (1) slots.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary() {
    tokens_ = {"<pad>", "<unk>"};
    rebuild_index();
  }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[kPad] != "<pad>" || tokens_[kUnk] != "<unk>")
      throw ValueError("Vocabulary: ids 0 and 1 must be <pad> and <unk>");
    rebuild_index();
  }

  /// Builds from a token corpus: most frequent first, ties by token text,
  /// truncated to max_size (including the two reserved slots).
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t max_size) {
    if (max_size < 3) throw ValueError("Vocabulary::build: max_size must be at least 3");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& doc : corpus)
      for (const auto& tok : doc) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::vector<std::string> tokens = {"<pad>", "<unk>"};
    for (const auto& [tok, n] : sorted) {
      if (tokens.size() >= max_size) break;
      tokens.push_back(tok);
    }
    return Vocabulary(std::move(tokens));
  }

  std::size_t size() const { return tokens_.size(); }

  std::size_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& toks) const {
    std::vector<std::size_t> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  /// One token per line; the line number is the id.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

 private:
  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
    if (index_.size() != tokens_.size()) throw ValueError("Vocabulary: duplicate tokens");
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace lak
