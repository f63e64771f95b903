#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "forge/embedding.hpp"
#include "forge/error.hpp"
#include "forge/utf8.hpp"

namespace forge::text {

enum class TokenizeMode {
  word_split,     // lowercase, split on whitespace/punctuation, punctuation dropped
  wer_normalized, // word_split plus Arabic orthographic normalization
};

/// Ordered sequence of normalized, non-empty tokens.
class TokenSeq {
public:
  TokenSeq() = default;

  /// Build from already-normalized tokens (test fixtures, oracles). Rejects
  /// empty tokens so the no-empty-token invariant holds for every instance.
  static TokenSeq of(std::vector<std::string> tokens) {
    for (const auto &t : tokens) require(!t.empty(), "TokenSeq: empty token");
    TokenSeq s;
    s.tokens_ = std::move(tokens);
    return s;
  }
  static TokenSeq of(std::initializer_list<std::string_view> tokens) {
    return of(std::vector<std::string>(tokens.begin(), tokens.end()));
  }

  [[nodiscard]] const std::vector<std::string> &tokens() const { return tokens_; }
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] bool empty() const { return tokens_.empty(); }
  [[nodiscard]] const std::string &operator[](std::size_t i) const { return tokens_[i]; }
  [[nodiscard]] auto begin() const { return tokens_.begin(); }
  [[nodiscard]] auto end() const { return tokens_.end(); }

  [[nodiscard]] std::set<std::string> as_set() const { return {tokens_.begin(), tokens_.end()}; }

  friend bool operator==(const TokenSeq &, const TokenSeq &) = default;

private:
  friend TokenSeq tokenize(std::string_view, TokenizeMode);
  std::vector<std::string> tokens_;
};

namespace detail {

constexpr bool is_apostrophe(char32_t c) { return c == U'\'' || c == 0x2019; }

constexpr char32_t normalize_arabic(char32_t c) {
  switch (c) {
  case 0x0622: // alef with madda
  case 0x0623: // alef with hamza above
  case 0x0625: // alef with hamza below
  case 0x0671: // alef wasla
    return 0x0627;
  case 0x0629: // teh marbuta
    return 0x0647;
  default:
    return c;
  }
}

} // namespace detail

/// Split text into normalized word tokens.
///
/// An apostrophe between two word characters stays inside the token, so
/// contractions such as "I've" count as one word.
inline TokenSeq tokenize(std::string_view input, TokenizeMode mode = TokenizeMode::word_split) {
  const auto cps = utf8::decode(input);
  TokenSeq seq;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) seq.tokens_.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    char32_t c = cps[i];
    if (mode == TokenizeMode::wer_normalized && utf8::is_arabic_diacritic(c)) continue;
    if (c == 0x0640) continue; // tatweel never separates words
    if (utf8::is_word_char(c)) {
      c = utf8::to_lower(c);
      if (mode == TokenizeMode::wer_normalized) c = detail::normalize_arabic(c);
      utf8::append(current, c);
    } else if (detail::is_apostrophe(c) && !current.empty() && i + 1 < cps.size() &&
               utf8::is_word_char(cps[i + 1])) {
      current.push_back('\'');
    } else {
      flush();
    }
  }
  flush();
  return seq;
}

/// Word error rate: minimal (substitutions + insertions + deletions) over
/// the reference length. Values above 1 are possible.
inline double wer(const TokenSeq &reference, const TokenSeq &hypothesis) {
  require(!reference.empty(), "wer: empty reference");
  const std::size_t n = reference.size();
  const std::size_t m = hypothesis.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(n);
}

/// Convenience: WER between two surface strings under the wer-normalized tokenizer.
inline double wer(std::string_view reference, std::string_view hypothesis) {
  return wer(tokenize(reference, TokenizeMode::wer_normalized),
             tokenize(hypothesis, TokenizeMode::wer_normalized));
}

/// Token-set Jaccard overlap. Two empty sets score 0.
inline double jaccard(const TokenSeq &a, const TokenSeq &b) {
  const auto sa = a.as_set();
  const auto sb = b.as_set();
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto &t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double cosine(const EmbeddingVector &a, const EmbeddingVector &b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::precondition, "cosine: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::precondition, "cosine: zero vector");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

inline std::size_t count_words(std::string_view s) { return tokenize(s).size(); }

} // namespace forge::text
