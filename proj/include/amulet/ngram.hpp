#pragma once

/**
 * @file ngram.hpp
 * @brief Character-level n-gram language model with add-k smoothing.
 *
 * Tokens are UTF-8 code points. The newline character is the end-of-sequence
 * token: every '\n' in a training corpus is counted as an EOS occurrence and
 * a generated EOS ends decoding. '\r' is dropped on input.
 *
 *     P(a | w) = (count(w, a) + k) / (count(w) + k * V)
 *
 * where w is the last min(order - 1, |context|) tokens. Windows never seen in
 * training therefore yield the uniform distribution.
 */

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amulet/distribution.hpp"

namespace amulet {

using TokenId = std::uint32_t;

/// Surface text of the end-of-sequence token.
inline constexpr std::string_view kEosText = "\n";

/// Characters of the fallback vocabulary used for an empty corpus.
std::vector<std::string> printable_ascii_vocab();

/// Splits UTF-8 text into code-point strings. Drops '\r'. Invalid sequences
/// are passed through byte by byte.
std::vector<std::string> split_utf8(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Builds from distinct non-EOS characters; EOS is appended last.
  explicit Vocabulary(std::vector<std::string> chars);

  std::size_t size() const noexcept { return texts_.size(); }
  TokenId eos() const noexcept { return static_cast<TokenId>(texts_.size() - 1); }
  const std::string& text(TokenId id) const;
  /// Throws Error{InvalidArgument} for characters outside the vocabulary.
  TokenId id(std::string_view piece) const;
  bool contains(std::string_view piece) const;
  const std::vector<std::string>& texts() const noexcept { return texts_; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> texts_;
  std::map<std::string, TokenId, std::less<>> index_;
};

class NGramModel {
 public:
  NGramModel(int order, double smoothing, Vocabulary vocab,
             std::map<std::string, std::vector<std::uint64_t>> counts);

  int order() const noexcept { return order_; }
  double smoothing() const noexcept { return smoothing_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  const std::map<std::string, std::vector<std::uint64_t>>& counts() const noexcept {
    return counts_;
  }

  /// Smoothed conditional distribution for the next token after `context`.
  LogDist next_logprobs(std::span<const TokenId> context) const;

  /// Window key for a context: concatenated text of its last order-1 tokens.
  std::string window_key(std::span<const TokenId> context) const;

  /// JSON document {order, smoothing, vocab, counts}.
  std::string to_json() const;
  static NGramModel from_json(std::string_view json_text);

  void save(const std::string& path) const;
  static NGramModel load(const std::string& path);

 private:
  int order_;
  double smoothing_;
  Vocabulary vocab_;
  std::map<std::string, std::vector<std::uint64_t>> counts_;
  std::map<std::string, std::uint64_t> totals_;
};

/// Trains a character model. order in [1, 5], smoothing > 0.
/// An empty corpus yields a uniform unigram model over printable ASCII + EOS.
/// A corpus with a single distinct token throws Error{DegenerateVocabulary}.
NGramModel train_ngram(std::string_view corpus, int order, double smoothing);

}  // namespace amulet
