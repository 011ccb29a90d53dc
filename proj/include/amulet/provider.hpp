#pragma once

/**
 * @file provider.hpp
 * @brief Sources of next-token distributions, and the dual decoding context.
 *
 * A provider maps a token context to a LogDist over its vocabulary. Two
 * implementations ship: the in-process character n-gram model, and a client
 * for the remote logits wire protocol (see logits_server.hpp for the server
 * side and the exact JSON shapes).
 */

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amulet/distribution.hpp"
#include "amulet/ngram.hpp"

namespace amulet {

struct Token {
  TokenId id = 0;
  std::string text;

  friend bool operator==(const Token&, const Token&) = default;
};

using Context = std::vector<TokenId>;

class LogprobProvider {
 public:
  virtual ~LogprobProvider() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::optional<TokenId> eos_id() const = 0;
  virtual LogDist next_logprobs(std::span<const TokenId> context) const = 0;
  virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;
  /// Short human-readable identity, e.g. "toy:model.json".
  virtual std::string describe() const = 0;

  Token token(TokenId id) const {
    const TokenId one[] = {id};
    return Token{id, detokenize(one)};
  }
};

class NGramProvider final : public LogprobProvider {
 public:
  explicit NGramProvider(NGramModel model, std::string label = "toy");

  std::size_t vocab_size() const override { return model_.vocab().size(); }
  std::optional<TokenId> eos_id() const override { return model_.vocab().eos(); }
  LogDist next_logprobs(std::span<const TokenId> context) const override;
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::string describe() const override { return label_; }

  const NGramModel& model() const noexcept { return model_; }

 private:
  NGramModel model_;
  std::string label_;
};

struct RemoteOptions {
  std::string model = "default";
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds timeout{10000};
};

/**
 * Client for the remote logits protocol.
 *
 * Each call opens its own connection, so concurrent calls are independent.
 * Transport failures are retried with exponential backoff; after the last
 * attempt an Error{Transport} carrying the attempt count is thrown. A
 * response vector whose length differs from the session vocabulary size is an
 * Error{Protocol}. The vocabulary size and EOS id are fetched once from
 * GET /v1/info at construction.
 */
class RemoteProvider final : public LogprobProvider {
 public:
  explicit RemoteProvider(std::string base_url, RemoteOptions options = {});

  std::size_t vocab_size() const override { return vocab_size_; }
  std::optional<TokenId> eos_id() const override { return eos_id_; }
  LogDist next_logprobs(std::span<const TokenId> context) const override;
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::string describe() const override { return "remote:" + base_url_; }

 private:
  std::string post_json(const std::string& path, const std::string& body) const;
  std::string get(const std::string& path) const;

  std::string base_url_;
  RemoteOptions options_;
  std::size_t vocab_size_ = 0;
  std::optional<TokenId> eos_id_;
};

/// Parses "toy:PATH" or "remote:URL". Throws Error{InvalidArgument} for
/// anything else, Error{Io} if the toy model cannot be read.
std::shared_ptr<const LogprobProvider> make_provider(const std::string& spec,
                                                     RemoteOptions remote = {});

/**
 * The two contexts decoded in lockstep: (base prompt, preference prompt, s)
 * and (base prompt, s). Both share the generated suffix s by construction.
 */
class DualContext {
 public:
  DualContext(Context base_prompt, Context pref_prompt, Context suffix = {});

  Context pref_context() const;
  Context base_context() const;

  const Context& base_prompt() const noexcept { return base_prompt_; }
  const Context& pref_prompt() const noexcept { return pref_prompt_; }
  const Context& suffix() const noexcept { return suffix_; }

  /// Same generated suffix, new preference prompt.
  DualContext with_pref_prompt(Context pref_prompt) const;

  friend DualContext advance(const DualContext& dc, const Token& tok);

 private:
  Context base_prompt_;
  Context pref_prompt_;
  Context suffix_;
};

DualContext advance(const DualContext& dc, const Token& tok);

}  // namespace amulet
