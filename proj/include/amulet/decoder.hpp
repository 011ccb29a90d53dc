#pragma once

/**
 * @file decoder.hpp
 * @brief Token-by-token generation with Base, Pref, LinearAlign and Amulet.
 *
 * Per token step:
 *   1. query pi_1 = P(. | base prompt, pref prompt, s) and/or
 *      pi_base = P(. | base prompt, s), depending on the method;
 *   2. transform (LinearAlign extrapolates once, Amulet runs optimize());
 *   3. sample from the result and append the token to both contexts.
 *
 * Decoding stops at max_new_tokens, on EOS when stop_on_eos is set, or when
 * cancellation is requested between steps. EOS is not part of the output.
 */

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <variant>
#include <vector>

#include "amulet/optimizer.hpp"
#include "amulet/provider.hpp"
#include "amulet/sampling.hpp"

namespace amulet {

namespace method {
struct Base {
  friend bool operator==(const Base&, const Base&) = default;
};
struct Pref {
  friend bool operator==(const Pref&, const Pref&) = default;
};
struct LinearAlign {
  double beta = 1.0;
  friend bool operator==(const LinearAlign&, const LinearAlign&) = default;
};
struct Amulet {
  AmuletParams params;
  friend bool operator==(const Amulet&, const Amulet&) = default;
};
}  // namespace method

using Method = std::variant<method::Base, method::Pref, method::LinearAlign, method::Amulet>;

/// "base", "pref", "la" or "amulet".
std::string method_name(const Method& m);
/// Name plus parameters, e.g. "amulet(alpha=2,lambda=2,eta=10,T=60)".
std::string method_label(const Method& m);
/// Throws Error{InvalidArgument} on non-finite beta or invalid Amulet params.
void validate(const Method& m);

enum class FinishReason { Length, Eos, Cancelled };
std::string to_string(FinishReason r);

struct GenerationRequest {
  std::string base_prompt;
  std::string pref_prompt;
  Method method = method::Amulet{};
  std::size_t max_new_tokens = 64;
  SamplingStrategy sampling;
  bool stop_on_eos = true;

  void validate() const;
};

struct StepRecord {
  std::size_t index = 0;
  Token token;
  std::string method;
  /// Amulet only: one entry per optimizer step.
  std::vector<StepDiagnostics> trace;
  std::size_t iters_run = 0;
  double final_kl_step = 0.0;
  /// KL(pi_1 || pi_base) when both distributions were queried.
  std::optional<double> kl_pi1_to_base;
  double wall_ms = 0.0;
  /// Identity of the steering state (method, params, pref prompt) used.
  std::string fingerprint;
};

struct GenerationResult {
  std::string text;
  std::vector<Token> tokens;
  std::vector<StepRecord> per_token;
  FinishReason finish_reason = FinishReason::Length;
};

/// normalize_log(pref + beta * (pref - base)).
LogDist linear_align_step(const LogDist& log_pi_pref, const LogDist& log_pi_base, double beta);

/**
 * Step-wise decoder. Owns the dual context and the sampler stream; the
 * steering state (method, preference prompt) may be replaced between steps.
 * Not thread-safe: one owner drives it.
 */
class Decoder {
 public:
  Decoder(std::shared_ptr<const LogprobProvider> provider, const GenerationRequest& request);

  bool finished() const noexcept { return finish_.has_value(); }
  std::optional<FinishReason> finish_reason() const noexcept { return finish_; }

  /// Produces the next token, or nullopt once decoding has ended.
  std::optional<StepRecord> step();
  void cancel();

  /// Index the next produced token will carry.
  std::size_t next_index() const noexcept { return result_.tokens.size(); }

  void set_method(Method m);
  /// Re-conditions the preference context; the generated suffix is kept.
  void set_pref_prompt(const std::string& pref_prompt);

  const Method& method() const noexcept { return method_; }
  const std::string& pref_prompt() const noexcept { return pref_text_; }
  std::string fingerprint() const;

  const GenerationResult& result() const noexcept { return result_; }
  GenerationResult take_result() { return std::move(result_); }

 private:
  LogDist step_distribution(StepRecord& rec) const;

  std::shared_ptr<const LogprobProvider> provider_;
  std::size_t max_new_tokens_;
  bool stop_on_eos_;
  Method method_;
  std::string pref_text_;
  DualContext ctx_;
  TokenSampler sampler_;
  GenerationResult result_;
  std::optional<FinishReason> finish_;
};

/// Runs a Decoder to completion. Cancellation is checked between steps.
GenerationResult generate(const GenerationRequest& request,
                          std::shared_ptr<const LogprobProvider> provider,
                          std::stop_token stop = {});

}  // namespace amulet
