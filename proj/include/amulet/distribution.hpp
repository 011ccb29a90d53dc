#pragma once

/**
 * @file distribution.hpp
 * @brief Log-space probability distributions over a finite vocabulary.
 *
 * A LogDist can only be obtained through normalize_log(), so every value in
 * circulation satisfies the simplex invariant: sum(exp(log_probs)) == 1 within
 * 1e-9, every entry finite, at least two entries. Entries are floored at
 * ln(1e-30) so that log differences downstream never see -inf.
 *
 * All arithmetic is double precision.
 */

#include <cstddef>
#include <span>
#include <vector>

namespace amulet {

/// ln(1e-30). Entries are clamped to at least this value.
inline constexpr double kLogProbFloor = -69.07755278982137;

/// Tolerance on |sum(exp(log_probs)) - 1|.
inline constexpr double kNormTolerance = 1e-9;

class LogDist {
 public:
  std::size_t size() const noexcept { return log_probs_.size(); }
  double operator[](std::size_t i) const { return log_probs_[i]; }
  std::span<const double> log_probs() const noexcept { return log_probs_; }

  /// Materialized probabilities exp(log_probs).
  std::vector<double> probs() const;

  friend bool operator==(const LogDist&, const LogDist&) = default;

 private:
  friend LogDist normalize_log(std::span<const double> raw_scores);
  friend LogDist shift_log(const LogDist& base, std::span<const double> delta);
  explicit LogDist(std::vector<double> lp) : log_probs_(std::move(lp)) {}

  std::vector<double> log_probs_;
};

/// log(sum(exp(x))) with max-shift; -inf entries contribute zero mass.
double logsumexp(std::span<const double> x);

/// raw - logsumexp(raw), floored and renormalized once.
/// Throws Error{EmptySupport} if every entry is -inf, Error{InvalidScore} on
/// NaN or +inf, Error{InvalidArgument} if fewer than two entries.
LogDist normalize_log(std::span<const double> raw_scores);

inline LogDist normalize_log(const std::vector<double>& raw_scores) {
  return normalize_log(std::span<const double>(raw_scores));
}

/// normalize_log(base + delta), computed as base + delta -
/// log1p(sum_a p(a) expm1(delta_a)) when every |delta_a| <= 1 so that a zero
/// offset returns `base` bit for bit. Falls back to normalize_log otherwise.
LogDist shift_log(const LogDist& base, std::span<const double> delta);

/// Convenience: build from plain (unnormalized, nonnegative) probabilities.
LogDist from_probs(std::span<const double> probs);

inline LogDist from_probs(const std::vector<double>& probs) {
  return from_probs(std::span<const double>(probs));
}

/// KL(p || q) = sum_a p(a) (log p(a) - log q(a)). Clamped at 0 from below.
double kl_divergence(const LogDist& p, const LogDist& q);

/// max_a |p(a) - q(a)| in probability space.
double linf_prob_gap(const LogDist& p, const LogDist& q);

/// Index of the largest entry; lowest index wins exact ties.
std::size_t argmax(std::span<const double> values);

/// Throws Error{LengthMismatch} unless a and b have equal size.
void require_same_size(std::size_t a, std::size_t b, const char* what);

// ----------------------------------------------------------------------------
// Normalization audit hook.
//
// When installed, the observer is invoked on every LogDist produced by
// normalize_log, from whichever thread produced it. Intended for test
// harnesses that assert the simplex invariant globally.
// ----------------------------------------------------------------------------

using LogDistObserver = void (*)(std::span<const double> log_probs);

void set_logdist_observer(LogDistObserver observer) noexcept;

}  // namespace amulet
