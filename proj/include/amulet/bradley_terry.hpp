#pragma once

/// @file bradley_terry.hpp
/// @brief Win/tie/lose aggregation and Bradley-Terry strength estimation.

#include <cstddef>
#include <string>
#include <vector>

#include "amulet/judge.hpp"

namespace amulet {

/// wins(i, j) accumulates 1 per i-beats-j and 0.5 to both sides per tie.
class OutcomeMatrix {
 public:
  explicit OutcomeMatrix(std::size_t n);
  /// Row-major n*n. Diagonal must be zero, entries nonnegative and finite.
  static OutcomeMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return wins_[i * n_ + j]; }

  void record(std::size_t a, std::size_t b, Outcome outcome);
  void add(std::size_t i, std::size_t j, double amount);

  OutcomeMatrix scaled(double factor) const;

 private:
  std::size_t n_;
  std::vector<double> wins_;
};

struct BTScores {
  /// Log-strengths, mean-centered.
  std::vector<double> scores;
  std::size_t iterations = 0;
  /// True when the win graph was not strongly connected, so the plain
  /// maximum-likelihood estimate diverges and a small symmetric pseudo-count
  /// was added to every compared pair.
  bool regularized = false;
};

struct BTOptions {
  double damping = 0.5;
  double tol = 1e-10;
  std::size_t max_iterations = 1'000'000;
  /// Total pseudo-comparison weight added per compared pair when regularizing.
  double pseudo_count = 0.01;
};

/// Log-likelihood sum_{i != j} wins(i,j) * (s_i - log(e^{s_i} + e^{s_j})).
double bt_log_likelihood(const OutcomeMatrix& m, const std::vector<double>& scores);

/// Maximum-likelihood Bradley-Terry strengths by damped minorization-
/// maximization. Throws Error{InvalidArgument} if a system has no comparisons
/// and Error{Disconnected} (listing the components) if the comparison graph
/// is not connected.
BTScores bt_scores(const OutcomeMatrix& m, const BTOptions& options = {});

struct PairVerdict {
  std::string system_a;
  std::string system_b;
  std::string instance_id;
  Outcome outcome = Outcome::Tie;
};

struct WinRateRow {
  std::string system_a;
  std::string system_b;
  std::size_t count = 0;
  double win_pct = 0.0;
  double tie_pct = 0.0;
  double lose_pct = 0.0;
};

/// Per (a, b) pair, in first-seen order. Throws Error{InvalidArgument} on
/// empty input.
std::vector<WinRateRow> win_rate_table(const std::vector<PairVerdict>& verdicts);

}  // namespace amulet
