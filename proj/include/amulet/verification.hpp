#pragma once

/// @file verification.hpp
/// @brief Randomized closed-form vs. numerical-oracle suite.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "amulet/optimizer.hpp"

namespace amulet {

/// A random point of the simplex (Dirichlet(1) via normalized exponentials).
LogDist random_logdist(std::mt19937_64& rng, std::size_t size);

struct OracleCase {
  std::size_t vocab = 2;
  std::size_t t = 1;
  AmuletParams params;
  LogDist log_pi_1;
  LogDist log_pi_base;
};

/// V in [2, 8], t in [1, 5], alpha, lambda in [0, 4], eta in [0.05, 10].
OracleCase random_oracle_case(std::mt19937_64& rng);

struct OracleCaseResult {
  double linf_gap = 0.0;
  /// Objective at every iterate pi_2..pi_{t+1} minus objective at the
  /// previous iterate, each evaluated with the history through that step.
  double min_objective_gain = 0.0;
};

/**
 * Follows the closed-form trajectory for t - 1 steps, keeping the utility
 * history, then compares one more closed-form step against oracle_optimize
 * on the same history. `denominator_scale` != 1 routes the final step
 * through the fault-injected variant.
 */
OracleCaseResult check_oracle_case(const OracleCase& c, double denominator_scale = 1.0);

struct OracleSuiteReport {
  std::size_t cases = 0;
  double max_linf_gap = 0.0;
  double min_objective_gain = 0.0;
  std::size_t failures = 0;  ///< cases with gap > tolerance
};

OracleSuiteReport run_oracle_suite(std::uint64_t seed, std::size_t cases, double tolerance = 1e-5,
                                   double denominator_scale = 1.0);

}  // namespace amulet
