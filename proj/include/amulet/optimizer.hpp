#pragma once

/**
 * @file optimizer.hpp
 * @brief Per-token FTRL-proximal policy iteration.
 *
 * Each decoding position is treated as its own online-learning problem. With
 * pi_1 the preference-conditioned next-token distribution and pi_base the
 * unconditioned one, the utility at iterate t is
 *
 *     u_t(a) = alpha * (log pi_t(a) - log pi_base(a))
 *
 * and the next iterate maximizes
 *
 *     sum_{i<=t} <u_i, pi> - t*lambda*KL(pi || pi_1) - (1/eta)*KL(pi || pi_t)
 *
 * over the simplex. That maximizer has the closed form
 *
 *     pi_{t+1}(a) ∝ exp( (eta*U_t(a) + lambda*eta*t*log pi_1(a) + log pi_t(a))
 *                        / (t*lambda*eta + 1) )
 *
 * with U_t = sum_{i<=t} u_i, which is all closed_form_step() evaluates. The loop
 * runs for t = 1 .. T-1 and returns pi_T.
 */

#include <cstddef>
#include <span>
#include <vector>

#include "amulet/distribution.hpp"

namespace amulet {

struct AmuletParams {
  double alpha = 2.0;
  double lambda = 2.0;
  double eta = 10.0;
  /// T. The loop performs T - 1 update steps; T = 1 returns pi_1.
  std::size_t iterations = 60;
  /// Stop once KL(pi_{t+1} || pi_t) < early_stop_tol. 0 disables.
  double early_stop_tol = 0.0;

  /// Throws Error{InvalidArgument} unless alpha, lambda >= 0, eta > 0,
  /// iterations >= 1, early_stop_tol >= 0, all finite.
  void validate() const;

  friend bool operator==(const AmuletParams&, const AmuletParams&) = default;
};

struct IterState {
  std::size_t t = 1;
  LogDist log_pi_1;
  LogDist log_pi_base;
  LogDist log_pi_t;
  /// sum_{i<t} u_i before a step, sum_{i<=t} u_i after it.
  std::vector<double> cum_utility;

  /// State at t = 1: pi_t = pi_1, zero cumulative utility.
  static IterState initial(const LogDist& log_pi_1, const LogDist& log_pi_base);
};

struct StepDiagnostics {
  double step_kl = 0.0;       ///< KL(pi_{t+1} || pi_t)
  double utility_linf = 0.0;  ///< max_a |u_t(a)|
  double kl_to_pi1 = 0.0;     ///< KL(pi_{t+1} || pi_1)
};

struct OptResult {
  LogDist final;
  std::size_t iterations_run = 0;
  std::vector<StepDiagnostics> trace;
};

/// alpha * (log_pi_t - log_pi_base), elementwise. Not a distribution.
std::vector<double> utility(const LogDist& log_pi_t, const LogDist& log_pi_base,
                            double alpha);

/// One closed-form update: u_t from the current iterate is folded into
/// cum_utility, then pi_{t+1} replaces log_pi_t and t advances.
IterState closed_form_step(const IterState& state, const AmuletParams& params);

/// Runs closed_form_step params.iterations - 1 times (or until early stop).
OptResult optimize(const LogDist& log_pi_1, const LogDist& log_pi_base,
                   const AmuletParams& params);

/// Visits every iterate pi_1, pi_2, ..., pi_T; the callback receives the
/// state *after* each step. Shares the stepping code with optimize().
template <typename Fn>
void for_each_iterate(const LogDist& log_pi_1, const LogDist& log_pi_base,
                      const AmuletParams& params, std::size_t steps, Fn&& fn) {
  IterState s = IterState::initial(log_pi_1, log_pi_base);
  for (std::size_t i = 0; i < steps; ++i) {
    s = closed_form_step(s, params);
    fn(static_cast<const IterState&>(s));
  }
}

/**
 * FTRL-proximal objective at `candidate`:
 *
 *     sum_i <u_i, candidate> - t*lambda*KL(candidate || pi_1)
 *                            - (1/eta)*KL(candidate || pi_t)
 *
 * where t = history.size() >= 1.
 */
double objective_value(const LogDist& candidate,
                       std::span<const std::vector<double>> history,
                       const LogDist& log_pi_1, const LogDist& log_pi_t,
                       const AmuletParams& params);

// ----------------------------------------------------------------------------
// Numerical oracle
// ----------------------------------------------------------------------------

struct OracleOptions {
  double step_size = 0.1;
  std::size_t max_steps = 20000;
  double grad_tol = 1e-10;
};

/// Argmax of objective_value over the simplex by gradient ascent on
/// unconstrained logits (softmax parameterization). Independent of
/// closed_form_step; used only to check it. Throws Error{NonConvergence}
/// (message carries the final gradient norm) if max_steps is exhausted, and
/// Error{InvalidArgument} for vocabularies larger than 16.
LogDist oracle_optimize(std::span<const std::vector<double>> history,
                        const LogDist& log_pi_1, const LogDist& log_pi_t,
                        const AmuletParams& params, const OracleOptions& options = {});

}  // namespace amulet
