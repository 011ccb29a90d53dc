/// @file oracle.cpp
/// @brief Brute-force argmax of the FTRL-proximal objective.
///
/// Deliberately knows nothing about the closed form: it evaluates the gradient
/// of the objective with respect to pi and ascends on unconstrained logits.
/// The logit gradient is preconditioned by the inverse softmax Fisher metric
/// (divide by pi) and the objective is scaled by its curvature
/// t*lambda + 1/eta, so a fixed step size converges at a rate independent of
/// how small the smallest probability gets.

#include <cmath>
#include <sstream>

#include "amulet/error.hpp"
#include "amulet/optimizer.hpp"

namespace amulet {

LogDist oracle_optimize(std::span<const std::vector<double>> history,
                        const LogDist& log_pi_1, const LogDist& log_pi_t,
                        const AmuletParams& params, const OracleOptions& options) {
  const std::size_t n = log_pi_1.size();
  require_same_size(n, log_pi_t.size(), "oracle_optimize");
  if (n > 16) {
    throw Error(ErrorKind::InvalidArgument, "oracle_optimize supports at most 16 tokens");
  }
  if (history.empty()) {
    throw Error(ErrorKind::InvalidArgument, "oracle_optimize needs a non-empty history");
  }

  std::vector<double> total_utility(n, 0.0);
  for (const auto& u : history) {
    require_same_size(n, u.size(), "oracle_optimize");
    for (std::size_t a = 0; a < n; ++a) total_utility[a] += u[a];
  }
  const double t_lambda = static_cast<double>(history.size()) * params.lambda;
  const double inv_eta = 1.0 / params.eta;
  const double curvature = t_lambda + inv_eta;

  std::vector<double> z(log_pi_t.log_probs().begin(), log_pi_t.log_probs().end());
  std::vector<double> log_pi(n), pi(n), df(n);
  double grad_norm = 0.0;

  for (std::size_t step = 0; step < options.max_steps; ++step) {
    const double lse = logsumexp(z);
    for (std::size_t a = 0; a < n; ++a) {
      log_pi[a] = z[a] - lse;
      pi[a] = std::exp(log_pi[a]);
    }
    // d objective / d pi(a)
    double mean = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      df[a] = total_utility[a] - t_lambda * (log_pi[a] - log_pi_1[a] + 1.0) -
              inv_eta * (log_pi[a] - log_pi_t[a] + 1.0);
      mean += pi[a] * df[a];
    }
    grad_norm = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      const double g = (df[a] - mean) / curvature;
      grad_norm = std::max(grad_norm, std::abs(g));
      df[a] = g;
    }
    if (grad_norm < options.grad_tol) return normalize_log(z);
    for (std::size_t a = 0; a < n; ++a) z[a] += options.step_size * df[a];
  }

  std::ostringstream msg;
  msg << "oracle did not converge after " << options.max_steps
      << " steps; final gradient norm " << grad_norm;
  throw Error(ErrorKind::NonConvergence, msg.str());
}

}  // namespace amulet
