/// @file optimizer.cpp
/// @brief Utility, closed-form iterate, iteration loop, objective.

#include "amulet/optimizer.hpp"

#include <cmath>
#include <string>

#include "amulet/error.hpp"
#include "amulet/fault_injection.hpp"

namespace amulet {

void AmuletParams::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
  if (!std::isfinite(alpha) || alpha < 0.0) bad("alpha must be finite and >= 0");
  if (!std::isfinite(lambda) || lambda < 0.0) bad("lambda must be finite and >= 0");
  if (!std::isfinite(eta) || eta <= 0.0) bad("eta must be finite and > 0");
  if (iterations < 1) bad("iterations must be >= 1");
  if (!std::isfinite(early_stop_tol) || early_stop_tol < 0.0) {
    bad("early_stop_tol must be finite and >= 0");
  }
}

IterState IterState::initial(const LogDist& log_pi_1, const LogDist& log_pi_base) {
  require_same_size(log_pi_1.size(), log_pi_base.size(), "IterState");
  return IterState{1, log_pi_1, log_pi_base, log_pi_1,
                   std::vector<double>(log_pi_1.size(), 0.0)};
}

std::vector<double> utility(const LogDist& log_pi_t, const LogDist& log_pi_base,
                            double alpha) {
  require_same_size(log_pi_t.size(), log_pi_base.size(), "utility");
  std::vector<double> u(log_pi_t.size());
  for (std::size_t a = 0; a < u.size(); ++a) {
    u[a] = alpha * (log_pi_t[a] - log_pi_base[a]);
  }
  return u;
}

namespace {

IterState step_impl(const IterState& s, const AmuletParams& params, double denom_scale) {
  const std::size_t n = s.log_pi_t.size();
  require_same_size(n, s.log_pi_1.size(), "closed_form_step");
  require_same_size(n, s.log_pi_base.size(), "closed_form_step");
  require_same_size(n, s.cum_utility.size(), "closed_form_step");

  const std::vector<double> u = utility(s.log_pi_t, s.log_pi_base, params.alpha);
  std::vector<double> cum = s.cum_utility;
  for (std::size_t a = 0; a < n; ++a) cum[a] += u[a];

  const double t = static_cast<double>(s.t);
  const double anchor = params.lambda * params.eta * t;
  const double inv_denom = 1.0 / ((anchor + 1.0) * denom_scale);

  // Offset from pi_t rather than the raw exponent, so that a zero utility sum
  // at pi_t == pi_1 leaves the iterate unchanged bit for bit.
  std::vector<double> offset(n);
  for (std::size_t a = 0; a < n; ++a) {
    offset[a] = denom_scale == 1.0
                    ? inv_denom * (params.eta * cum[a] + anchor * (s.log_pi_1[a] - s.log_pi_t[a]))
                    : inv_denom * (params.eta * cum[a] + anchor * s.log_pi_1[a] + s.log_pi_t[a]) -
                          s.log_pi_t[a];
  }
  return IterState{s.t + 1, s.log_pi_1, s.log_pi_base, shift_log(s.log_pi_t, offset),
                   std::move(cum)};
}

}  // namespace

IterState closed_form_step(const IterState& state, const AmuletParams& params) {
  return step_impl(state, params, 1.0);
}

namespace fault {

IterState closed_form_step_perturbed(const IterState& state, const AmuletParams& params,
                                     double denominator_scale) {
  return step_impl(state, params, denominator_scale);
}

}  // namespace fault

OptResult optimize(const LogDist& log_pi_1, const LogDist& log_pi_base,
                   const AmuletParams& params) {
  params.validate();
  IterState s = IterState::initial(log_pi_1, log_pi_base);
  OptResult result{log_pi_1, 0, {}};
  result.trace.reserve(params.iterations - 1);

  for (std::size_t step = 1; step < params.iterations; ++step) {
    double u_linf = 0.0;
    for (std::size_t a = 0; a < s.log_pi_t.size(); ++a) {
      u_linf = std::max(u_linf, std::abs(params.alpha * (s.log_pi_t[a] - log_pi_base[a])));
    }
    IterState next = closed_form_step(s, params);
    StepDiagnostics d;
    d.step_kl = kl_divergence(next.log_pi_t, s.log_pi_t);
    d.utility_linf = u_linf;
    d.kl_to_pi1 = kl_divergence(next.log_pi_t, log_pi_1);
    result.trace.push_back(d);
    s = std::move(next);
    ++result.iterations_run;
    if (params.early_stop_tol > 0.0 && d.step_kl < params.early_stop_tol) break;
  }
  result.final = s.log_pi_t;
  return result;
}

double objective_value(const LogDist& candidate,
                       std::span<const std::vector<double>> history,
                       const LogDist& log_pi_1, const LogDist& log_pi_t,
                       const AmuletParams& params) {
  if (history.empty()) {
    throw Error(ErrorKind::InvalidArgument, "objective_value needs a non-empty history");
  }
  const std::size_t n = candidate.size();
  require_same_size(n, log_pi_1.size(), "objective_value");
  require_same_size(n, log_pi_t.size(), "objective_value");

  double linear = 0.0;
  for (const auto& u : history) {
    require_same_size(n, u.size(), "objective_value");
    for (std::size_t a = 0; a < n; ++a) linear += u[a] * std::exp(candidate[a]);
  }
  const double t = static_cast<double>(history.size());
  return linear - t * params.lambda * kl_divergence(candidate, log_pi_1) -
         kl_divergence(candidate, log_pi_t) / params.eta;
}

}  // namespace amulet
