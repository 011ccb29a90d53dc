#include "amulet/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amulet/fault_injection.hpp"

namespace amulet {

LogDist random_logdist(std::mt19937_64& rng, std::size_t size) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(size);
  for (double& x : w) x = expo(rng) + 1e-12;
  return from_probs(w);
}

OracleCase random_oracle_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> vocab(2, 8), steps(1, 5);
  std::uniform_real_distribution<double> coef(0.0, 4.0), lr(0.05, 10.0);
  const std::size_t v = vocab(rng);
  const std::size_t t = steps(rng);
  AmuletParams params;
  params.alpha = coef(rng);
  params.lambda = coef(rng);
  params.eta = lr(rng);
  LogDist pi_1 = random_logdist(rng, v);
  LogDist pi_base = random_logdist(rng, v);
  return OracleCase{v, t, params, std::move(pi_1), std::move(pi_base)};
}

OracleCaseResult check_oracle_case(const OracleCase& c, double denominator_scale) {
  OracleCaseResult out;
  out.min_objective_gain = std::numeric_limits<double>::infinity();

  IterState s = IterState::initial(c.log_pi_1, c.log_pi_base);
  std::vector<std::vector<double>> history;
  for (std::size_t step = 1; step <= c.t; ++step) {
    history.push_back(utility(s.log_pi_t, c.log_pi_base, c.params.alpha));
    const bool last = step == c.t;
    IterState next = last && denominator_scale != 1.0
                         ? fault::closed_form_step_perturbed(s, c.params, denominator_scale)
                         : closed_form_step(s, c.params);

    const double before = objective_value(s.log_pi_t, history, c.log_pi_1, s.log_pi_t, c.params);
    const double after =
        objective_value(next.log_pi_t, history, c.log_pi_1, s.log_pi_t, c.params);
    out.min_objective_gain = std::min(out.min_objective_gain, after - before);

    if (last) {
      const LogDist oracle = oracle_optimize(history, c.log_pi_1, s.log_pi_t, c.params);
      out.linf_gap = linf_prob_gap(next.log_pi_t, oracle);
    }
    s = std::move(next);
  }
  return out;
}

OracleSuiteReport run_oracle_suite(std::uint64_t seed, std::size_t cases, double tolerance,
                                   double denominator_scale) {
  std::mt19937_64 rng(seed);
  OracleSuiteReport r;
  r.min_objective_gain = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cases; ++i) {
    const OracleCase c = random_oracle_case(rng);
    const OracleCaseResult res = check_oracle_case(c, denominator_scale);
    ++r.cases;
    r.max_linf_gap = std::max(r.max_linf_gap, res.linf_gap);
    r.min_objective_gain = std::min(r.min_objective_gain, res.min_objective_gain);
    if (!(res.linf_gap <= tolerance)) ++r.failures;
  }
  return r;
}

}  // namespace amulet
