#include "amulet/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "amulet/error.hpp"

namespace amulet {

void SamplingStrategy::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::InvalidArgument, "temperature must be >= 0");
  }
  if (kind == SamplingKind::TopK && k == 0) {
    throw Error(ErrorKind::InvalidArgument, "top-k needs k >= 1");
  }
  if (kind == SamplingKind::TopP && !(p > 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "top-p needs p in (0, 1]");
  }
}

std::string SamplingStrategy::describe() const {
  std::ostringstream os;
  switch (kind) {
    case SamplingKind::Greedy: os << "greedy"; break;
    case SamplingKind::Temperature: os << "temperature(" << temperature << ")"; break;
    case SamplingKind::TopK: os << "top_k(" << k << ", t=" << temperature << ")"; break;
    case SamplingKind::TopP: os << "top_p(" << p << ", t=" << temperature << ")"; break;
  }
  if (!is_greedy()) os << " seed=" << seed;
  return os.str();
}

TokenSampler::TokenSampler(const SamplingStrategy& strategy)
    : strategy_(strategy), engine_(strategy.seed) {
  strategy_.validate();
}

double TokenSampler::uniform01() {
  // 53 random mantissa bits; identical across standard libraries.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t TokenSampler::draw(const LogDist& d) {
  const auto lp = d.log_probs();
  if (strategy_.is_greedy()) return argmax(lp);

  const std::size_t n = lp.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Descending by probability, lowest index first among equals.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lp[a] > lp[b]; });

  std::size_t keep = n;
  if (strategy_.kind == SamplingKind::TopK) keep = std::min(strategy_.k, n);

  std::vector<double> scaled(keep);
  for (std::size_t i = 0; i < keep; ++i) scaled[i] = lp[order[i]] / strategy_.temperature;
  const double lse = logsumexp(scaled);
  std::vector<double> w(keep);
  for (std::size_t i = 0; i < keep; ++i) w[i] = std::exp(scaled[i] - lse);

  if (strategy_.kind == SamplingKind::TopP) {
    double cum = 0.0;
    std::size_t cut = keep;
    for (std::size_t i = 0; i < keep; ++i) {
      cum += w[i];
      if (cum >= strategy_.p) {
        cut = i + 1;
        break;
      }
    }
    keep = cut;
  }

  const double total = std::accumulate(w.begin(), w.begin() + keep, 0.0);
  const double r = uniform01() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    cum += w[i];
    if (r < cum) return order[i];
  }
  return order[keep - 1];
}

std::size_t sample_token(const LogDist& d, const SamplingStrategy& s) {
  TokenSampler sampler(s);
  return sampler.draw(d);
}

}  // namespace amulet
