/// @file distribution.cpp
/// @brief LogDist construction, divergences and the audit hook.

#include "amulet/distribution.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "amulet/error.hpp"

namespace amulet {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::EmptySupport: return "empty support";
    case ErrorKind::InvalidScore: return "invalid score";
    case ErrorKind::LengthMismatch: return "length mismatch";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::DegenerateVocabulary: return "degenerate vocabulary";
    case ErrorKind::Transport: return "transport failure";
    case ErrorKind::Protocol: return "protocol error";
    case ErrorKind::Unparseable: return "unparseable";
    case ErrorKind::Disconnected: return "disconnected";
    case ErrorKind::NotFound: return "not found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Cancelled: return "cancelled";
  }
  return "unknown";
}

namespace {

std::atomic<LogDistObserver> g_observer{nullptr};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

void set_logdist_observer(LogDistObserver observer) noexcept {
  g_observer.store(observer, std::memory_order_release);
}

std::vector<double> LogDist::probs() const {
  std::vector<double> p(log_probs_.size());
  std::transform(log_probs_.begin(), log_probs_.end(), p.begin(),
                 [](double lp) { return std::exp(lp); });
  return p;
}

double logsumexp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

LogDist normalize_log(std::span<const double> raw_scores) {
  if (raw_scores.size() < 2) {
    throw Error(ErrorKind::InvalidArgument,
                "distribution needs at least 2 entries, got " +
                    std::to_string(raw_scores.size()));
  }
  for (double v : raw_scores) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::InvalidScore, "invalid score");
    }
  }
  const double peak = *std::max_element(raw_scores.begin(), raw_scores.end());
  if (peak == kNegInf) throw Error(ErrorKind::EmptySupport, "empty support");

  // Shift first so log Z is computed from O(1) values; subtracting a large
  // logsumexp directly would cancel digits.
  std::vector<double> lp(raw_scores.size());
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = raw_scores[i] - peak;
  const double log_z = logsumexp(lp);
  bool clamped = false;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    lp[i] -= log_z;
    if (!(lp[i] >= kLogProbFloor)) {
      lp[i] = kLogProbFloor;
      clamped = true;
    }
  }
  if (clamped) {
    const double z = logsumexp(lp);
    for (double& v : lp) v -= z;
  }

  if (auto* obs = g_observer.load(std::memory_order_acquire)) obs(lp);
  return LogDist(std::move(lp));
}

LogDist shift_log(const LogDist& base, std::span<const double> delta) {
  require_same_size(base.size(), delta.size(), "shift_log");
  std::vector<double> lp(base.size());
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = base[i] + delta[i];

  bool small = true;
  for (double d : delta) small = small && std::abs(d) <= 1.0;
  if (!small) return normalize_log(lp);

  double mass_change = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) mass_change += std::exp(base[i]) * std::expm1(delta[i]);
  const double log_z = std::log1p(mass_change);
  for (double& v : lp) {
    v -= log_z;
    if (!(v >= kLogProbFloor)) return normalize_log(lp);
  }
  if (auto* obs = g_observer.load(std::memory_order_acquire)) obs(lp);
  return LogDist(std::move(lp));
}

LogDist from_probs(std::span<const double> probs) {
  std::vector<double> raw(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (std::isnan(probs[i]) || probs[i] < 0.0) {
      throw Error(ErrorKind::InvalidScore, "invalid score");
    }
    raw[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
  }
  return normalize_log(raw);
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::LengthMismatch,
                std::string(what) + ": length mismatch (" + std::to_string(a) +
                    " vs " + std::to_string(b) + ")");
  }
}

double kl_divergence(const LogDist& p, const LogDist& q) {
  require_same_size(p.size(), q.size(), "kl_divergence");
  double kl = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    kl += std::exp(p[a]) * (p[a] - q[a]);
  }
  return std::max(kl, 0.0);
}

double linf_prob_gap(const LogDist& p, const LogDist& q) {
  require_same_size(p.size(), q.size(), "linf_prob_gap");
  double gap = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    gap = std::max(gap, std::abs(std::exp(p[a]) - std::exp(q[a])));
  }
  return gap;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace amulet
