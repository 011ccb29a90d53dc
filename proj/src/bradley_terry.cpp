#include "amulet/bradley_terry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "amulet/distribution.hpp"
#include "amulet/error.hpp"

namespace amulet {

OutcomeMatrix::OutcomeMatrix(std::size_t n) : n_(n), wins_(n * n, 0.0) {}

OutcomeMatrix OutcomeMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  OutcomeMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_same_size(rows[i].size(), rows.size(), "OutcomeMatrix row");
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (i == j && rows[i][j] != 0.0) {
        throw Error(ErrorKind::InvalidArgument, "outcome matrix diagonal must be zero");
      }
      m.add(i, j, rows[i][j]);
    }
  }
  return m;
}

void OutcomeMatrix::add(std::size_t i, std::size_t j, double amount) {
  if (i >= n_ || j >= n_) throw Error(ErrorKind::InvalidArgument, "system index out of range");
  if (!(amount >= 0.0) || !std::isfinite(amount)) {
    throw Error(ErrorKind::InvalidArgument, "outcome counts must be finite and >= 0");
  }
  if (i == j && amount != 0.0) {
    throw Error(ErrorKind::InvalidArgument, "a system cannot be compared with itself");
  }
  wins_[i * n_ + j] += amount;
}

void OutcomeMatrix::record(std::size_t a, std::size_t b, Outcome outcome) {
  switch (outcome) {
    case Outcome::AWins: add(a, b, 1.0); break;
    case Outcome::BWins: add(b, a, 1.0); break;
    case Outcome::Tie:
      add(a, b, 0.5);
      add(b, a, 0.5);
      break;
  }
}

OutcomeMatrix OutcomeMatrix::scaled(double factor) const {
  OutcomeMatrix m(n_);
  for (std::size_t k = 0; k < wins_.size(); ++k) m.wins_[k] = wins_[k] * factor;
  return m;
}

double bt_log_likelihood(const OutcomeMatrix& m, const std::vector<double>& s) {
  require_same_size(m.size(), s.size(), "bt_log_likelihood");
  double ll = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (i == j || m(i, j) == 0.0) continue;
      const double hi = std::max(s[i], s[j]);
      ll += m(i, j) * (s[i] - (hi + std::log(std::exp(s[i] - hi) + std::exp(s[j] - hi))));
    }
  }
  return ll;
}

namespace {

// Components of the undirected graph with an edge wherever i and j met.
std::vector<std::vector<std::size_t>> components(const OutcomeMatrix& m) {
  const std::size_t n = m.size();
  std::vector<int> label(n, -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t root = 0; root < n; ++root) {
    if (label[root] >= 0) continue;
    out.emplace_back();
    std::vector<std::size_t> stack{root};
    label[root] = static_cast<int>(out.size() - 1);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      out.back().push_back(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (label[j] < 0 && m(i, j) + m(j, i) > 0.0) {
          label[j] = label[root];
          stack.push_back(j);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

bool strongly_connected(const OutcomeMatrix& m) {
  const std::size_t n = m.size();
  for (int direction = 0; direction < 2; ++direction) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        const double w = direction == 0 ? m(i, j) : m(j, i);
        if (!seen[j] && w > 0.0) {
          seen[j] = true;
          stack.push_back(j);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}

void center(std::vector<double>& s) {
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  for (double& v : s) v -= mean;
}

}  // namespace

BTScores bt_scores(const OutcomeMatrix& input, const BTOptions& options) {
  const std::size_t n = input.size();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 systems");
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += input(i, j) + input(j, i);
    if (total == 0.0) {
      throw Error(ErrorKind::InvalidArgument,
                  "system " + std::to_string(i) + " has zero comparisons");
    }
  }
  if (const auto comps = components(input); comps.size() > 1) {
    std::ostringstream msg;
    msg << "comparison graph disconnected; components:";
    for (const auto& c : comps) {
      msg << " {";
      for (std::size_t k = 0; k < c.size(); ++k) msg << (k ? "," : "") << c[k];
      msg << "}";
    }
    throw Error(ErrorKind::Disconnected, msg.str());
  }

  BTScores result;
  OutcomeMatrix m = input;
  if (!strongly_connected(input)) {
    result.regularized = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && input(i, j) + input(j, i) > 0.0) m.add(i, j, options.pseudo_count / 2.0);
      }
    }
  }

  std::vector<double> wins(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) wins[i] += m(i, j);
  }

  std::vector<double> s(n, 0.0), next(n);
  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      // sum_j n_ij / (p_i + p_j), with p = exp(s), evaluated relative to p_i.
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double games = m(i, j) + m(j, i);
        if (i == j || games == 0.0) continue;
        denom += games / (1.0 + std::exp(s[j] - s[i]));
      }
      // MM target in log space: log(W_i / denom) + s_i.
      const double target = std::log(wins[i] / denom) + s[i];
      next[i] = (1.0 - options.damping) * target + options.damping * s[i];
    }
    center(next);
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, std::abs(next[i] - s[i]));
    s.swap(next);
    if (delta < options.tol) {
      result.scores = std::move(s);
      result.iterations = iter;
      return result;
    }
  }
  throw Error(ErrorKind::NonConvergence, "Bradley-Terry solver did not converge");
}

std::vector<WinRateRow> win_rate_table(const std::vector<PairVerdict>& verdicts) {
  if (verdicts.empty()) throw Error(ErrorKind::InvalidArgument, "no verdicts");
  std::vector<WinRateRow> rows;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::array<std::size_t, 3>> tallies;
  for (const auto& v : verdicts) {
    auto [it, inserted] = index.try_emplace({v.system_a, v.system_b}, rows.size());
    if (inserted) {
      rows.push_back(WinRateRow{v.system_a, v.system_b});
      tallies.push_back({0, 0, 0});
    }
    auto& t = tallies[it->second];
    switch (v.outcome) {
      case Outcome::AWins: ++t[0]; break;
      case Outcome::Tie: ++t[1]; break;
      case Outcome::BWins: ++t[2]; break;
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& t = tallies[k];
    const std::size_t total = t[0] + t[1] + t[2];
    rows[k].count = total;
    rows[k].win_pct = 100.0 * static_cast<double>(t[0]) / static_cast<double>(total);
    rows[k].tie_pct = 100.0 * static_cast<double>(t[1]) / static_cast<double>(total);
    rows[k].lose_pct = 100.0 * static_cast<double>(t[2]) / static_cast<double>(total);
  }
  return rows;
}

}  // namespace amulet
