#pragma once

/// @file sampling.hpp
/// @brief Token selection from a LogDist: greedy, temperature, top-k, top-p.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "amulet/distribution.hpp"

namespace amulet {

enum class SamplingKind { Greedy, Temperature, TopK, TopP };

struct SamplingStrategy {
  SamplingKind kind = SamplingKind::Greedy;
  double temperature = 1.0;
  std::size_t k = 1;
  double p = 1.0;
  std::uint64_t seed = 0;

  static SamplingStrategy greedy() { return {}; }
  static SamplingStrategy with_temperature(double t, std::uint64_t seed) {
    return {SamplingKind::Temperature, t, 1, 1.0, seed};
  }
  static SamplingStrategy top_k(std::size_t k, double t, std::uint64_t seed) {
    return {SamplingKind::TopK, t, k, 1.0, seed};
  }
  static SamplingStrategy top_p(double p, double t, std::uint64_t seed) {
    return {SamplingKind::TopP, t, 1, p, seed};
  }

  /// Throws Error{InvalidArgument} on out-of-range knobs.
  void validate() const;

  /// Greedy, or any stochastic kind at temperature 0.
  bool is_greedy() const noexcept {
    return kind == SamplingKind::Greedy || temperature == 0.0;
  }

  std::string describe() const;
};

/// Stateful sampler: owns the RNG stream seeded from the strategy. Successive
/// draw() calls advance the stream, so a generation loop gets a reproducible
/// sequence of draws from one seed.
class TokenSampler {
 public:
  explicit TokenSampler(const SamplingStrategy& strategy);

  std::size_t draw(const LogDist& d);

  const SamplingStrategy& strategy() const noexcept { return strategy_; }

 private:
  double uniform01();

  SamplingStrategy strategy_;
  std::mt19937_64 engine_;
};

/// One draw with a fresh sampler; pure given (d, s).
std::size_t sample_token(const LogDist& d, const SamplingStrategy& s);

}  // namespace amulet
