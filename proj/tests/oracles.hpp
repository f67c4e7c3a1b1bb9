#ifndef REPLAYNET_TESTS_ORACLES_HPP_
#define REPLAYNET_TESTS_ORACLES_HPP_

// Test-only reference implementations. None of these share code with the
// structures they check.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "replaynet/replay_core.hpp"

namespace replaynet::oracle {

// Linear cumulative scan with the root-to-leaf boundary rule: the first
// leaf whose running sum reaches s (s equal to a boundary goes to the
// earlier leaf). Falls back to the last non-zero leaf.
inline std::uint64_t cumulative_scan(const std::vector<double>& leaves, double s) {
  double running = 0.0;
  std::uint64_t last_nonzero = 0;
  for (std::uint64_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i] <= 0.0) continue;
    last_nonzero = i;
    running += leaves[i];
    if (running >= s) return i;
  }
  return last_nonzero;
}

inline double linear_sum(const std::vector<double>& leaves) {
  double total = 0.0;
  for (double v : leaves) total += v;
  return total;
}

// Total-variation distance between an empirical histogram and a distribution.
inline double total_variation(const std::vector<std::uint64_t>& counts,
                              const std::vector<double>& expected) {
  std::uint64_t n = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  double tv = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    tv += std::abs(static_cast<double>(counts[i]) / static_cast<double>(n) - expected[i]);
  }
  return tv / 2.0;
}

inline Experience random_experience(std::mt19937_64& rng, std::uint32_t state_dim,
                                    std::uint32_t action_count) {
  std::uniform_real_distribution<float> value(-1.0f, 1.0f);
  Experience e;
  e.state.resize(state_dim);
  e.next_state.resize(state_dim);
  for (auto& v : e.state) v = value(rng);
  for (auto& v : e.next_state) v = value(rng);
  e.action = static_cast<std::uint32_t>(rng() % action_count);
  e.reward = value(rng);
  return e;
}

}  // namespace replaynet::oracle

#endif  // REPLAYNET_TESTS_ORACLES_HPP_
