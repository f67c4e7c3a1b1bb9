#ifndef REPLAYNET_REPLAY_CORE_HPP_
#define REPLAYNET_REPLAY_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "replaynet/errors.hpp"

namespace replaynet {

inline constexpr double kDefaultPMin = 1e-6;

// One transition (s, a, r, s'). state and next_state share the session's state_dim.
struct Experience {
  std::vector<float> state;
  std::uint32_t action = 0;
  float reward = 0.0f;
  std::vector<float> next_state;

  std::size_t state_dim() const noexcept { return state.size(); }
  bool operator==(const Experience&) const = default;
};

// Strictly positive priority. Construct through clamped() when the raw value
// is a TD error that may be zero.
class Priority {
 public:
  explicit Priority(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw DomainError("priority must be finite and > 0, got " + std::to_string(value));
    }
  }

  static Priority clamped(double raw, double p_min) {
    return Priority(std::max(std::abs(raw), p_min));
  }

  double value() const noexcept { return value_; }
  bool operator==(const Priority&) const = default;

 private:
  double value_;
};

// A batch of experiences tau with its priorities p, pushed together.
struct PrioritizedBatch {
  std::vector<Experience> experiences;
  std::vector<Priority> priorities;

  std::size_t size() const noexcept { return experiences.size(); }

  void validate() const {
    if (experiences.empty()) throw DomainError("prioritized batch must be non-empty");
    if (experiences.size() != priorities.size()) {
      throw DomainError("experience and priority counts differ");
    }
  }
};

struct ReplayConfig {
  std::uint64_t capacity = 65536;
  double alpha = 0.6;
  double p_min = kDefaultPMin;
  std::uint32_t train_batch_size = 512;
  std::uint32_t actor_batch_size = 200;

  void validate() const {
    if (train_batch_size < 1) throw DomainError("train_batch_size must be >= 1");
    if (capacity < train_batch_size) throw DomainError("capacity must be >= train_batch_size");
    if (actor_batch_size < 1) throw DomainError("actor_batch_size must be >= 1");
    if (!(alpha >= 0.0)) throw DomainError("alpha must be >= 0");
    if (!(p_min > 0.0)) throw DomainError("p_min must be > 0");
  }
};

struct LearnerConfig {
  double gamma = 0.99;
  std::uint32_t n_update = 2500;
  std::uint32_t n_pull = 200;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
    if (n_update < 1 || n_pull < 1) throw DomainError("n_update and n_pull must be >= 1");
  }
};

// |q_current - q_previous|, never below p_min.
inline Priority compute_priority(double q_current, double q_previous, double p_min) {
  return Priority::clamped(q_current - q_previous, p_min);
}

// P_i = p_i^alpha / sum_k p_k^alpha.
inline std::vector<double> sampling_probabilities(std::span<const Priority> priorities,
                                                  double alpha) {
  if (priorities.empty()) throw DomainError("sampling_probabilities: empty priority sequence");
  // Normalising by the largest priority first keeps pow() away from overflow
  // and leaves the ratios unchanged.
  double largest = 0.0;
  for (const auto& p : priorities) largest = std::max(largest, p.value());
  std::vector<double> out;
  out.reserve(priorities.size());
  double total = 0.0;
  for (const auto& p : priorities) {
    double w = std::pow(p.value() / largest, alpha);
    out.push_back(w);
    total += w;
  }
  for (double& w : out) w /= total;
  return out;
}

inline std::vector<double> sampling_probabilities(std::span<const double> priorities,
                                                  double alpha) {
  std::vector<Priority> typed;
  typed.reserve(priorities.size());
  for (double p : priorities) typed.emplace_back(p);
  return sampling_probabilities(std::span<const Priority>(typed), alpha);
}

// Bellman target r + gamma * max_a' Q(s', a').
inline double q_target(double reward, double gamma, double max_next_q) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("q_target: gamma must lie in [0, 1]");
  return reward + gamma * max_next_q;
}

// Lowest index wins on ties.
template <typename T>
std::uint32_t argmax(std::span<const T> values) {
  if (values.empty()) throw DomainError("argmax: empty sequence");
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// Explores with probability epsilon (random_draw < epsilon picks random_index),
// otherwise acts greedily.
template <typename T>
std::uint32_t epsilon_greedy(std::span<const T> q_values, double epsilon, double random_draw,
                             std::uint32_t random_index) {
  if (q_values.empty()) throw DomainError("epsilon_greedy: empty q_values");
  if (random_index >= q_values.size()) throw DomainError("epsilon_greedy: random_index out of range");
  if (random_draw < epsilon) return random_index;
  return argmax(q_values);
}

inline std::uint32_t epsilon_greedy(const std::vector<double>& q_values, double epsilon,
                                    double random_draw, std::uint32_t random_index) {
  return epsilon_greedy(std::span<const double>(q_values), epsilon, random_draw, random_index);
}

// Per-actor exploration rate: actor i of n gets base^(1 + i/(n-1)). This
// schedule is a harness default, not a prescribed one; callers may override
// epsilon per actor. A single actor gets base.
inline double actor_epsilon(std::uint32_t actor_index, std::uint32_t actor_count,
                            double base = 0.4) {
  if (actor_count == 0 || actor_index >= actor_count) {
    throw DomainError("actor_epsilon: actor_index must be < actor_count");
  }
  if (actor_count == 1) return base;
  double exponent = 1.0 + static_cast<double>(actor_index) / static_cast<double>(actor_count - 1);
  return std::pow(base, exponent);
}

}  // namespace replaynet

#endif  // REPLAYNET_REPLAY_CORE_HPP_
