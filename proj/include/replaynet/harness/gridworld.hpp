#ifndef REPLAYNET_HARNESS_GRIDWORLD_HPP_
#define REPLAYNET_HARNESS_GRIDWORLD_HPP_

// Deterministic grid environment and a tabular Q function small enough to
// ship as the parameter blob.

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "replaynet/errors.hpp"
#include "replaynet/replay_core.hpp"

namespace replaynet::harness {

enum class Move : std::uint32_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

inline constexpr std::uint32_t kGridActions = 4;

struct Cell {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  bool operator==(const Cell&) const = default;
};

struct StepResult {
  std::uint32_t state = 0;
  float reward = 0.0f;
  bool done = false;       // goal reached or episode cap hit
  bool at_goal = false;
};

class GridWorld {
 public:
  struct Config {
    std::uint32_t width = 5;
    std::uint32_t height = 5;
    Cell start{0, 0};
    Cell goal{4, 4};
    float step_penalty = -0.01f;
    float goal_reward = 1.0f;
    std::uint32_t episode_cap = 200;
  };

  explicit GridWorld(Config config) : config_(config) {
    if (config_.width == 0 || config_.height == 0) throw DomainError("grid must be at least 1x1");
    if (!inside(config_.start) || !inside(config_.goal)) throw DomainError("start and goal must lie inside the grid");
    if (config_.start == config_.goal) throw DomainError("start and goal must differ");
    if (config_.episode_cap == 0) throw DomainError("episode_cap must be >= 1");
    reset();
  }

  // "WxH" with the start in the top-left corner and the goal bottom-right.
  static Config parse_size(const std::string& text) {
    auto x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 == text.size()) {
      throw DomainError("grid size must look like 5x5, got '" + text + "'");
    }
    Config c;
    c.width = static_cast<std::uint32_t>(std::stoul(text.substr(0, x)));
    c.height = static_cast<std::uint32_t>(std::stoul(text.substr(x + 1)));
    c.goal = Cell{c.width - 1, c.height - 1};
    return c;
  }

  const Config& config() const noexcept { return config_; }
  std::uint32_t state_count() const noexcept { return config_.width * config_.height; }
  std::uint32_t state_dim() const noexcept { return state_count(); }
  std::uint32_t index(Cell c) const noexcept { return c.y * config_.width + c.x; }
  Cell cell(std::uint32_t state) const noexcept { return Cell{state % config_.width, state / config_.width}; }
  std::uint32_t goal_state() const noexcept { return index(config_.goal); }
  std::uint32_t start_state() const noexcept { return index(config_.start); }
  std::uint32_t current() const noexcept { return state_; }
  std::uint32_t steps() const noexcept { return steps_; }

  // Shortest path length from start to goal on an open grid.
  std::uint32_t optimal_steps() const noexcept {
    auto d = [](std::uint32_t a, std::uint32_t b) { return a > b ? a - b : b - a; };
    return d(config_.start.x, config_.goal.x) + d(config_.start.y, config_.goal.y);
  }

  std::uint32_t reset() {
    state_ = start_state();
    steps_ = 0;
    return state_;
  }

  // Moving into a wall leaves the agent in place.
  StepResult step(std::uint32_t action) {
    if (action >= kGridActions) throw DomainError("action out of range");
    Cell c = cell(state_);
    switch (static_cast<Move>(action)) {
      case Move::kUp:
        if (c.y > 0) --c.y;
        break;
      case Move::kDown:
        if (c.y + 1 < config_.height) ++c.y;
        break;
      case Move::kLeft:
        if (c.x > 0) --c.x;
        break;
      case Move::kRight:
        if (c.x + 1 < config_.width) ++c.x;
        break;
    }
    state_ = index(c);
    ++steps_;
    StepResult r;
    r.state = state_;
    r.at_goal = state_ == goal_state();
    r.reward = r.at_goal ? config_.goal_reward : config_.step_penalty;
    r.done = r.at_goal || steps_ >= config_.episode_cap;
    return r;
  }

  std::vector<float> one_hot(std::uint32_t state) const {
    std::vector<float> v(state_count(), 0.0f);
    v.at(state) = 1.0f;
    return v;
  }

  // Inverse of one_hot; the hot position is the largest entry.
  std::uint32_t decode(std::span<const float> one_hot) const {
    if (one_hot.size() != state_count()) throw DomainError("one-hot vector has the wrong length");
    return argmax(one_hot);
  }

 private:
  bool inside(Cell c) const noexcept { return c.x < config_.width && c.y < config_.height; }

  Config config_;
  std::uint32_t state_ = 0;
  std::uint32_t steps_ = 0;
};

// Row-major Q(s, a) table of float32, serialised as raw little-endian floats.
class QTable {
 public:
  QTable() = default;
  QTable(std::uint32_t states, std::uint32_t actions)
      : states_(states), actions_(actions), q_(static_cast<std::size_t>(states) * actions, 0.0f) {}

  static QTable from_bytes(std::span<const std::uint8_t> bytes, std::uint32_t states,
                           std::uint32_t actions) {
    QTable t(states, actions);
    if (bytes.size() != t.q_.size() * sizeof(float)) {
      throw DomainError("Q table blob has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(t.q_.size() * sizeof(float)));
    }
    std::memcpy(t.q_.data(), bytes.data(), bytes.size());
    return t;
  }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out(q_.size() * sizeof(float));
    std::memcpy(out.data(), q_.data(), out.size());
    return out;
  }

  std::uint32_t states() const noexcept { return states_; }
  std::uint32_t actions() const noexcept { return actions_; }
  float& at(std::uint32_t s, std::uint32_t a) { return q_.at(static_cast<std::size_t>(s) * actions_ + a); }
  float at(std::uint32_t s, std::uint32_t a) const { return q_.at(static_cast<std::size_t>(s) * actions_ + a); }
  std::span<const float> row(std::uint32_t s) const {
    return std::span<const float>(q_).subspan(static_cast<std::size_t>(s) * actions_, actions_);
  }
  float max(std::uint32_t s) const {
    auto r = row(s);
    return r[argmax(r)];
  }
  std::uint32_t greedy(std::uint32_t s) const { return argmax(row(s)); }
  bool operator==(const QTable&) const = default;

 private:
  std::uint32_t states_ = 0;
  std::uint32_t actions_ = 0;
  std::vector<float> q_;
};

// Steps the greedy policy takes from start to goal; 0 if it never arrives
// within the episode cap.
inline std::uint32_t greedy_rollout(const GridWorld::Config& config, const QTable& q) {
  GridWorld env(config);
  std::uint32_t s = env.reset();
  for (;;) {
    StepResult r = env.step(q.greedy(s));
    if (r.at_goal) return env.steps();
    if (r.done) return 0;
    s = r.state;
  }
}

}  // namespace replaynet::harness

#endif  // REPLAYNET_HARNESS_GRIDWORLD_HPP_
