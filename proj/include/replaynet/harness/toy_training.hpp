#ifndef REPLAYNET_HARNESS_TOY_TRAINING_HPP_
#define REPLAYNET_HARNESS_TOY_TRAINING_HPP_

// End-to-end check of the actor/learner loop: tabular Q-learning on a
// GridWorld through a co-located replay server over loopback.

#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>
#include <tuple>
#include <vector>

#include "replaynet/client.hpp"
#include "replaynet/harness/gridworld.hpp"
#include "replaynet/server.hpp"
#include "replaynet/stats.hpp"

namespace replaynet::harness {

struct ToyConfig {
  GridWorld::Config grid;
  std::uint32_t actors = 2;
  std::uint64_t seed = 42;
  double gamma = 0.95;
  // 1.0 applies the Bellman assignment Q(s, a) <- r + gamma max Q' verbatim.
  double learning_rate = 1.0;
  std::uint32_t learner_batch = 32;
  std::uint32_t n_update = 100;   // target table refresh, learner iterations
  std::uint32_t actor_batch = 20;
  std::uint32_t n_pull = 50;
  std::uint64_t capacity = 16384;
  double alpha = 0.6;
  std::uint64_t max_iterations = 50000;
  std::uint32_t curve_every = 100;

  void validate() const {
    if (actors == 0) throw DomainError("toy training needs at least one actor");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw DomainError("learning_rate must lie in (0, 1]");
    if (learner_batch == 0 || actor_batch == 0 || n_pull == 0 || n_update == 0 || curve_every == 0) {
      throw DomainError("batch sizes and periods must be >= 1");
    }
    if (max_iterations == 0) throw DomainError("max_iterations must be >= 1");
  }
};

/**
 * The learner's training step. Keeps an online and a target Q table; each
 * sampled transition moves Q(s, a) toward r + gamma max_a' Q_target(s', a')
 * (no bootstrap past the goal) and reports |TD error| before the move as the
 * new priority.
 */
class ToyLearner {
 public:
  ToyLearner(GridWorld::Config grid, double gamma, double learning_rate, double p_min = kDefaultPMin)
      : env_(grid),
        gamma_(gamma),
        learning_rate_(learning_rate),
        p_min_(p_min),
        online_(env_.state_count(), kGridActions),
        target_(online_) {}

  TrainOutcome train(const SampledBatch& batch) {
    TrainOutcome out;
    out.priorities.reserve(batch.size());
    for (const auto& e : batch.experiences) {
      std::uint32_t s = env_.decode(e.state);
      std::uint32_t s2 = env_.decode(e.next_state);
      double bootstrap = s2 == env_.goal_state() ? 0.0 : target_.max(s2);
      double target = q_target(e.reward, gamma_, bootstrap);
      float& q = online_.at(s, e.action);
      double priority = compute_priority(target, q, p_min_).value();
      q = static_cast<float>(q + learning_rate_ * (target - q));
      out.priorities.push_back(priority);
      track(s, e.action, s2, priority);
    }
    out.params = online_.to_bytes();
    return out;
  }

  void refresh_target() { target_ = online_; }

  const QTable& online() const noexcept { return online_; }
  const QTable& target() const noexcept { return target_; }

  // Average change in priority between consecutive trainings of the same
  // transition, and how many such repeats were seen.
  double mean_repeat_priority_change() const noexcept {
    return repeats_ == 0 ? 0.0 : repeat_change_sum_ / static_cast<double>(repeats_);
  }
  std::uint64_t repeats() const noexcept { return repeats_; }

 private:
  void track(std::uint32_t s, std::uint32_t a, std::uint32_t s2, double priority) {
    auto [it, fresh] = last_priority_.try_emplace(std::make_tuple(s, a, s2), priority);
    if (!fresh) {
      repeat_change_sum_ += priority - it->second;
      ++repeats_;
      it->second = priority;
    }
  }

  GridWorld env_;
  double gamma_;
  double learning_rate_;
  double p_min_;
  QTable online_;
  QTable target_;
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, double> last_priority_;
  double repeat_change_sum_ = 0.0;
  std::uint64_t repeats_ = 0;
};

struct ToyResult {
  bool converged = false;
  std::uint64_t iterations = 0;
  std::uint32_t greedy_steps = 0;   // 0: greedy policy does not reach the goal
  std::uint32_t optimal_steps = 0;
  std::uint64_t experiences_recorded = 0;
  std::uint64_t experiences_added = 0;
  std::uint64_t stale_updates = 0;
  double mean_repeat_priority_change = 0.0;
  double elapsed_s = 0.0;
};

namespace toy_detail {

inline void actor_loop(const Endpoint& endpoint, const ToyConfig& config, std::uint32_t index,
                       const std::atomic<bool>& stop, std::atomic<std::uint64_t>& recorded) {
  GridWorld env(config.grid);
  wire::Hello hello{wire::Role::kActor, index, env.state_dim(), kGridActions, 0};
  ActorOptions opts;
  opts.batch_size = config.actor_batch;
  opts.n_pull = config.n_pull;
  opts.epsilon = actor_epsilon(index, config.actors);
  opts.seed = config.seed * 1000 + index;
  opts.keep_latencies = false;
  ActorClient actor(Connection::open(endpoint, hello), opts);

  QTable q(env.state_count(), kGridActions);
  auto adopt = [&](const std::optional<ParameterBlob>& blob) {
    if (blob && !blob->bytes.empty()) q = QTable::from_bytes(blob->bytes, env.state_count(), kGridActions);
  };
  adopt(actor.pull_params());

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uint32_t s = env.reset();
  while (!stop.load(std::memory_order_relaxed)) {
    auto a = epsilon_greedy(q.row(s), opts.epsilon, unit(rng), static_cast<std::uint32_t>(rng() % kGridActions));
    StepResult r = env.step(a);
    double bootstrap = r.at_goal ? 0.0 : q.max(r.state);
    Priority p = compute_priority(q_target(r.reward, config.gamma, bootstrap), q.at(s, a), kDefaultPMin);
    actor.record(Experience{env.one_hot(s), a, r.reward, env.one_hot(r.state)}, p);
    recorded.fetch_add(1, std::memory_order_relaxed);
    adopt(actor.maybe_pull_params());
    s = r.done ? env.reset() : r.state;
  }
}

}  // namespace toy_detail

// Runs until the greedy policy walks a shortest path or the iteration
// budget is spent. Curve rows go to `curve` when it is non-null.
inline ToyResult run_toy_training(const ToyConfig& config, std::ostream* curve = nullptr) {
  config.validate();
  auto started = Clock::now();
  GridWorld env(config.grid);

  ServerConfig sc;
  sc.mode = ServerMode::kColocatedReplay;
  sc.capacity = config.capacity;
  sc.alpha = config.alpha;
  sc.state_dim = env.state_dim();
  sc.action_count = kGridActions;
  sc.seed = config.seed;
  Server server(sc);
  server.start();

  ToyLearner toy(config.grid, config.gamma, config.learning_rate);
  LearnerOptions lopts;
  lopts.batch_size = config.learner_batch;
  lopts.n_update = config.n_update;
  lopts.retry_interval = std::chrono::milliseconds(5);
  LearnerClient learner(
      Connection::open(server.endpoint(), wire::Hello{wire::Role::kLearner, 0, env.state_dim(), kGridActions, 0}),
      lopts);
  learner.set_params(toy.online().to_bytes());

  std::atomic<bool> stop{false};
  std::atomic<std::uint64_t> recorded{0};
  std::mutex error_mutex;
  std::exception_ptr actor_error;
  std::vector<std::thread> actors;
  for (std::uint32_t i = 0; i < config.actors; ++i) {
    actors.emplace_back([&, i] {
      try {
        toy_detail::actor_loop(server.endpoint(), config, i, stop, recorded);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!actor_error) actor_error = std::current_exception();
        stop = true;
      }
    });
  }

  ToyResult result;
  result.optimal_steps = env.optimal_steps();
  if (curve) *curve << "iteration,greedy_steps,optimal_steps,mean_batch_priority,stale_updates,param_version,elapsed_s\n";
  double priority_sum = 0.0;
  std::uint64_t priority_count = 0;
  try {
    while (result.iterations < config.max_iterations && !stop.load()) {
      IterationReport it = learner.iteration([&](const SampledBatch& b) {
        TrainOutcome o = toy.train(b);
        for (double p : o.priorities) priority_sum += p;
        priority_count += o.priorities.size();
        return o;
      });
      ++result.iterations;
      result.stale_updates += it.update_ack.stale;
      if (learner.target_refresh_due()) toy.refresh_target();
      result.greedy_steps = greedy_rollout(config.grid, toy.online());
      result.converged = result.greedy_steps == result.optimal_steps;
      bool last = result.converged || result.iterations == config.max_iterations;
      if (curve && (result.iterations % config.curve_every == 0 || last)) {
        *curve << result.iterations << ',' << result.greedy_steps << ',' << result.optimal_steps << ','
               << (priority_count ? priority_sum / static_cast<double>(priority_count) : 0.0) << ','
               << result.stale_updates << ',' << it.param_version << ',' << elapsed_us(started) / 1e6 << '\n';
        priority_sum = 0.0;
        priority_count = 0;
      }
      if (result.converged) break;
    }
  } catch (...) {
    stop = true;
    for (auto& t : actors) t.join();
    server.stop();
    throw;
  }

  stop = true;
  for (auto& t : actors) t.join();
  server.flush();
  result.experiences_recorded = recorded.load();
  result.experiences_added = server.stats().snapshot().experiences_added;
  result.mean_repeat_priority_change = toy.mean_repeat_priority_change();
  server.stop();
  if (actor_error) std::rethrow_exception(actor_error);
  result.elapsed_s = elapsed_us(started) / 1e6;
  return result;
}

}  // namespace replaynet::harness

#endif  // REPLAYNET_HARNESS_TOY_TRAINING_HPP_
