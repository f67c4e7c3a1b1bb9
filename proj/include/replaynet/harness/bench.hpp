#ifndef REPLAYNET_HARNESS_BENCH_HPP_
#define REPLAYNET_HARNESS_BENCH_HPP_

// Latency benchmark: synthetic actors push random experiences at full rate
// while one synthetic learner loops sample / train / update / set. All
// timings come from the client side of each request.

#include <atomic>
#include <chrono>
#include <exception>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "replaynet/client.hpp"
#include "replaynet/server.hpp"
#include "replaynet/stats.hpp"

namespace replaynet::harness {

struct BenchConfig {
  ServerMode mode = ServerMode::kColocatedReplay;
  std::uint32_t actor_count = 1;
  std::uint32_t state_dim = 28224;  // 4 x 84 x 84
  std::uint32_t action_count = 4;
  std::uint32_t actor_batch_size = 200;
  std::uint32_t train_batch_size = 512;
  std::uint64_t replay_capacity = 65536;
  std::size_t param_blob_bytes = 13u << 20;
  std::uint32_t n_pull = 200;
  bool gated_pull = false;
  std::uint32_t queue_batches = 64;
  std::chrono::milliseconds duration{3000};
  std::chrono::milliseconds pull_period{100};  // mode A replay puller
  std::uint64_t seed = 42;
  // Connect here instead of starting an in-process server.
  std::optional<Endpoint> server;
  // With a server endpoint, start the in-process server listening there.
  bool spawn_server = false;
  // Synthetic compute, for calibrating the breakdown.
  std::chrono::microseconds actor_step_delay{0};
  std::chrono::microseconds learner_train_delay{0};

  void validate() const {
    if (actor_count == 0) throw DomainError("actor_count must be >= 1");
    if (actor_batch_size == 0 || train_batch_size == 0 || n_pull == 0) {
      throw DomainError("batch sizes and n_pull must be >= 1");
    }
    if (replay_capacity == 0 || queue_batches == 0) throw DomainError("capacity and queue_batches must be >= 1");
    if (action_count == 0) throw DomainError("action_count must be >= 1");
    if (duration.count() <= 0) throw DomainError("duration must be positive");
  }
};

// Where each side's wall time went. Actor figures are means over actors.
struct Breakdown {
  double actor_wall_s = 0.0;
  double actor_compute_s = 0.0;
  double actor_push_s = 0.0;
  double actor_pull_s = 0.0;
  double learner_wall_s = 0.0;
  double learner_compute_s = 0.0;
  double learner_sample_s = 0.0;  // sample and priority update
  double learner_set_s = 0.0;
};

struct BenchReport {
  ServerMode mode = ServerMode::kColocatedReplay;
  std::uint32_t actor_count = 0;
  std::uint32_t state_dim = 0;

  LatencySummary push;
  std::vector<LatencySummary> push_per_actor;
  LatencySummary pull_params;
  LatencySummary learner_sample;
  LatencySummary learner_update;
  LatencySummary learner_set;
  LatencySummary learner_train;

  std::uint64_t experiences_recorded = 0;
  std::uint64_t experiences_pushed = 0;
  std::uint64_t backpressure_retries = 0;
  double push_throughput = 0.0;  // experiences accepted per second, all actors
  std::uint64_t learner_iterations = 0;
  std::uint64_t not_ready_retries = 0;
  std::uint64_t experiences_pulled = 0;  // mode A puller
  double pulled_per_second = 0.0;

  std::uint64_t actor_bytes_out = 0;
  std::uint64_t actor_bytes_in = 0;
  std::uint64_t learner_bytes_out = 0;
  std::uint64_t learner_bytes_in = 0;
  std::uint64_t puller_bytes_out = 0;
  std::uint64_t puller_bytes_in = 0;

  wire::StatsSnapshot server;  // counters accrued during this run
  Breakdown breakdown;
};

// Deterministic pool of random experiences; the same seed gives the same
// pool on every host.
inline std::vector<Experience> synthetic_experiences(std::uint64_t seed, std::size_t count,
                                                     std::uint32_t state_dim, std::uint32_t action_count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> value(0.0f, 1.0f);
  std::vector<Experience> pool(count);
  for (auto& e : pool) {
    e.state.resize(state_dim);
    e.next_state.resize(state_dim);
    for (auto& v : e.state) v = value(rng);
    for (auto& v : e.next_state) v = value(rng);
    e.action = static_cast<std::uint32_t>(rng() % action_count);
    e.reward = value(rng) - 0.5f;
  }
  return pool;
}

namespace bench_detail {

inline wire::StatsSnapshot minus(const wire::StatsSnapshot& after, const wire::StatsSnapshot& before) {
  wire::StatsSnapshot d = after;
  std::vector<std::uint64_t> b;
  before.for_each([&](const char*, std::uint64_t v) { b.push_back(v); });
  std::size_t i = 0;
  d.for_each_mut([&](std::uint64_t& v) {
    // Gauges keep their final value; counters become deltas.
    if (&v != &d.queue_depth && &v != &d.queue_high_water && &v != &d.param_version) v -= b[i];
    ++i;
  });
  return d;
}

struct ActorResult {
  std::vector<double> push_latencies;
  std::vector<double> pull_latencies;
  std::uint64_t recorded = 0;
  std::uint64_t pushed = 0;
  std::uint64_t backpressure_retries = 0;
  double wall_us = 0.0;
  double push_us = 0.0;
  double pull_us = 0.0;
  std::uint64_t bytes_out = 0;
  std::uint64_t bytes_in = 0;
};

struct LearnerResult {
  std::vector<double> sample, update, set, train;
  std::uint64_t iterations = 0;
  std::uint64_t not_ready_retries = 0;
  std::uint64_t pulled = 0;
  double wall_us = 0.0;
  double failed_sample_us = 0.0;
  std::uint64_t bytes_out = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t puller_bytes_out = 0;
  std::uint64_t puller_bytes_in = 0;
};

inline wire::Hello hello(const BenchConfig& c, wire::Role role, std::uint32_t id) {
  return wire::Hello{role, id, c.state_dim, c.action_count, 0};
}

inline void run_actor(const BenchConfig& c, const Endpoint& endpoint, std::uint32_t index,
                      const std::atomic<bool>& stop, ActorResult& out) {
  ActorOptions opts;
  opts.batch_size = c.actor_batch_size;
  opts.n_pull = c.n_pull;
  opts.gated_pull = c.gated_pull;
  opts.epsilon = actor_epsilon(index, c.actor_count);
  opts.seed = c.seed + 1 + index;
  ActorClient actor(Connection::open(endpoint, hello(c, wire::Role::kActor, index + 1)), opts);
  auto pool = synthetic_experiences(opts.seed, c.actor_batch_size, c.state_dim, c.action_count);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> priority(0.0, 1.0);

  actor.pull_params();
  auto started = Clock::now();
  while (!stop.load(std::memory_order_relaxed)) {
    for (const auto& e : pool) {
      if (c.actor_step_delay.count() > 0) std::this_thread::sleep_for(c.actor_step_delay);
      actor.record(e, Priority::clamped(priority(rng), kDefaultPMin));
      actor.maybe_pull_params();
      if (stop.load(std::memory_order_relaxed)) break;
    }
  }
  actor.flush();
  out.wall_us = elapsed_us(started);
  out.push_latencies = actor.push_latencies();
  out.pull_latencies = actor.pull_latencies();
  out.recorded = actor.recorded();
  out.pushed = actor.pushed();
  out.backpressure_retries = actor.backpressure_retries();
  out.push_us = actor.push_time_us();
  // The initial parameter fetch happens before the timed loop.
  out.pull_us = actor.pull_time_us() - (out.pull_latencies.empty() ? 0.0 : out.pull_latencies.front());
  out.bytes_out = actor.connection().bytes_sent();
  out.bytes_in = actor.connection().bytes_received();
}

inline void run_learner(const BenchConfig& c, const Endpoint& endpoint, const std::vector<std::uint8_t>& blob,
                        const std::atomic<bool>& stop, LearnerResult& out) {
  LearnerOptions opts;
  opts.batch_size = c.train_batch_size;
  opts.retry_interval = std::chrono::milliseconds(2);
  opts.max_not_ready_retries = 50;
  auto conn = Connection::open(endpoint, hello(c, wire::Role::kLearner, 0));
  PulledReplay* pulled = nullptr;
  Connection* puller = nullptr;
  std::optional<LearnerClient> learner;
  if (c.mode == ServerMode::kColocatedReplay) {
    learner.emplace(std::move(conn), opts);
  } else {
    PulledReplayOptions popts;
    popts.replay.capacity = c.replay_capacity;
    popts.pull_period = c.pull_period;
    popts.seed = c.seed;
    auto replay = std::make_unique<PulledReplay>(
        Connection::open(endpoint, hello(c, wire::Role::kReplayPuller, 0)), popts);
    pulled = replay.get();
    puller = &replay->connection();
    learner.emplace(std::move(conn), opts, std::move(replay));
  }

  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> priority(0.0, 1.0);
  auto train = [&](const SampledBatch& batch) {
    if (c.learner_train_delay.count() > 0) std::this_thread::sleep_for(c.learner_train_delay);
    TrainOutcome o;
    o.params = blob;
    o.priorities.resize(batch.size());
    for (auto& p : o.priorities) p = priority(rng);
    return o;
  };

  auto started = Clock::now();
  while (!stop.load(std::memory_order_relaxed)) {
    auto attempt = Clock::now();
    try {
      IterationReport r = learner->iteration(train);
      out.sample.push_back(r.sample_us);
      out.train.push_back(r.train_us);
      out.update.push_back(r.update_us);
      out.set.push_back(r.set_us);
      out.not_ready_retries += r.not_ready_retries;
      ++out.iterations;
    } catch (const RemoteError& e) {
      if (e.code() != ErrorCode::kNotReady) throw;
      out.failed_sample_us += elapsed_us(attempt);
    }
  }
  out.wall_us = elapsed_us(started);
  out.bytes_out = learner->connection().bytes_sent();
  out.bytes_in = learner->connection().bytes_received();
  if (pulled) {
    out.pulled = pulled->pulled();
    out.puller_bytes_out = puller->bytes_sent();
    out.puller_bytes_in = puller->bytes_received();
  }
}

}  // namespace bench_detail

// One benchmark point. Throws TransportError if the server is unreachable
// and DomainError if it runs a different mode or geometry.
inline BenchReport run_bench(const BenchConfig& config) {
  config.validate();
  std::unique_ptr<Server> local;
  Endpoint endpoint;
  if (config.server && !config.spawn_server) {
    endpoint = *config.server;
  } else {
    ServerConfig sc;
    if (config.server) sc.listen = *config.server;
    sc.mode = config.mode;
    sc.capacity = config.replay_capacity;
    sc.queue_batches = config.queue_batches;
    sc.state_dim = config.state_dim;
    sc.action_count = config.action_count;
    sc.seed = config.seed;
    local = std::make_unique<Server>(sc);
    local->start();
    endpoint = local->endpoint();
  }

  auto observer = Connection::open(endpoint, bench_detail::hello(config, wire::Role::kLearner, 0));
  if (observer.session().server_mode != config.mode) {
    throw DomainError(std::string("server runs mode ") + static_cast<char>(observer.session().server_mode) +
                      ", bench asked for mode " + static_cast<char>(config.mode));
  }
  auto before = observer.stats();

  std::vector<std::uint8_t> blob(config.param_blob_bytes);
  {
    std::mt19937_64 rng(config.seed);
    for (auto& b : blob) b = static_cast<std::uint8_t>(rng());
  }
  observer.call<wire::SetAck>(wire::SetParams{0, blob});

  std::atomic<bool> actors_stop{false};
  std::atomic<bool> learner_stop{false};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto guarded = [&](auto&& fn) {
    return [&, fn]() mutable {
      try {
        fn();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        actors_stop = true;
        learner_stop = true;
      }
    };
  };

  std::vector<bench_detail::ActorResult> actor_results(config.actor_count);
  bench_detail::LearnerResult learner_result;
  std::thread learner(guarded([&] { bench_detail::run_learner(config, endpoint, blob, learner_stop, learner_result); }));
  std::vector<std::thread> actors;
  for (std::uint32_t i = 0; i < config.actor_count; ++i) {
    actors.emplace_back(guarded([&, i] { bench_detail::run_actor(config, endpoint, i, actors_stop, actor_results[i]); }));
  }

  std::this_thread::sleep_for(config.duration);
  actors_stop = true;
  for (auto& t : actors) t.join();
  learner_stop = true;
  learner.join();
  if (error) {
    if (local) local->stop();
    std::rethrow_exception(error);
  }
  if (local) local->flush();
  auto after = observer.stats();
  observer.close();
  if (local) local->stop();

  BenchReport report;
  report.mode = config.mode;
  report.actor_count = config.actor_count;
  report.state_dim = config.state_dim;
  report.server = bench_detail::minus(after, before);

  std::vector<double> all_push, all_pull;
  double wall_sum = 0.0;
  for (auto& a : actor_results) {
    report.push_per_actor.push_back(LatencySummary::of(a.push_latencies));
    all_push.insert(all_push.end(), a.push_latencies.begin(), a.push_latencies.end());
    all_pull.insert(all_pull.end(), a.pull_latencies.begin(), a.pull_latencies.end());
    report.experiences_recorded += a.recorded;
    report.experiences_pushed += a.pushed;
    report.backpressure_retries += a.backpressure_retries;
    report.actor_bytes_out += a.bytes_out;
    report.actor_bytes_in += a.bytes_in;
    wall_sum += a.wall_us;
    report.breakdown.actor_push_s += a.push_us / 1e6;
    report.breakdown.actor_pull_s += a.pull_us / 1e6;
  }
  double n = static_cast<double>(config.actor_count);
  auto& b = report.breakdown;
  b.actor_wall_s = wall_sum / n / 1e6;
  b.actor_push_s /= n;
  b.actor_pull_s /= n;
  b.actor_compute_s = b.actor_wall_s - b.actor_push_s - b.actor_pull_s;
  report.push = LatencySummary::of(all_push);
  report.pull_params = LatencySummary::of(all_pull);
  report.push_throughput = b.actor_wall_s > 0 ? static_cast<double>(report.experiences_pushed) / b.actor_wall_s : 0.0;

  auto& l = learner_result;
  report.learner_sample = LatencySummary::of(l.sample);
  report.learner_update = LatencySummary::of(l.update);
  report.learner_set = LatencySummary::of(l.set);
  report.learner_train = LatencySummary::of(l.train);
  report.learner_iterations = l.iterations;
  report.not_ready_retries = l.not_ready_retries;
  report.experiences_pulled = l.pulled;
  report.learner_bytes_out = l.bytes_out;
  report.learner_bytes_in = l.bytes_in;
  report.puller_bytes_out = l.puller_bytes_out;
  report.puller_bytes_in = l.puller_bytes_in;
  b.learner_wall_s = l.wall_us / 1e6;
  b.learner_sample_s = (report.learner_sample.total_us + report.learner_update.total_us + l.failed_sample_us) / 1e6;
  b.learner_set_s = report.learner_set.total_us / 1e6;
  b.learner_compute_s = b.learner_wall_s - b.learner_sample_s - b.learner_set_s;
  report.pulled_per_second = b.learner_wall_s > 0 ? static_cast<double>(l.pulled) / b.learner_wall_s : 0.0;
  return report;
}

// Runs one point per actor count against fresh in-process servers (or the
// configured external one).
inline std::vector<BenchReport> run_sweep(BenchConfig base, const std::vector<std::uint32_t>& actor_counts) {
  std::vector<BenchReport> out;
  for (auto n : actor_counts) {
    base.actor_count = n;
    out.push_back(run_bench(base));
  }
  return out;
}

// Long format: metric,mode,actors,value. One row per metric per report.
inline void write_bench_csv(std::ostream& out, const std::vector<BenchReport>& reports) {
  out << "metric,mode,actors,value\n";
  for (const auto& r : reports) {
    // Counters print as integers, measurements with full double precision.
    auto row = [&](const char* metric, auto value) {
      out << metric << ',' << static_cast<char>(r.mode) << ',' << r.actor_count << ',';
      if constexpr (std::is_integral_v<decltype(value)>) {
        out << value;
      } else {
        out << std::setprecision(17) << value << std::setprecision(6);
      }
      out << '\n';
    };
    auto latency = [&](const std::string& name, const LatencySummary& s) {
      row((name + "_count").c_str(), static_cast<std::uint64_t>(s.count));
      row((name + "_mean_us").c_str(), s.mean_us);
      row((name + "_p50_us").c_str(), s.p50_us);
      row((name + "_p99_us").c_str(), s.p99_us);
      row((name + "_max_us").c_str(), s.max_us);
    };
    latency("push", r.push);
    latency("pull_params", r.pull_params);
    latency("learner_sample", r.learner_sample);
    latency("learner_update", r.learner_update);
    latency("learner_set", r.learner_set);
    row("push_throughput_exp_per_s", r.push_throughput);
    row("experiences_pushed", r.experiences_pushed);
    row("backpressure_retries", r.backpressure_retries);
    row("learner_iterations", r.learner_iterations);
    row("experiences_pulled_per_s", r.pulled_per_second);
    row("actor_bytes_out", r.actor_bytes_out);
    row("actor_bytes_in", r.actor_bytes_in);
    row("learner_bytes_out", r.learner_bytes_out);
    row("learner_bytes_in", r.learner_bytes_in);
    row("puller_bytes_in", r.puller_bytes_in);
    row("server_experiences_added", r.server.experiences_added);
    row("server_learner_experience_records", r.server.learner_experience_records);
    row("server_learner_experience_bytes", r.server.learner_experience_bytes);
  }
}

// Stacked-bar data: three rows per report, pairing actor compute/push/pull
// with learner compute/sample/set. Each seconds column sums to that side's
// wall time.
inline void emit_breakdown(std::ostream& out, const std::vector<BenchReport>& reports) {
  out << "mode,actors,segment,actor_phase,actor_s,learner_phase,learner_s\n";
  for (const auto& r : reports) {
    const auto& b = r.breakdown;
    auto row = [&](int segment, const char* ap, double as, const char* lp, double ls) {
      out << static_cast<char>(r.mode) << ',' << r.actor_count << ',' << segment << ',' << ap << ',' << as << ','
          << lp << ',' << ls << '\n';
    };
    row(0, "compute", b.actor_compute_s, "compute", b.learner_compute_s);
    row(1, "push", b.actor_push_s, "sample", b.learner_sample_s);
    row(2, "pull", b.actor_pull_s, "set", b.learner_set_s);
  }
}

}  // namespace replaynet::harness

#endif  // REPLAYNET_HARNESS_BENCH_HPP_
