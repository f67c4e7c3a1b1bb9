#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "replaynet/harness/bench.hpp"
#include "replaynet/harness/toy_training.hpp"

namespace replaynet::harness {
namespace {

// Breadth-first distance on the grid graph, independent of optimal_steps().
std::uint32_t BfsDistance(const GridWorld::Config& c) {
  const int w = static_cast<int>(c.width), h = static_cast<int>(c.height);
  std::vector<int> dist(static_cast<std::size_t>(w * h), -1);
  auto id = [&](int x, int y) { return static_cast<std::size_t>(y * w + x); };
  std::deque<std::pair<int, int>> frontier{{static_cast<int>(c.start.x), static_cast<int>(c.start.y)}};
  dist[id(frontier.front().first, frontier.front().second)] = 0;
  const int dx[] = {0, 0, -1, 1}, dy[] = {-1, 1, 0, 0};
  while (!frontier.empty()) {
    auto [x, y] = frontier.front();
    frontier.pop_front();
    for (int a = 0; a < 4; ++a) {
      int nx = std::clamp(x + dx[a], 0, w - 1), ny = std::clamp(y + dy[a], 0, h - 1);
      if (dist[id(nx, ny)] < 0) {
        dist[id(nx, ny)] = dist[id(x, y)] + 1;
        frontier.push_back({nx, ny});
      }
    }
  }
  return static_cast<std::uint32_t>(dist[id(static_cast<int>(c.goal.x), static_cast<int>(c.goal.y))]);
}

TEST(GridWorld, WallsKeepTheAgentInPlace) {
  GridWorld env(GridWorld::Config{});
  EXPECT_EQ(env.step(static_cast<std::uint32_t>(Move::kUp)).state, 0u);
  EXPECT_EQ(env.step(static_cast<std::uint32_t>(Move::kLeft)).state, 0u);
  StepResult r = env.step(static_cast<std::uint32_t>(Move::kRight));
  EXPECT_EQ(r.state, 1u);
  EXPECT_FLOAT_EQ(r.reward, -0.01f);
  EXPECT_FALSE(r.done);
  EXPECT_THROW(env.step(4), DomainError);
}

TEST(GridWorld, GoalEndsTheEpisodeWithReward) {
  GridWorld::Config c;
  c.width = 2;
  c.height = 1;
  c.goal = Cell{1, 0};
  GridWorld env(c);
  StepResult r = env.step(static_cast<std::uint32_t>(Move::kRight));
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.at_goal);
  EXPECT_FLOAT_EQ(r.reward, 1.0f);
}

TEST(GridWorld, EpisodeCapTruncates) {
  GridWorld::Config c;
  c.episode_cap = 3;
  GridWorld env(c);
  EXPECT_FALSE(env.step(0).done);
  EXPECT_FALSE(env.step(0).done);
  StepResult r = env.step(0);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.at_goal);
}

TEST(GridWorld, OptimalStepsMatchesBreadthFirstSearch) {
  for (const char* size : {"2x1", "5x5", "3x7", "8x2"}) {
    auto c = GridWorld::parse_size(size);
    EXPECT_EQ(GridWorld(c).optimal_steps(), BfsDistance(c)) << size;
  }
  GridWorld::Config c;
  c.start = Cell{3, 1};
  c.goal = Cell{0, 4};
  EXPECT_EQ(GridWorld(c).optimal_steps(), BfsDistance(c));
}

TEST(GridWorld, OneHotRoundTrips) {
  GridWorld env(GridWorld::Config{});
  for (std::uint32_t s = 0; s < env.state_count(); ++s) {
    auto v = env.one_hot(s);
    ASSERT_EQ(v.size(), 25u);
    float sum = 0;
    for (float x : v) sum += x;
    EXPECT_EQ(sum, 1.0f);
    EXPECT_EQ(env.decode(v), s);
  }
}

TEST(GridWorld, ParseSizeRejectsGarbage) {
  EXPECT_THROW(GridWorld::parse_size("5"), DomainError);
  EXPECT_THROW(GridWorld::parse_size("x5"), DomainError);
  EXPECT_THROW(GridWorld(GridWorld::parse_size("1x1")), DomainError);
}

TEST(QTable, BytesRoundTrip) {
  QTable q(25, 4);
  q.at(3, 2) = 0.5f;
  q.at(24, 0) = -1.25f;
  auto bytes = q.to_bytes();
  EXPECT_EQ(bytes.size(), 25u * 4 * 4);
  EXPECT_EQ(QTable::from_bytes(bytes, 25, 4), q);
  bytes.pop_back();
  EXPECT_THROW(QTable::from_bytes(bytes, 25, 4), DomainError);
}

TEST(QTable, GreedyBreaksTiesLow) {
  QTable q(1, 4);
  q.at(0, 1) = 1.0f;
  q.at(0, 3) = 1.0f;
  EXPECT_EQ(q.greedy(0), 1u);
}

SampledBatch AllTransitions(const GridWorld::Config& c) {
  GridWorld env(c);
  SampledBatch batch;
  for (std::uint32_t s = 0; s < env.state_count(); ++s) {
    if (s == env.goal_state()) continue;
    for (std::uint32_t a = 0; a < kGridActions; ++a) {
      GridWorld probe(c);
      Cell at = probe.cell(s);
      for (std::uint32_t i = 0; i < at.x; ++i) probe.step(static_cast<std::uint32_t>(Move::kRight));
      for (std::uint32_t i = 0; i < at.y; ++i) probe.step(static_cast<std::uint32_t>(Move::kDown));
      StepResult r = probe.step(a);
      batch.experiences.push_back(Experience{env.one_hot(s), a, r.reward, env.one_hot(r.state)});
      batch.slot_ids.push_back(batch.slot_ids.size());
      batch.probabilities.push_back(1.0);
    }
  }
  return batch;
}

TEST(ToyLearner, GammaZeroLeavesOnlyGoalTransitionsNonzero) {
  GridWorld::Config c;
  c.step_penalty = 0.0f;
  GridWorld env(c);
  ToyLearner toy(c, 0.0, 1.0);
  toy.train(AllTransitions(c));
  for (std::uint32_t s = 0; s < env.state_count(); ++s) {
    for (std::uint32_t a = 0; a < kGridActions; ++a) {
      Cell at = env.cell(s);
      bool enters_goal = (at == Cell{3, 4} && a == static_cast<std::uint32_t>(Move::kRight)) ||
                         (at == Cell{4, 3} && a == static_cast<std::uint32_t>(Move::kDown));
      EXPECT_EQ(toy.online().at(s, a), enters_goal ? 1.0f : 0.0f) << s << "," << a;
    }
  }
}

TEST(ToyLearner, AppliesBellmanAssignmentAgainstTarget) {
  GridWorld::Config c;
  ToyLearner toy(c, 0.95, 1.0);
  auto batch = AllTransitions(c);
  toy.train(batch);
  toy.refresh_target();
  QTable before = toy.online();
  auto out = toy.train(batch);
  GridWorld env(c);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch.experiences[i];
    std::uint32_t s = env.decode(e.state), s2 = env.decode(e.next_state);
    double expected = e.reward + (s2 == env.goal_state() ? 0.0 : 0.95 * before.max(s2));
    EXPECT_NEAR(toy.online().at(s, e.action), expected, 1e-6);
    EXPECT_NEAR(out.priorities[i], std::max(std::abs(expected - before.at(s, e.action)), kDefaultPMin), 1e-6);
  }
  EXPECT_EQ(QTable::from_bytes(out.params, 25, 4), toy.online());
}

TEST(ToyTraining, SeedFortyTwoReachesShortestPath) {
  ToyConfig config;
  config.seed = 42;
  std::ostringstream curve;
  ToyResult r = run_toy_training(config, &curve);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 50000u);
  EXPECT_EQ(r.optimal_steps, BfsDistance(config.grid));
  EXPECT_EQ(r.greedy_steps, r.optimal_steps);
  EXPECT_GT(r.experiences_added, 0u);
  EXPECT_LE(r.experiences_added, r.experiences_recorded);

  std::istringstream lines(curve.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "iteration,greedy_steps,optimal_steps,mean_batch_priority,stale_updates,param_version,elapsed_s");
  int rows = 0;
  std::string last;
  while (std::getline(lines, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6) << line;
    last = line;
    ++rows;
  }
  EXPECT_GE(rows, 1);
  EXPECT_EQ(last.substr(0, last.find(',')), std::to_string(r.iterations));
}

TEST(ToyTraining, RepeatedlyTrainedPrioritiesDecrease) {
  ToyConfig config;
  config.seed = 7;
  ToyResult r = run_toy_training(config);
  EXPECT_LT(r.mean_repeat_priority_change, 0.0);
}

TEST(ToyTraining, RejectsBadConfig) {
  ToyConfig config;
  config.actors = 0;
  EXPECT_THROW(run_toy_training(config), DomainError);
  config.actors = 2;
  config.gamma = 1.5;
  EXPECT_THROW(run_toy_training(config), DomainError);
}

BenchConfig SmallBench(ServerMode mode, std::uint32_t actors) {
  BenchConfig c;
  c.mode = mode;
  c.actor_count = actors;
  c.state_dim = 16;
  c.actor_batch_size = 50;
  c.train_batch_size = 64;
  c.param_blob_bytes = 4096;
  c.n_pull = 50;
  c.duration = std::chrono::milliseconds(400);
  return c;
}

TEST(Bench, RejectsZeroActors) {
  auto c = SmallBench(ServerMode::kColocatedReplay, 0);
  EXPECT_THROW(run_bench(c), DomainError);
}

TEST(Bench, UnreachableServerIsStartupError) {
  auto c = SmallBench(ServerMode::kColocatedReplay, 1);
  TcpListener probe(Endpoint{"127.0.0.1", 0});
  std::uint16_t port = probe.port();
  probe.close();
  c.server = Endpoint{"127.0.0.1", port};
  EXPECT_THROW(run_bench(c), TransportError);
}

TEST(Bench, ModeMismatchWithExternalServer) {
  ServerConfig sc;
  sc.mode = ServerMode::kSharedMemory;
  sc.state_dim = 16;
  Server server(sc);
  server.start();
  auto c = SmallBench(ServerMode::kColocatedReplay, 1);
  c.server = server.endpoint();
  EXPECT_THROW(run_bench(c), DomainError);
  server.stop();
}

TEST(Bench, ModeBReportIsConsistentWithServerStats) {
  BenchReport r = run_bench(SmallBench(ServerMode::kColocatedReplay, 2));
  EXPECT_GT(r.experiences_pushed, 0u);
  EXPECT_EQ(r.experiences_pushed, r.experiences_recorded);
  EXPECT_EQ(r.server.experiences_added, r.experiences_pushed);
  EXPECT_EQ(r.server.experiences_sampled, r.learner_iterations * 64);
  EXPECT_EQ(r.server.priority_updates_applied + r.server.priority_updates_stale, r.learner_iterations * 64);
  EXPECT_EQ(r.push.count, r.server.pushes_received - r.backpressure_retries);
  EXPECT_EQ(r.learner_sample.count, r.learner_iterations);
  EXPECT_EQ(r.push_per_actor.size(), 2u);
  for (const auto* s : {&r.push, &r.pull_params, &r.learner_sample, &r.learner_update, &r.learner_set}) {
    EXPECT_GE(s->mean_us, 0.0);
    EXPECT_GE(s->p50_us, 0.0);
    EXPECT_LE(s->p50_us, s->p99_us);
  }
  EXPECT_GT(r.push_throughput, 0.0);
  EXPECT_EQ(r.pulled_per_second, 0.0);
}

TEST(Bench, ModeAPullsEverythingPushed) {
  BenchReport r = run_bench(SmallBench(ServerMode::kSharedMemory, 2));
  EXPECT_GT(r.experiences_pushed, 0u);
  EXPECT_EQ(r.server.experiences_added, 0u);
  EXPECT_EQ(r.server.experiences_drained, r.experiences_pulled);
  EXPECT_LE(r.experiences_pulled, r.experiences_pushed);
  EXPECT_EQ(r.server.learner_experience_records, r.experiences_pulled);
  EXPECT_GT(r.pulled_per_second, 0.0);
}

TEST(Bench, ModeBMovesFewerLearnerBytesWhenPushesOutnumberSamples) {
  auto a = SmallBench(ServerMode::kSharedMemory, 2);
  auto b = SmallBench(ServerMode::kColocatedReplay, 2);
  for (auto* c : {&a, &b}) c->learner_train_delay = std::chrono::milliseconds(40);
  BenchReport ra = run_bench(a);
  BenchReport rb = run_bench(b);
  ASSERT_GT(rb.experiences_pushed, rb.server.experiences_sampled);
  EXPECT_LT(rb.server.learner_experience_bytes, ra.server.learner_experience_bytes);
  // Byte counters agree with record arithmetic.
  EXPECT_EQ(rb.server.learner_experience_bytes,
            rb.learner_iterations * (12 + 4 + 64 * wire::sample_record_size(16)));
}

TEST(Bench, CsvHasOneRowPerMetricAndActorCount) {
  std::vector<BenchReport> reports;
  for (std::uint32_t n : {1u, 2u}) reports.push_back(run_bench(SmallBench(ServerMode::kColocatedReplay, n)));
  std::ostringstream out;
  write_bench_csv(out, reports);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "metric,mode,actors,value");
  std::map<std::string, std::set<std::string>> actors_by_metric;
  while (std::getline(lines, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    ASSERT_EQ(f.size(), 4u) << line;
    EXPECT_EQ(f[1], "B");
    std::size_t used = 0;
    std::stod(f[3], &used);
    EXPECT_EQ(used, f[3].size()) << line;
    EXPECT_TRUE(actors_by_metric[f[0]].insert(f[2]).second) << "duplicate " << line;
  }
  EXPECT_GT(actors_by_metric.size(), 20u);
  for (const auto& [metric, counts] : actors_by_metric) EXPECT_EQ(counts.size(), 2u) << metric;
}

TEST(Breakdown, EmptyReportListIsHeaderOnly) {
  std::ostringstream out;
  emit_breakdown(out, {});
  EXPECT_EQ(out.str(), "mode,actors,segment,actor_phase,actor_s,learner_phase,learner_s\n");
}

TEST(Breakdown, ThreeRowsPerActorCount) {
  std::vector<BenchReport> reports(3);
  for (std::uint32_t i = 0; i < 3; ++i) reports[i].actor_count = 1u << i;
  std::ostringstream out;
  emit_breakdown(out, reports);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  std::map<std::string, int> rows;
  while (std::getline(lines, line)) ++rows[line.substr(0, line.find(',', 2))];
  EXPECT_EQ(rows, (std::map<std::string, int>{{"B,1", 3}, {"B,2", 3}, {"B,4", 3}}));
}

// Calibration: with known sleeps in the compute phases, the three segments
// of each side add up to the measured run length.
TEST(Breakdown, SegmentsSumToWallTimeWithInjectedDelays) {
  auto c = SmallBench(ServerMode::kColocatedReplay, 2);
  c.duration = std::chrono::milliseconds(1500);
  c.actor_step_delay = std::chrono::microseconds(1000);
  c.learner_train_delay = std::chrono::microseconds(20000);
  auto started = Clock::now();
  BenchReport r = run_bench(c);
  double wall = elapsed_us(started) / 1e6;

  std::ostringstream out;
  emit_breakdown(out, {r});
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  double actor_sum = 0, learner_sum = 0;
  while (std::getline(lines, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    ASSERT_EQ(f.size(), 7u);
    actor_sum += std::stod(f[4]);
    learner_sum += std::stod(f[6]);
  }
  EXPECT_NEAR(actor_sum, 1.5, 0.05 * 1.5);
  EXPECT_NEAR(learner_sum, 1.5, 0.05 * 1.5);
  EXPECT_LE(actor_sum, wall);
  EXPECT_LE(learner_sum, wall);
  // The injected sleeps land in the compute segment.
  double per_actor_steps = static_cast<double>(r.experiences_recorded) / 2.0;
  EXPECT_GE(r.breakdown.actor_compute_s, per_actor_steps * 1e-3);
  EXPECT_GE(r.breakdown.learner_compute_s, static_cast<double>(r.learner_iterations) * 0.02);
}

// Same seeds, one actor, pushes finished before sampling: the experience
// stream and the sampled slot ids repeat exactly.
TEST(Determinism, SingleActorRunsRepeat) {
  auto run = [] {
    ServerConfig sc;
    sc.state_dim = 8;
    sc.capacity = 1024;
    sc.seed = 11;
    Server server(sc);
    server.start();
    ActorOptions ao;
    ao.batch_size = 40;
    ao.seed = 3;
    ActorClient actor(Connection::open(server.endpoint(), wire::Hello{wire::Role::kActor, 1, 8, 4, 0}), ao);
    auto pool = synthetic_experiences(5, 200, 8, 4);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> prio(0.0, 1.0);
    for (const auto& e : pool) actor.record(e, Priority::clamped(prio(rng), kDefaultPMin));
    server.flush();
    auto learner = Connection::open(server.endpoint(), wire::Hello{wire::Role::kLearner, 2, 8, 4, 0});
    std::vector<std::uint64_t> ids;
    for (int i = 0; i < 10; ++i) {
      auto resp = learner.call<wire::SampleResp>(wire::SampleReq{32});
      for (auto& rec : resp.records) {
        ids.push_back(rec.slot_id);
        EXPECT_EQ(rec.experience, pool.at(rec.slot_id));
      }
    }
    server.stop();
    return std::make_pair(ids, pool);
  };
  auto [ids1, pool1] = run();
  auto [ids2, pool2] = run();
  EXPECT_EQ(pool1, pool2);
  EXPECT_EQ(ids1, ids2);
  EXPECT_EQ(ids1.size(), 320u);
}

}  // namespace
}  // namespace replaynet::harness
