#include "replaynet/client.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "replaynet/server.hpp"

namespace replaynet {
namespace {

constexpr std::uint32_t kDim = 4;
constexpr std::uint32_t kActions = 3;

wire::Hello HelloAs(wire::Role role) { return wire::Hello{role, 1, kDim, kActions, 0}; }

// Scripted peer on the far end of a socket pair. Answers HELLO itself and
// forwards everything else to the handler, recording message types.
class MockServer {
 public:
  using Handler = std::function<wire::Message(const wire::Message&)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    auto [client_end, server_end] = stream_pair();
    client_end_ = std::move(client_end);
    channel_ = std::make_shared<wire::FrameChannel>(std::move(server_end), kDim);
    thread_ = std::thread([this] { run(); });
  }

  ~MockServer() {
    channel_->shutdown();
    thread_.join();
  }

  Connection Connect(wire::Role role) { return Connection::over(std::move(client_end_), HelloAs(role)); }

  std::vector<wire::MsgType> types() {
    std::lock_guard lock(mutex_);
    return types_;
  }
  std::vector<wire::Message> received() {
    std::lock_guard lock(mutex_);
    return received_;
  }

 private:
  void run() {
    try {
      while (auto m = channel_->receive()) {
        {
          std::lock_guard lock(mutex_);
          types_.push_back(wire::type_of(*m));
          received_.push_back(*m);
        }
        if (std::holds_alternative<wire::Hello>(*m)) {
          wire::HelloAck ack;
          ack.session_id = 1;
          ack.state_dim = kDim;
          ack.action_count = kActions;
          channel_->send(ack);
        } else {
          channel_->send(handler_(*m));
        }
      }
    } catch (const std::exception&) {
    }
  }

  Handler handler_;
  std::unique_ptr<ByteStream> client_end_;
  std::shared_ptr<wire::FrameChannel> channel_;
  std::thread thread_;
  std::mutex mutex_;
  std::vector<wire::MsgType> types_;
  std::vector<wire::Message> received_;
};

Experience Exp(std::mt19937_64& rng) { return oracle::random_experience(rng, kDim, kActions); }

class ClientTest : public ::testing::Test {
 protected:
  void Start(ServerMode mode = ServerMode::kColocatedReplay) {
    ServerConfig c;
    c.mode = mode;
    c.state_dim = kDim;
    c.action_count = kActions;
    c.capacity = 4096;
    server_ = std::make_unique<Server>(c);
    server_->start();
  }
  void TearDown() override {
    if (server_) server_->stop();
  }
  Connection Open(wire::Role role) { return Connection::open(server_->endpoint(), HelloAs(role)); }

  std::unique_ptr<Server> server_;
};

TEST_F(ClientTest, PushesExactlyAtBatchThreshold) {
  Start();
  ActorOptions opts;
  opts.batch_size = 200;
  ActorClient actor(Open(wire::Role::kActor), opts);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 199; ++i) EXPECT_FALSE(actor.record(Exp(rng), Priority(1.0)).has_value());
  EXPECT_EQ(actor.buffered(), 199u);
  auto report = actor.record(Exp(rng), Priority(1.0));
  ASSERT_TRUE(report.has_value());
  EXPECT_EQ(report->count, 200u);
  EXPECT_EQ(report->attempts, 1u);
  EXPECT_GT(report->latency_us, 0.0);
  EXPECT_EQ(actor.buffered(), 0u);
  server_->flush();
  EXPECT_EQ(server_->stats().snapshot().experiences_added, 200u);
}

TEST_F(ClientTest, RecordValidatesShape) {
  Start();
  ActorClient actor(Open(wire::Role::kActor), ActorOptions{});
  Experience bad{{1.0f}, 0, 0.0f, {1.0f}};
  EXPECT_THROW(actor.record(bad, Priority(1.0)), DomainError);
  std::mt19937_64 rng(2);
  Experience e = Exp(rng);
  e.action = kActions;
  EXPECT_THROW(actor.record(e, Priority(1.0)), DomainError);
}

TEST(ActorBackpressure, RetryCarriesTheSameBatch) {
  int rejections = 3;
  MockServer mock([&](const wire::Message& m) -> wire::Message {
    if (std::holds_alternative<wire::PushExperiences>(m) && rejections-- > 0) {
      return wire::ErrorMsg{ErrorCode::kBackpressure, "full"};
    }
    return wire::PushAck{static_cast<std::uint32_t>(std::get<wire::PushExperiences>(m).records.size()), 0};
  });
  ActorOptions opts;
  opts.batch_size = 200;
  ActorClient actor(mock.Connect(wire::Role::kActor), opts);
  std::mt19937_64 rng(3);
  std::vector<Experience> recorded;
  std::optional<PushReport> report;
  for (int i = 0; i < 200; ++i) {
    recorded.push_back(Exp(rng));
    report = actor.record(recorded.back(), Priority(1.0 + i));
  }
  ASSERT_TRUE(report);
  EXPECT_EQ(report->attempts, 4u);
  EXPECT_EQ(actor.backpressure_retries(), 3u);
  auto received = mock.received();
  ASSERT_EQ(received.size(), 5u);  // HELLO + 4 push attempts
  for (std::size_t k = 1; k < received.size(); ++k) {
    const auto& push = std::get<wire::PushExperiences>(received[k]);
    ASSERT_EQ(push.records.size(), 200u);
    for (std::size_t i = 0; i < 200; ++i) {
      EXPECT_EQ(push.records[i].experience, recorded[i]);
      EXPECT_EQ(push.records[i].priority, 1.0 + static_cast<double>(i));
    }
  }
}

TEST(ActorBackpressure, ExhaustedAttemptsKeepBuffer) {
  int rejections = 2;
  MockServer mock([&](const wire::Message& m) -> wire::Message {
    if (rejections-- > 0) return wire::ErrorMsg{ErrorCode::kBackpressure, "full"};
    return wire::PushAck{static_cast<std::uint32_t>(std::get<wire::PushExperiences>(m).records.size()), 0};
  });
  ActorOptions opts;
  opts.batch_size = 10;
  opts.max_push_attempts = 2;
  ActorClient actor(mock.Connect(wire::Role::kActor), opts);
  std::mt19937_64 rng(4);
  std::vector<Experience> recorded;
  for (int i = 0; i < 9; ++i) {
    recorded.push_back(Exp(rng));
    actor.record(recorded.back(), Priority(1.0));
  }
  recorded.push_back(Exp(rng));
  EXPECT_THROW(actor.record(recorded.back(), Priority(1.0)), RemoteError);
  EXPECT_EQ(actor.buffered(), 10u);
  EXPECT_EQ(actor.pushed(), 0u);
  // The next record retries the retained batch; nothing lost, nothing doubled.
  recorded.push_back(Exp(rng));
  auto report = actor.record(recorded.back(), Priority(1.0));
  ASSERT_TRUE(report);
  EXPECT_EQ(report->count, 10u);
  EXPECT_EQ(actor.buffered(), 1u);
  auto last = std::get<wire::PushExperiences>(mock.received().back());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(last.records[i].experience, recorded[i]);
  EXPECT_EQ(actor.recorded(), actor.pushed() + actor.buffered());
}

TEST(ActorBackpressure, OtherErrorsPropagateImmediately) {
  MockServer mock([](const wire::Message&) -> wire::Message {
    return wire::ErrorMsg{ErrorCode::kForbidden, "no"};
  });
  ActorOptions opts;
  opts.batch_size = 1;
  ActorClient actor(mock.Connect(wire::Role::kActor), opts);
  std::mt19937_64 rng(5);
  EXPECT_THROW(actor.record(Exp(rng), Priority(1.0)), RemoteError);
  EXPECT_EQ(actor.backpressure_retries(), 0u);
}

TEST(BackoffSchedule, DoublesAndCaps) {
  Backoff b(1);
  for (std::uint32_t a = 0; a < 15; ++a) {
    double nominal = std::min(1000.0 * std::pow(2.0, a), 1e6);
    auto d = static_cast<double>(b.delay(a).count());
    EXPECT_GE(d, 0.5 * nominal - 1);
    EXPECT_LE(d, nominal);
  }
}

TEST_F(ClientTest, PullCadence) {
  Start();
  ActorOptions opts;
  opts.batch_size = 1000;
  opts.n_pull = 200;
  ActorClient actor(Open(wire::Role::kActor), opts);
  std::mt19937_64 rng(6);
  for (int step = 1; step <= 199; ++step) {
    actor.record(Exp(rng), Priority(1.0));
    EXPECT_FALSE(actor.maybe_pull_params().has_value());
  }
  EXPECT_EQ(actor.pulls(), 0u);
  actor.record(Exp(rng), Priority(1.0));
  auto blob = actor.maybe_pull_params();
  EXPECT_EQ(actor.pulls(), 1u);
  // Cold server: nothing cached, no error.
  EXPECT_FALSE(blob.has_value());
  EXPECT_EQ(actor.cached_params().version, 0u);
  EXPECT_TRUE(actor.cached_params().bytes.empty());
  // A second call at the same step does not pull again.
  actor.maybe_pull_params();
  EXPECT_EQ(actor.pulls(), 1u);
}

TEST(PullCadenceProperty, FloorOfStepsOverNPull) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    MockServer mock([](const wire::Message&) -> wire::Message { return wire::ParamsBlob{0, {}}; });
    ActorOptions opts;
    opts.batch_size = 1u << 20;
    opts.n_pull = 1 + static_cast<std::uint32_t>(rng() % 50);
    ActorClient actor(mock.Connect(wire::Role::kActor), opts);
    std::uint64_t steps = rng() % 500;
    for (std::uint64_t s = 0; s < steps; ++s) {
      actor.record(Exp(rng), Priority(1.0));
      actor.maybe_pull_params();
    }
    EXPECT_EQ(actor.cadence_pulls(), steps / opts.n_pull);
  }
}

TEST_F(ClientTest, GatedPullKeepsCache) {
  Start();
  ActorOptions opts;
  opts.gated_pull = true;
  ActorClient actor(Open(wire::Role::kActor), opts);
  LearnerClient learner(Open(wire::Role::kLearner), LearnerOptions{});
  learner.set_params({1, 2, 3, 4});
  auto first = actor.pull_params();
  ASSERT_TRUE(first);
  EXPECT_EQ(first->version, 1u);
  EXPECT_EQ(first->bytes, (std::vector<std::uint8_t>{1, 2, 3, 4}));
  EXPECT_FALSE(actor.pull_params().has_value());
  EXPECT_EQ(actor.cached_params().bytes, (std::vector<std::uint8_t>{1, 2, 3, 4}));
  learner.set_params({5});
  auto second = actor.pull_params();
  ASSERT_TRUE(second);
  EXPECT_EQ(second->version, 2u);
  EXPECT_EQ(second->bytes, (std::vector<std::uint8_t>{5}));
}

TEST_F(ClientTest, UngatedPullAlwaysDownloads) {
  Start();
  ActorClient actor(Open(wire::Role::kActor), ActorOptions{});
  LearnerClient learner(Open(wire::Role::kLearner), LearnerOptions{});
  learner.set_params(std::vector<std::uint8_t>(1000, 1));
  actor.pull_params();
  auto before = actor.connection().bytes_received();
  EXPECT_FALSE(actor.pull_params().has_value());  // same version: not "new"
  EXPECT_GE(actor.connection().bytes_received() - before, 1000u);
}

TEST_F(ClientTest, ExactlyOnceBatching) {
  Start();
  ActorOptions opts;
  opts.batch_size = 7;
  ActorClient actor(Open(wire::Role::kActor), opts);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 103; ++i) {
    actor.record(Exp(rng), Priority(1.0));
    EXPECT_EQ(actor.recorded(), actor.pushed() + actor.buffered());
    EXPECT_LT(actor.buffered(), 7u);
  }
  server_->flush();
  EXPECT_EQ(server_->stats().snapshot().experiences_added, actor.pushed());
  actor.flush();
  server_->flush();
  EXPECT_EQ(server_->stats().snapshot().experiences_added, 103u);
}

TrainOutcome EchoTrain(const SampledBatch& batch) {
  TrainOutcome out;
  out.params = {42};
  out.priorities.assign(batch.size(), 0.5);
  return out;
}

TEST_F(ClientTest, LearnerIterationHappyPath) {
  Start();
  ActorOptions aopts;
  aopts.batch_size = 100;
  ActorClient actor(Open(wire::Role::kActor), aopts);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 600; ++i) actor.record(Exp(rng), Priority(1.0));
  server_->flush();
  LearnerOptions lopts;
  lopts.batch_size = 512;
  LearnerClient learner(Open(wire::Role::kLearner), lopts);
  auto report = learner.iteration([](const SampledBatch& b) {
    std::this_thread::sleep_for(std::chrono::microseconds(50));
    return EchoTrain(b);
  });
  EXPECT_GT(report.sample_us, 0.0);
  EXPECT_GT(report.train_us, 0.0);
  EXPECT_GT(report.update_us, 0.0);
  EXPECT_GT(report.set_us, 0.0);
  EXPECT_EQ(report.sampled, 512u);
  EXPECT_EQ(report.update_ack.applied, 512u);
  EXPECT_EQ(report.not_ready_retries, 0u);
  EXPECT_EQ(report.param_version, 1u);
  EXPECT_EQ(server_->parameters().get()->bytes, std::vector<std::uint8_t>{42});
}

TEST_F(ClientTest, LearnerRetriesUntilReady) {
  Start();
  LearnerOptions lopts;
  lopts.batch_size = 8;
  lopts.retry_interval = std::chrono::milliseconds(20);
  LearnerClient learner(Open(wire::Role::kLearner), lopts);
  std::thread late_actor([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    ActorOptions aopts;
    aopts.batch_size = 5;
    ActorClient actor(Open(wire::Role::kActor), aopts);
    std::mt19937_64 rng(10);
    for (int i = 0; i < 5; ++i) actor.record(Exp(rng), Priority(1.0));
  });
  auto report = learner.iteration(EchoTrain);
  late_actor.join();
  EXPECT_GE(report.not_ready_retries, 1u);
  EXPECT_EQ(report.sampled, 8u);
  EXPECT_EQ(server_->stats().snapshot().param_sets, 1u);
}

TEST_F(ClientTest, LearnerGivesUpAfterMaxRetries) {
  Start();
  LearnerOptions lopts;
  lopts.retry_interval = std::chrono::milliseconds(1);
  lopts.max_not_ready_retries = 3;
  LearnerClient learner(Open(wire::Role::kLearner), lopts);
  EXPECT_THROW(learner.iteration(EchoTrain), RemoteError);
}

wire::Message ScriptedLearnerPeer(const wire::Message& m) {
  switch (wire::type_of(m)) {
    case wire::MsgType::kSampleReq: {
      wire::SampleResp resp;
      std::mt19937_64 rng(11);
      for (std::uint32_t i = 0; i < std::get<wire::SampleReq>(m).batch_size; ++i) {
        resp.records.push_back(wire::SampledRecord{i, 0.25, Exp(rng)});
      }
      return resp;
    }
    case wire::MsgType::kUpdatePriorities:
      return wire::UpdateAck{static_cast<std::uint32_t>(std::get<wire::UpdatePriorities>(m).updates.size()), 0};
    case wire::MsgType::kSetParams:
      return wire::SetAck{1};
    default:
      return wire::ErrorMsg{ErrorCode::kProtocol, "unexpected"};
  }
}

TEST(LearnerPhases, OrderIsSampleTrainUpdateSet) {
  MockServer mock(ScriptedLearnerPeer);
  LearnerOptions lopts;
  lopts.batch_size = 4;
  LearnerClient learner(mock.Connect(wire::Role::kLearner), lopts);
  bool trained = false;
  for (int i = 0; i < 3; ++i) {
    learner.iteration([&](const SampledBatch& b) {
      // Training runs after the sample reply and before any update is sent.
      auto types = mock.types();
      EXPECT_EQ(types.back(), wire::MsgType::kSampleReq);
      trained = true;
      return EchoTrain(b);
    });
  }
  EXPECT_TRUE(trained);
  std::vector<wire::MsgType> expected = {wire::MsgType::kHello};
  for (int i = 0; i < 3; ++i) {
    expected.push_back(wire::MsgType::kSampleReq);
    expected.push_back(wire::MsgType::kUpdatePriorities);
    expected.push_back(wire::MsgType::kSetParams);
  }
  EXPECT_EQ(mock.types(), expected);
  auto updates = std::get<wire::UpdatePriorities>(mock.received()[2]).updates;
  ASSERT_EQ(updates.size(), 4u);
  for (std::uint64_t i = 0; i < 4; ++i) EXPECT_EQ(updates[i].slot_id, i);
}

TEST(LearnerPhases, WrongPriorityCountSendsNothing) {
  MockServer mock(ScriptedLearnerPeer);
  LearnerOptions lopts;
  lopts.batch_size = 4;
  LearnerClient learner(mock.Connect(wire::Role::kLearner), lopts);
  EXPECT_THROW(learner.iteration([](const SampledBatch&) {
    TrainOutcome out;
    out.priorities = {1.0};
    return out;
  }), DomainError);
  EXPECT_THROW(learner.iteration([](const SampledBatch&) -> TrainOutcome {
    throw std::runtime_error("diverged");
  }), std::runtime_error);
  std::vector<wire::MsgType> expected = {wire::MsgType::kHello, wire::MsgType::kSampleReq,
                                         wire::MsgType::kSampleReq};
  EXPECT_EQ(mock.types(), expected);
}

TEST_F(ClientTest, ModeALearnerWithPulledReplay) {
  Start(ServerMode::kSharedMemory);
  ActorOptions aopts;
  aopts.batch_size = 50;
  ActorClient actor(Open(wire::Role::kActor), aopts);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 300; ++i) actor.record(Exp(rng), Priority(1.0));

  PulledReplayOptions popts;
  popts.replay.capacity = 1024;
  auto replay = std::make_unique<PulledReplay>(Open(wire::Role::kReplayPuller), popts);
  PulledReplay* local = replay.get();
  LearnerOptions lopts;
  lopts.batch_size = 32;
  LearnerClient learner(Open(wire::Role::kLearner), lopts, std::move(replay));
  auto report = learner.iteration(EchoTrain);
  EXPECT_EQ(report.sampled, 32u);
  EXPECT_EQ(report.update_ack.applied, 32u);
  EXPECT_EQ(local->pulled(), 300u);
  EXPECT_EQ(local->tree().live_count(), 300u);
  auto s = server_->stats().snapshot();
  EXPECT_EQ(s.experiences_drained, 300u);
  EXPECT_EQ(s.learner_experience_records, 300u);
  EXPECT_EQ(s.param_sets, 1u);
}

}  // namespace
}  // namespace replaynet
