#ifndef REPLAYNET_CLIENT_HPP_
#define REPLAYNET_CLIENT_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "replaynet/errors.hpp"
#include "replaynet/param_store.hpp"
#include "replaynet/replay_core.hpp"
#include "replaynet/stats.hpp"
#include "replaynet/sum_tree.hpp"
#include "replaynet/transport.hpp"
#include "replaynet/wire/channel.hpp"
#include "replaynet/wire/protocol.hpp"

namespace replaynet {

// One handshaken session with the server. Strict request/response: one
// request in flight at a time.
class Connection {
 public:
  static Connection open(const Endpoint& endpoint, const wire::Hello& hello) {
    return over(connect_tcp(endpoint), hello);
  }

  static Connection over(std::unique_ptr<ByteStream> stream, const wire::Hello& hello) {
    Connection c(std::make_unique<wire::FrameChannel>(std::move(stream), hello.state_dim), hello);
    c.session_ = c.call<wire::HelloAck>(hello);
    return c;
  }

  const wire::HelloAck& session() const noexcept { return session_; }
  const wire::Hello& hello() const noexcept { return hello_; }
  std::uint32_t state_dim() const noexcept { return hello_.state_dim; }

  // Sends a request and returns the expected response type. ERROR frames
  // surface as RemoteError; anything else unexpected is a ProtocolError.
  template <typename Response>
  Response call(const wire::Message& request) {
    channel_->send(request);
    std::optional<wire::Message> reply = channel_->receive();
    if (!reply) throw TransportError("server closed the connection");
    if (auto* err = std::get_if<wire::ErrorMsg>(&*reply)) throw RemoteError(err->code, err->detail);
    if (auto* ok = std::get_if<Response>(&*reply)) return std::move(*ok);
    throw ProtocolError(std::string("unexpected reply ") + wire::type_name(wire::type_of(*reply)) +
                        " to " + wire::type_name(wire::type_of(request)));
  }

  wire::StatsSnapshot stats() { return call<wire::StatsResp>(wire::StatsReq{}).stats; }

  void close() { channel_->shutdown(); }

  std::uint64_t bytes_sent() const noexcept { return channel_->bytes_sent(); }
  std::uint64_t bytes_received() const noexcept { return channel_->bytes_received(); }

 private:
  Connection(std::unique_ptr<wire::FrameChannel> channel, const wire::Hello& hello)
      : channel_(std::move(channel)), hello_(hello) {}

  std::unique_ptr<wire::FrameChannel> channel_;
  wire::Hello hello_;
  wire::HelloAck session_;
};

// Exponential backoff: base * 2^attempt capped, scaled by a jitter factor in [0.5, 1).
class Backoff {
 public:
  explicit Backoff(std::uint64_t seed, std::chrono::microseconds base = std::chrono::milliseconds(1),
                   std::chrono::microseconds cap = std::chrono::seconds(1))
      : rng_(seed), base_(base), cap_(cap) {}

  std::chrono::microseconds delay(std::uint32_t attempt) {
    double raw = static_cast<double>(base_.count()) * std::ldexp(1.0, static_cast<int>(std::min(attempt, 30u)));
    raw = std::min(raw, static_cast<double>(cap_.count()));
    std::uniform_real_distribution<double> jitter(0.5, 1.0);
    return std::chrono::microseconds(static_cast<std::int64_t>(raw * jitter(rng_)));
  }

 private:
  std::mt19937_64 rng_;
  std::chrono::microseconds base_;
  std::chrono::microseconds cap_;
};

struct ActorOptions {
  std::uint32_t batch_size = 200;
  std::uint32_t n_pull = 200;
  double epsilon = 0.4;
  // Ask the server for parameters only when newer than the cached version.
  bool gated_pull = false;
  // Push attempts per batch under BACKPRESSURE; 0 retries until accepted.
  std::uint32_t max_push_attempts = 0;
  std::uint64_t seed = 0;
  bool keep_latencies = true;
};

struct PushReport {
  std::uint32_t count = 0;
  std::uint32_t attempts = 0;
  double latency_us = 0.0;
  std::uint32_t queue_depth = 0;
};

/**
 * Actor side of the actor/learner loop. Buffers (experience, priority)
 * pairs locally and pushes them as one PUSH_EXPERIENCES once batch_size is
 * reached; refreshes cached parameters every n_pull recorded steps.
 *
 * Single-owner; creates no threads.
 */
class ActorClient {
 public:
  ActorClient(Connection connection, ActorOptions options)
      : conn_(std::move(connection)), options_(options), backoff_(options.seed) {
    if (options_.batch_size == 0) throw DomainError("actor batch_size must be >= 1");
    if (options_.n_pull == 0) throw DomainError("actor n_pull must be >= 1");
    buffer_.reserve(options_.batch_size);
  }

  // Records one step. Pushes when the buffer reaches batch_size and
  // reports the push. If BACKPRESSURE outlasts max_push_attempts the
  // RemoteError propagates and the buffer is kept for the next attempt.
  std::optional<PushReport> record(Experience experience, Priority priority) {
    if (experience.state.size() != conn_.state_dim() ||
        experience.next_state.size() != conn_.state_dim()) {
      throw DomainError("experience state_dim does not match the session");
    }
    if (experience.action >= conn_.hello().action_count) {
      throw DomainError("experience action out of range");
    }
    ++step_;
    ++recorded_;
    buffer_.push_back(wire::PushRecord{priority.value(), std::move(experience)});
    if (buffer_.size() < options_.batch_size) return std::nullopt;
    return push(options_.batch_size);
  }

  // Pushes whatever is buffered, even a partial batch.
  std::optional<PushReport> flush() {
    if (buffer_.empty()) return std::nullopt;
    return push(static_cast<std::uint32_t>(buffer_.size()));
  }

  // Pulls when the step counter is a positive multiple of n_pull and no pull
  // has happened at this step yet. Returns the blob only when it is newer.
  std::optional<ParameterBlob> maybe_pull_params() {
    if (step_ == 0 || step_ % options_.n_pull != 0 || last_pull_step_ == step_) return std::nullopt;
    last_pull_step_ = step_;
    ++cadence_pulls_;
    return pull_params();
  }

  // Unconditional pull (initial theta_0 fetch).
  std::optional<ParameterBlob> pull_params() {
    std::uint64_t min_version = options_.gated_pull ? cached_.version : 0;
    auto started = Clock::now();
    auto reply = conn_.call<wire::ParamsBlob>(wire::PullParams{min_version});
    double us = elapsed_us(started);
    pull_time_us_ += us;
    if (options_.keep_latencies) pull_latencies_.push_back(us);
    ++pulls_;
    if (reply.param_version == 0 || reply.param_version <= cached_.version) return std::nullopt;
    cached_.version = reply.param_version;
    cached_.bytes = std::move(reply.blob);
    cached_.updated_at = std::chrono::system_clock::now();
    return cached_;
  }

  const ParameterBlob& cached_params() const noexcept { return cached_; }
  double epsilon() const noexcept { return options_.epsilon; }
  std::uint64_t step() const noexcept { return step_; }
  std::uint64_t recorded() const noexcept { return recorded_; }
  std::uint64_t pushed() const noexcept { return pushed_; }
  std::size_t buffered() const noexcept { return buffer_.size(); }
  std::uint64_t pulls() const noexcept { return pulls_; }
  std::uint64_t cadence_pulls() const noexcept { return cadence_pulls_; }
  std::uint64_t backpressure_retries() const noexcept { return backpressure_retries_; }
  const std::vector<double>& push_latencies() const noexcept { return push_latencies_; }
  const std::vector<double>& pull_latencies() const noexcept { return pull_latencies_; }
  double push_time_us() const noexcept { return push_time_us_; }
  double pull_time_us() const noexcept { return pull_time_us_; }
  Connection& connection() noexcept { return conn_; }

 private:
  PushReport push(std::uint32_t count) {
    wire::PushExperiences message;
    message.records.assign(buffer_.begin(), buffer_.begin() + count);
    PushReport report;
    report.count = count;
    for (std::uint32_t attempt = 0;; ++attempt) {
      auto started = Clock::now();
      try {
        auto ack = conn_.call<wire::PushAck>(message);
        double us = elapsed_us(started);
        push_time_us_ += us;
        if (options_.keep_latencies) push_latencies_.push_back(us);
        report.latency_us = us;
        report.attempts = attempt + 1;
        report.queue_depth = ack.queue_depth;
        break;
      } catch (const RemoteError& e) {
        push_time_us_ += elapsed_us(started);
        if (e.code() != ErrorCode::kBackpressure) throw;
        ++backpressure_retries_;
        if (options_.max_push_attempts != 0 && attempt + 1 >= options_.max_push_attempts) throw;
        auto wait = backoff_.delay(attempt);
        std::this_thread::sleep_for(wait);
        push_time_us_ += static_cast<double>(wait.count());
      }
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + count);
    pushed_ += count;
    return report;
  }

  Connection conn_;
  ActorOptions options_;
  Backoff backoff_;
  std::vector<wire::PushRecord> buffer_;
  ParameterBlob cached_;
  std::uint64_t step_ = 0;
  std::uint64_t last_pull_step_ = 0;
  std::uint64_t recorded_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t pulls_ = 0;
  std::uint64_t cadence_pulls_ = 0;
  std::uint64_t backpressure_retries_ = 0;
  double push_time_us_ = 0.0;
  double pull_time_us_ = 0.0;
  std::vector<double> push_latencies_;
  std::vector<double> pull_latencies_;
};

struct SampledBatch {
  std::vector<std::uint64_t> slot_ids;
  std::vector<double> probabilities;
  std::vector<Experience> experiences;

  std::size_t size() const noexcept { return slot_ids.size(); }
};

// Where a learner draws its prioritized batches from.
class ReplaySource {
 public:
  virtual ~ReplaySource() = default;
  // nullopt while the replay holds no experiences.
  virtual std::optional<SampledBatch> sample(std::uint32_t k) = 0;
  virtual wire::UpdateAck update(std::span<const wire::PriorityUpdate> updates) = 0;
};

// Mode B: the replay lives in the server; sampling and updates go over the wire.
class RemoteReplay final : public ReplaySource {
 public:
  explicit RemoteReplay(Connection& connection) : conn_(connection) {}

  std::optional<SampledBatch> sample(std::uint32_t k) override {
    wire::SampleResp resp;
    try {
      resp = conn_.call<wire::SampleResp>(wire::SampleReq{k});
    } catch (const RemoteError& e) {
      if (e.code() == ErrorCode::kNotReady) return std::nullopt;
      throw;
    }
    SampledBatch batch;
    batch.slot_ids.reserve(resp.records.size());
    batch.probabilities.reserve(resp.records.size());
    batch.experiences.reserve(resp.records.size());
    for (auto& rec : resp.records) {
      batch.slot_ids.push_back(rec.slot_id);
      batch.probabilities.push_back(rec.probability);
      batch.experiences.push_back(std::move(rec.experience));
    }
    return batch;
  }

  wire::UpdateAck update(std::span<const wire::PriorityUpdate> updates) override {
    wire::UpdatePriorities message;
    message.updates.assign(updates.begin(), updates.end());
    return conn_.call<wire::UpdateAck>(message);
  }

 private:
  Connection& conn_;
};

struct PulledReplayOptions {
  ReplayConfig replay;
  // How often sample() drains the server's staging queue.
  std::chrono::milliseconds pull_period{100};
  std::uint32_t max_pull = 1u << 16;
  std::uint64_t seed = 42;
};

// Mode A: the learner keeps its own SumTree and periodically drains the
// server's experience queue into it over a replay-puller session.
class PulledReplay final : public ReplaySource {
 public:
  PulledReplay(Connection puller, PulledReplayOptions options)
      : conn_(std::move(puller)),
        options_(options),
        tree_(options.replay.capacity, options.replay.p_min, options.replay.alpha),
        rng_(options.seed) {}

  // Drains until the server queue is empty; returns the number added.
  std::size_t pull_all() {
    std::size_t total = 0;
    for (;;) {
      std::size_t n = pull_once();
      total += n;
      if (n < options_.max_pull) break;
    }
    last_pull_ = Clock::now();
    return total;
  }

  std::size_t pull_once() {
    auto blob = conn_.call<wire::ExperiencesBlob>(wire::PullExperiences{options_.max_pull});
    for (auto& rec : blob.records) {
      tree_.insert(std::move(rec.experience), Priority::clamped(rec.priority, options_.replay.p_min));
    }
    pulled_ += blob.records.size();
    ++pull_requests_;
    return blob.records.size();
  }

  std::optional<SampledBatch> sample(std::uint32_t k) override {
    if (tree_.empty() || Clock::now() - last_pull_ >= options_.pull_period) pull_all();
    if (tree_.empty()) return std::nullopt;
    auto drawn = tree_.sample_batch(k, rng_);
    for (auto slot : drawn.slot_ids) outstanding_[slot] = tree_.generation(slot);
    return SampledBatch{std::move(drawn.slot_ids), std::move(drawn.probabilities),
                        std::move(drawn.experiences)};
  }

  wire::UpdateAck update(std::span<const wire::PriorityUpdate> updates) override {
    wire::UpdateAck ack;
    for (const auto& u : updates) {
      auto it = outstanding_.find(u.slot_id);
      bool live = tree_.is_live(u.slot_id) &&
                  (it == outstanding_.end() || it->second == tree_.generation(u.slot_id));
      if (!live) {
        ++ack.stale;
        continue;
      }
      tree_.update_priority(u.slot_id, Priority::clamped(u.priority, options_.replay.p_min));
      ++ack.applied;
    }
    for (const auto& u : updates) outstanding_.erase(u.slot_id);
    return ack;
  }

  const SumTree<Experience>& tree() const noexcept { return tree_; }
  std::uint64_t pulled() const noexcept { return pulled_; }
  std::uint64_t pull_requests() const noexcept { return pull_requests_; }
  Connection& connection() noexcept { return conn_; }

 private:
  Connection conn_;
  PulledReplayOptions options_;
  SumTree<Experience> tree_;
  std::mt19937_64 rng_;
  std::unordered_map<std::uint64_t, std::uint64_t> outstanding_;
  Clock::time_point last_pull_{};
  std::uint64_t pulled_ = 0;
  std::uint64_t pull_requests_ = 0;
};

// What a caller-supplied training step hands back: new parameters to publish
// and one new priority per sampled experience.
struct TrainOutcome {
  std::vector<std::uint8_t> params;
  std::vector<double> priorities;
};

using TrainFn = std::function<TrainOutcome(const SampledBatch&)>;

struct LearnerOptions {
  std::uint32_t batch_size = 512;
  std::uint32_t n_update = 2500;
  std::chrono::milliseconds retry_interval{50};
  // Give up on NOT_READY after this many retries; 0 waits forever.
  std::uint32_t max_not_ready_retries = 0;
};

struct IterationReport {
  double sample_us = 0.0;
  double train_us = 0.0;
  double update_us = 0.0;
  double set_us = 0.0;
  std::uint32_t not_ready_retries = 0;
  std::uint32_t sampled = 0;
  wire::UpdateAck update_ack;
  std::uint64_t param_version = 0;
};

/**
 * Learner side: each iteration samples a batch, runs the caller's training
 * step, writes back the new priorities, then publishes the new parameters,
 * in exactly that order.
 */
class LearnerClient {
 public:
  // Mode B: sample and update through the learner's own session.
  LearnerClient(Connection connection, LearnerOptions options)
      : conn_(std::make_unique<Connection>(std::move(connection))), options_(options) {
    replay_ = std::make_unique<RemoteReplay>(*conn_);
    validate();
  }

  // Mode A (or any custom source): parameters still go through connection.
  LearnerClient(Connection connection, LearnerOptions options, std::unique_ptr<ReplaySource> replay)
      : conn_(std::make_unique<Connection>(std::move(connection))),
        options_(options),
        replay_(std::move(replay)) {
    validate();
  }

  std::uint64_t set_params(std::vector<std::uint8_t> blob) {
    auto ack = conn_->call<wire::SetAck>(wire::SetParams{step_, std::move(blob)});
    param_version_ = ack.param_version;
    return param_version_;
  }

  IterationReport iteration(const TrainFn& train_fn) {
    IterationReport report;
    auto started = Clock::now();
    std::optional<SampledBatch> batch;
    for (;;) {
      batch = replay_->sample(options_.batch_size);
      if (batch) break;
      if (options_.max_not_ready_retries != 0 &&
          report.not_ready_retries >= options_.max_not_ready_retries) {
        throw RemoteError(ErrorCode::kNotReady, "replay still empty after retries");
      }
      ++report.not_ready_retries;
      std::this_thread::sleep_for(options_.retry_interval);
    }
    report.sample_us = elapsed_us(started);
    report.sampled = static_cast<std::uint32_t>(batch->size());

    started = Clock::now();
    TrainOutcome outcome = train_fn(*batch);
    report.train_us = elapsed_us(started);
    if (outcome.priorities.size() != batch->size()) {
      throw DomainError("train_fn returned " + std::to_string(outcome.priorities.size()) +
                        " priorities for " + std::to_string(batch->size()) + " experiences");
    }

    started = Clock::now();
    std::vector<wire::PriorityUpdate> updates(batch->size());
    for (std::size_t i = 0; i < updates.size(); ++i) {
      updates[i] = {batch->slot_ids[i], outcome.priorities[i]};
    }
    report.update_ack = replay_->update(updates);
    report.update_us = elapsed_us(started);

    ++step_;
    started = Clock::now();
    report.param_version = set_params(std::move(outcome.params));
    report.set_us = elapsed_us(started);
    return report;
  }

  std::uint64_t step() const noexcept { return step_; }
  std::uint64_t param_version() const noexcept { return param_version_; }
  // True on iterations where a fixed target network should be refreshed.
  bool target_refresh_due() const noexcept { return step_ % options_.n_update == 0; }
  Connection& connection() noexcept { return *conn_; }
  ReplaySource& replay() noexcept { return *replay_; }

 private:
  void validate() const {
    if (options_.batch_size == 0) throw DomainError("learner batch_size must be >= 1");
    if (options_.n_update == 0) throw DomainError("learner n_update must be >= 1");
  }

  std::unique_ptr<Connection> conn_;
  LearnerOptions options_;
  std::unique_ptr<ReplaySource> replay_;
  std::uint64_t step_ = 0;
  std::uint64_t param_version_ = 0;
};

}  // namespace replaynet

#endif  // REPLAYNET_CLIENT_HPP_
