#ifndef REPLAYNET_SERVER_HPP_
#define REPLAYNET_SERVER_HPP_

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
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

using wire::ServerMode;

struct ServerConfig {
  ServerMode mode = ServerMode::kColocatedReplay;
  Endpoint listen{"127.0.0.1", 0};
  std::uint64_t capacity = 65536;
  double alpha = 0.6;
  double p_min = kDefaultPMin;
  std::uint32_t queue_batches = 64;
  std::uint32_t state_dim = 64;
  std::uint32_t action_count = 4;
  std::uint64_t seed = 42;
  bool stratified = false;

  void validate() const {
    if (capacity == 0) throw DomainError("capacity must be >= 1");
    if (queue_batches == 0) throw DomainError("queue_batches must be >= 1");
    if (action_count == 0) throw DomainError("action_count must be >= 1");
    if (!(alpha >= 0.0)) throw DomainError("alpha must be >= 0");
    if (!(p_min > 0.0)) throw DomainError("p_min must be > 0");
  }
};

namespace server_detail {

// Mode A staging queue: bounded FIFO of pushed batches that a replay puller
// drains. A partial drain leaves the remainder of the front batch in place.
class ExperienceQueue {
 public:
  explicit ExperienceQueue(std::uint32_t capacity_batches) : capacity_(capacity_batches) {}

  // nullopt when full; otherwise the depth after appending.
  std::optional<std::uint32_t> try_push(std::vector<wire::PushRecord> records) {
    std::lock_guard lock(mutex_);
    if (batches_.size() >= capacity_) return std::nullopt;
    batches_.push_back(Batch{std::move(records), 0});
    return static_cast<std::uint32_t>(batches_.size());
  }

  std::vector<wire::PushRecord> drain(std::uint32_t max_count, std::uint32_t& depth_after) {
    std::vector<wire::PushRecord> out;
    std::lock_guard lock(mutex_);
    while (out.size() < max_count && !batches_.empty()) {
      Batch& front = batches_.front();
      while (front.next < front.records.size() && out.size() < max_count) {
        out.push_back(std::move(front.records[front.next++]));
      }
      if (front.next == front.records.size()) batches_.pop_front();
    }
    depth_after = static_cast<std::uint32_t>(batches_.size());
    return out;
  }

  std::uint32_t depth() const {
    std::lock_guard lock(mutex_);
    return static_cast<std::uint32_t>(batches_.size());
  }

 private:
  struct Batch {
    std::vector<wire::PushRecord> records;
    std::size_t next;
  };
  mutable std::mutex mutex_;
  std::deque<Batch> batches_;
  std::uint32_t capacity_;
};

// Mode B replay thread. It is the only code that touches the SumTree; I/O
// handlers talk to it through a command queue. Insert batches are bounded
// (the ingress queue); sample/update/flush commands carry a promise that the
// handler waits on.
class ReplayWorker {
 public:
  ReplayWorker(const ServerConfig& config, ServerStats& stats)
      : tree_(config.capacity, config.p_min, config.alpha, config.stratified),
        rng_(config.seed),
        p_min_(config.p_min),
        capacity_batches_(config.queue_batches),
        stats_(stats) {
    thread_ = std::thread([this] { loop(); });
  }

  ~ReplayWorker() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  std::optional<std::uint32_t> try_enqueue(std::vector<wire::PushRecord> records) {
    std::uint32_t depth;
    {
      std::lock_guard lock(mutex_);
      if (pending_inserts_ >= capacity_batches_) return std::nullopt;
      ++pending_inserts_;
      depth = pending_inserts_;
      commands_.emplace_back(Insert{std::move(records)});
    }
    stats_.set_queue_depth(depth);
    cv_.notify_one();
    return depth;
  }

  // nullopt when the replay holds no experiences yet.
  std::optional<wire::SampleResp> sample(std::uint32_t session, std::uint32_t k) {
    std::promise<std::optional<wire::SampleResp>> done;
    auto result = done.get_future();
    post(Sample{session, k, std::move(done)});
    return result.get();
  }

  wire::UpdateAck update(std::uint32_t session, std::vector<wire::PriorityUpdate> updates) {
    std::promise<wire::UpdateAck> done;
    auto result = done.get_future();
    post(Update{session, std::move(updates), std::move(done)});
    return result.get();
  }

  // Returns once every command queued before the call has been applied.
  void flush() {
    std::promise<void> done;
    auto result = done.get_future();
    post(Flush{std::move(done)});
    result.get();
  }

  void forget_session(std::uint32_t session) {
    std::promise<void> done;
    auto result = done.get_future();
    post(Forget{session, std::move(done)});
    result.get();
  }

  std::uint32_t depth() const {
    std::lock_guard lock(mutex_);
    return pending_inserts_;
  }

  // While paused the thread applies nothing; commands keep queueing.
  void set_paused(bool paused) {
    {
      std::lock_guard lock(mutex_);
      paused_ = paused;
    }
    cv_.notify_all();
  }

  // Runs fn on the replay thread, in order with every other command.
  void inspect(std::function<void(const SumTree<Experience>&)> fn) {
    std::promise<void> done;
    auto result = done.get_future();
    post(Inspect{std::move(fn), std::move(done)});
    result.get();
  }

 private:
  struct Insert {
    std::vector<wire::PushRecord> records;
  };
  struct Sample {
    std::uint32_t session;
    std::uint32_t k;
    std::promise<std::optional<wire::SampleResp>> done;
  };
  struct Update {
    std::uint32_t session;
    std::vector<wire::PriorityUpdate> updates;
    std::promise<wire::UpdateAck> done;
  };
  struct Flush {
    std::promise<void> done;
  };
  struct Forget {
    std::uint32_t session;
    std::promise<void> done;
  };
  struct Inspect {
    std::function<void(const SumTree<Experience>&)> fn;
    std::promise<void> done;
  };
  using Command = std::variant<Insert, Sample, Update, Flush, Forget, Inspect>;

  void post(Command command) {
    {
      std::lock_guard lock(mutex_);
      if (stopping_) throw TransportError("replay worker stopped");
      commands_.push_back(std::move(command));
    }
    cv_.notify_one();
  }

  void loop() {
    for (;;) {
      Command command;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stopping_ || (!paused_ && !commands_.empty()); });
        if (commands_.empty()) return;
        command = std::move(commands_.front());
        commands_.pop_front();
      }
      std::visit([this](auto& c) { apply(c); }, command);
    }
  }

  void apply(Insert& c) {
    for (auto& rec : c.records) {
      tree_.insert(std::move(rec.experience), Priority::clamped(rec.priority, p_min_));
    }
    stats_.experiences_added.fetch_add(c.records.size());
    std::uint32_t depth;
    {
      std::lock_guard lock(mutex_);
      depth = --pending_inserts_;
    }
    stats_.set_queue_depth(depth);
  }

  void apply(Sample& c) {
    if (tree_.empty()) {
      c.done.set_value(std::nullopt);
      return;
    }
    auto drawn = tree_.sample_batch(c.k, rng_);
    wire::SampleResp resp;
    resp.records.reserve(drawn.size());
    auto& outstanding = outstanding_[c.session];
    for (std::size_t i = 0; i < drawn.size(); ++i) {
      std::uint64_t slot = drawn.slot_ids[i];
      outstanding[slot] = tree_.generation(slot);
      resp.records.push_back(
          wire::SampledRecord{slot, drawn.probabilities[i], std::move(drawn.experiences[i])});
    }
    c.done.set_value(std::move(resp));
  }

  // A slot sampled by this session and overwritten since is stale, as is
  // any slot that was never written. Duplicate ids resolve last-write-wins.
  void apply(Update& c) {
    wire::UpdateAck ack;
    auto& outstanding = outstanding_[c.session];
    for (const auto& u : c.updates) {
      bool live = tree_.is_live(u.slot_id);
      auto it = outstanding.find(u.slot_id);
      if (live && it != outstanding.end() && it->second != tree_.generation(u.slot_id)) {
        live = false;
      }
      if (!live) {
        ++ack.stale;
        continue;
      }
      tree_.update_priority(u.slot_id, Priority::clamped(u.priority, p_min_));
      ++ack.applied;
    }
    for (const auto& u : c.updates) outstanding.erase(u.slot_id);
    stats_.priority_updates_applied.fetch_add(ack.applied);
    stats_.priority_updates_stale.fetch_add(ack.stale);
    c.done.set_value(ack);
  }

  void apply(Flush& c) { c.done.set_value(); }

  void apply(Inspect& c) {
    try {
      c.fn(tree_);
      c.done.set_value();
    } catch (...) {
      c.done.set_exception(std::current_exception());
    }
  }

  void apply(Forget& c) {
    outstanding_.erase(c.session);
    c.done.set_value();
  }

  SumTree<Experience> tree_;
  std::mt19937_64 rng_;
  double p_min_;
  std::uint32_t capacity_batches_;
  ServerStats& stats_;
  std::unordered_map<std::uint32_t, std::unordered_map<std::uint64_t, std::uint64_t>> outstanding_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Command> commands_;
  std::uint32_t pending_inserts_ = 0;
  bool paused_ = false;
  bool stopping_ = false;
  std::thread thread_;
};

struct Session {
  std::uint32_t id = 0;
  bool greeted = false;
  wire::Role role = wire::Role::kActor;
  std::uint32_t flags = 0;
};

// Thrown inside a handler to answer with ERROR; close=true also drops the connection.
struct Reject {
  ErrorCode code;
  std::string detail;
  bool close = false;
};

}  // namespace server_detail

/**
 * The in-network node. Holds the model parameters and, depending on mode,
 * either stages pushed experiences for a replay puller (A) or hosts the
 * prioritized replay itself (B).
 *
 * Threads: one acceptor, one dedicated reader per connection, and in mode B
 * one replay thread that exclusively owns the SumTree.
 */
class Server {
 public:
  explicit Server(ServerConfig config, std::unique_ptr<Listener> listener = nullptr)
      : config_(std::move(config)), listener_(std::move(listener)) {
    config_.validate();
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  ~Server() { stop(); }

  void start() {
    if (started_.exchange(true)) return;
    if (!listener_) listener_ = std::make_unique<TcpListener>(config_.listen);
    if (config_.mode == ServerMode::kColocatedReplay) {
      replay_ = std::make_unique<server_detail::ReplayWorker>(config_, stats_);
    } else {
      queue_ = std::make_unique<server_detail::ExperienceQueue>(config_.queue_batches);
    }
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!started_ || stopped_.exchange(true)) return;
    listener_->close();
    if (acceptor_.joinable()) acceptor_.join();
    std::list<Connection> connections;
    {
      std::lock_guard lock(connections_mutex_);
      for (auto& c : connections_) c.channel->shutdown();
      connections.splice(connections.end(), connections_);
    }
    for (auto& c : connections) {
      if (c.thread.joinable()) c.thread.join();
    }
    if (replay_) replay_->stop();
  }

  std::uint16_t port() const { return listener_ ? listener_->port() : 0; }
  Endpoint endpoint() const {
    std::string host = config_.listen.host == "0.0.0.0" ? "127.0.0.1" : config_.listen.host;
    return Endpoint{host, port()};
  }
  const ServerConfig& config() const noexcept { return config_; }
  const ServerStats& stats() const noexcept { return stats_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  // Waits until the replay thread has applied everything queued so far.
  void flush() {
    if (replay_) replay_->flush();
  }

  // Mode B only: holds back the replay thread so pushes accumulate in the
  // ingress queue (maintenance and testing).
  void pause_replay(bool paused) {
    if (!replay_) throw DomainError("pause_replay requires mode B");
    replay_->set_paused(paused);
  }

  // Mode B only: read-only look at the replay memory from its owning thread.
  void inspect_replay(std::function<void(const SumTree<Experience>&)> fn) {
    if (!replay_) throw DomainError("inspect_replay requires mode B");
    replay_->inspect(std::move(fn));
  }

  void write_stats_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open stats csv '" + path + "'");
    auto now = std::chrono::system_clock::now().time_since_epoch();
    stats_.write_csv(out, std::chrono::duration<double>(now).count());
  }

 private:
  struct Connection {
    std::shared_ptr<wire::FrameChannel> channel;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> finished;
  };

  void accept_loop() {
    while (!stopped_) {
      std::unique_ptr<ByteStream> stream = listener_->accept();
      if (!stream) break;
      auto channel = std::make_shared<wire::FrameChannel>(std::move(stream), config_.state_dim);
      auto finished = std::make_shared<std::atomic<bool>>(false);
      std::lock_guard lock(connections_mutex_);
      reap_finished_locked();
      if (stopped_) {
        channel->shutdown();
        break;
      }
      Connection c{channel, {}, finished};
      c.thread = std::thread([this, channel, finished] {
        serve(*channel);
        finished->store(true);
      });
      connections_.push_back(std::move(c));
    }
  }

  void reap_finished_locked() {
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (it->finished->load()) {
        it->thread.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void serve(wire::FrameChannel& channel) {
    server_detail::Session session;
    session.id = next_session_.fetch_add(1);
    try {
      for (;;) {
        std::optional<wire::Message> request;
        try {
          request = channel.receive();
        } catch (const MalformedError& e) {
          send_error(channel, ErrorCode::kMalformed, e.what());
          break;
        } catch (const ProtocolError& e) {
          send_error(channel, ErrorCode::kProtocol, e.what());
          break;
        }
        if (!request) break;
        stats_.bytes_in.fetch_add(channel.last_frame_size());
        auto started = Clock::now();
        wire::Message response;
        bool close = false;
        try {
          response = dispatch(session, *request);
        } catch (const server_detail::Reject& r) {
          response = wire::ErrorMsg{r.code, r.detail};
          close = r.close;
        }
        // Counted before the write so a client never sees a reply its
        // stats do not include yet.
        channel.send(response, [&](std::size_t sent) {
          stats_.bytes_out.fetch_add(sent);
          account_response(*request, response, sent, elapsed_us(started));
        });
        if (close) break;
      }
    } catch (const TransportError&) {
      // Peer went away or the server is shutting down.
    }
    if (replay_ && session.greeted && session.role == wire::Role::kLearner) {
      try {
        replay_->forget_session(session.id);
      } catch (const TransportError&) {
      }
    }
    channel.shutdown();
  }

  void send_error(wire::FrameChannel& channel, ErrorCode code, const std::string& detail) {
    try {
      stats_.bytes_out.fetch_add(channel.send(wire::ErrorMsg{code, detail}));
    } catch (const std::exception&) {
    }
  }

  void account_response(const wire::Message& request, const wire::Message& response,
                        std::size_t sent, double micros) {
    switch (wire::type_of(request)) {
      case wire::MsgType::kPushExperiences: stats_.push_latency.record(micros); break;
      case wire::MsgType::kSampleReq: stats_.sample_latency.record(micros); break;
      case wire::MsgType::kUpdatePriorities: stats_.update_latency.record(micros); break;
      case wire::MsgType::kSetParams: stats_.set_params_latency.record(micros); break;
      case wire::MsgType::kPullParams: stats_.pull_params_latency.record(micros); break;
      case wire::MsgType::kPullExperiences: stats_.pull_experiences_latency.record(micros); break;
      default: break;
    }
    if (const auto* s = std::get_if<wire::SampleResp>(&response)) {
      stats_.learner_experience_records.fetch_add(s->records.size());
      stats_.learner_experience_bytes.fetch_add(sent);
    } else if (const auto* b = std::get_if<wire::ExperiencesBlob>(&response)) {
      stats_.learner_experience_records.fetch_add(b->records.size());
      stats_.learner_experience_bytes.fetch_add(sent);
    }
  }

  static void require_role(const server_detail::Session& s, wire::Role role, const char* op) {
    if (s.role != role) {
      throw server_detail::Reject{ErrorCode::kForbidden,
                                  std::string(op) + " not permitted for this client role"};
    }
  }

  void require_mode(ServerMode mode, const char* op) const {
    if (config_.mode != mode) {
      throw server_detail::Reject{ErrorCode::kWrongMode,
                                  std::string(op) + " is not served in mode " +
                                      static_cast<char>(config_.mode)};
    }
  }

  wire::Message dispatch(server_detail::Session& session, wire::Message& request) {
    if (auto* hello = std::get_if<wire::Hello>(&request)) return handle_hello(session, *hello);
    if (!session.greeted) {
      throw server_detail::Reject{ErrorCode::kBadState, "HELLO required first", true};
    }
    return std::visit(
        [&](auto& m) -> wire::Message {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, wire::PushExperiences>) {
            return handle_push(session, m);
          } else if constexpr (std::is_same_v<T, wire::SampleReq>) {
            return handle_sample(session, m);
          } else if constexpr (std::is_same_v<T, wire::UpdatePriorities>) {
            return handle_update_priorities(session, m);
          } else if constexpr (std::is_same_v<T, wire::SetParams>) {
            return handle_set_params(session, m);
          } else if constexpr (std::is_same_v<T, wire::PullParams>) {
            return handle_pull_params(session, m);
          } else if constexpr (std::is_same_v<T, wire::PullExperiences>) {
            return handle_pull_experiences(session, m);
          } else if constexpr (std::is_same_v<T, wire::StatsReq>) {
            return wire::StatsResp{stats_.snapshot()};
          } else {
            throw server_detail::Reject{
                ErrorCode::kProtocol,
                std::string("unexpected client message ") + wire::type_name(wire::type_of(request)),
                true};
          }
        },
        request);
  }

  wire::Message handle_hello(server_detail::Session& session, const wire::Hello& hello) {
    if (session.greeted) throw server_detail::Reject{ErrorCode::kBadState, "duplicate HELLO", true};
    if (hello.state_dim != config_.state_dim || hello.action_count != config_.action_count) {
      throw server_detail::Reject{
          ErrorCode::kBadState,
          "server expects state_dim=" + std::to_string(config_.state_dim) +
              " action_count=" + std::to_string(config_.action_count),
          true};
    }
    session.greeted = true;
    session.role = hello.role;
    session.flags = hello.flags;
    wire::HelloAck ack;
    ack.session_id = session.id;
    ack.server_mode = config_.mode;
    ack.state_dim = config_.state_dim;
    ack.action_count = config_.action_count;
    ack.flags = hello.flags;
    ack.capacity = std::bit_ceil(config_.capacity);
    ack.alpha = config_.alpha;
    return ack;
  }

  wire::Message handle_push(server_detail::Session& session, wire::PushExperiences& push) {
    require_role(session, wire::Role::kActor, "PUSH_EXPERIENCES");
    for (const auto& rec : push.records) {
      if (rec.experience.action >= config_.action_count) {
        throw server_detail::Reject{ErrorCode::kMalformed,
                                    "action " + std::to_string(rec.experience.action) +
                                        " >= action_count",
                                    true};
      }
      if (!std::isfinite(rec.priority) || rec.priority < 0.0) {
        throw server_detail::Reject{ErrorCode::kMalformed, "priority must be finite and >= 0",
                                    true};
      }
    }
    const auto count = static_cast<std::uint32_t>(push.records.size());
    stats_.pushes_received.fetch_add(1);
    if (count == 0) {
      return wire::PushAck{0, replay_ ? replay_->depth() : queue_->depth()};
    }
    stats_.experiences_pushed.fetch_add(count);
    std::optional<std::uint32_t> depth = replay_ ? replay_->try_enqueue(std::move(push.records))
                                                 : queue_->try_push(std::move(push.records));
    if (!depth) {
      stats_.experiences_rejected.fetch_add(count);
      throw server_detail::Reject{ErrorCode::kBackpressure, "ingress queue full"};
    }
    if (queue_) stats_.set_queue_depth(*depth);
    return wire::PushAck{count, *depth};
  }

  wire::Message handle_sample(server_detail::Session& session, const wire::SampleReq& req) {
    require_mode(ServerMode::kColocatedReplay, "SAMPLE_REQ");
    require_role(session, wire::Role::kLearner, "SAMPLE_REQ");
    if (req.batch_size == 0) throw server_detail::Reject{ErrorCode::kMalformed, "batch_size must be >= 1"};
    stats_.sample_requests.fetch_add(1);
    auto resp = replay_->sample(session.id, req.batch_size);
    if (!resp) throw server_detail::Reject{ErrorCode::kNotReady, "replay memory is empty"};
    stats_.experiences_sampled.fetch_add(resp->records.size());
    return std::move(*resp);
  }

  wire::Message handle_update_priorities(server_detail::Session& session,
                                         wire::UpdatePriorities& req) {
    require_mode(ServerMode::kColocatedReplay, "UPDATE_PRIORITIES");
    require_role(session, wire::Role::kLearner, "UPDATE_PRIORITIES");
    for (const auto& u : req.updates) {
      if (!std::isfinite(u.priority) || u.priority < 0.0) {
        throw server_detail::Reject{ErrorCode::kMalformed, "priority must be finite and >= 0"};
      }
    }
    return replay_->update(session.id, std::move(req.updates));
  }

  wire::Message handle_set_params(server_detail::Session& session, wire::SetParams& req) {
    require_role(session, wire::Role::kLearner, "SET_PARAMS");
    std::uint64_t version = params_.set(std::move(req.blob));
    stats_.param_sets.fetch_add(1);
    stats_.param_version.store(version);
    return wire::SetAck{version};
  }

  wire::Message handle_pull_params(server_detail::Session&, const wire::PullParams& req) {
    stats_.param_pulls.fetch_add(1);
    auto current = params_.get();
    if (req.min_version != 0 && req.min_version >= current->version) {
      return wire::ParamsBlob{current->version, {}};
    }
    return wire::ParamsBlob{current->version, current->bytes};
  }

  wire::Message handle_pull_experiences(server_detail::Session& session,
                                        const wire::PullExperiences& req) {
    require_mode(ServerMode::kSharedMemory, "PULL_EXPERIENCES");
    require_role(session, wire::Role::kReplayPuller, "PULL_EXPERIENCES");
    std::uint32_t depth = 0;
    wire::ExperiencesBlob blob{queue_->drain(req.max_count, depth)};
    stats_.experiences_drained.fetch_add(blob.records.size());
    stats_.set_queue_depth(depth);
    return blob;
  }

  ServerConfig config_;
  std::unique_ptr<Listener> listener_;
  ServerStats stats_;
  ParameterStore params_;
  std::unique_ptr<server_detail::ReplayWorker> replay_;
  std::unique_ptr<server_detail::ExperienceQueue> queue_;
  std::atomic<std::uint32_t> next_session_{1};
  std::atomic<bool> started_{false};
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
  std::mutex connections_mutex_;
  std::list<Connection> connections_;
};

}  // namespace replaynet

#endif  // REPLAYNET_SERVER_HPP_
