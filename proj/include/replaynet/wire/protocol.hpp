#ifndef REPLAYNET_WIRE_PROTOCOL_HPP_
#define REPLAYNET_WIRE_PROTOCOL_HPP_

// Length-prefixed binary framing shared by actors, learners and the server.
// Byte layout is documented in docs/protocol.md; everything is little-endian.
//
//   offset 0  magic        "DRPL"
//   offset 4  version      u8  = 1
//   offset 5  msg_type     u8
//   offset 6  flags        u16 (reserved, 0)
//   offset 8  payload_len  u32

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "replaynet/errors.hpp"
#include "replaynet/replay_core.hpp"
#include "replaynet/wire/byte_io.hpp"

namespace replaynet::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic = {0x44, 0x52, 0x50, 0x4C};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 12;
inline constexpr std::uint32_t kMaxPayload = 256u * 1024u * 1024u;

enum class MsgType : std::uint8_t {
  kHello = 0x01,
  kHelloAck = 0x02,
  kPushExperiences = 0x10,
  kPushAck = 0x11,
  kSetParams = 0x20,
  kSetAck = 0x21,
  kPullParams = 0x22,
  kParamsBlob = 0x23,
  kSampleReq = 0x30,
  kSampleResp = 0x31,
  kUpdatePriorities = 0x32,
  kUpdateAck = 0x33,
  kPullExperiences = 0x40,
  kExperiencesBlob = 0x41,
  kStatsReq = 0x50,
  kStatsResp = 0x51,
  kError = 0x7F,
};

enum class Role : std::uint8_t { kActor = 1, kLearner = 2, kReplayPuller = 3 };

// 'A': learner-side replay, server only queues experiences.
// 'B': replay co-located with the server.
enum class ServerMode : std::uint8_t { kSharedMemory = 'A', kColocatedReplay = 'B' };

inline constexpr std::uint32_t kFlagGatedPull = 1u << 0;

// [priority f64][action u32][reward f32][state f32 x d][next_state f32 x d]
inline constexpr std::size_t push_record_size(std::uint32_t state_dim) {
  return 16 + 8 * static_cast<std::size_t>(state_dim);
}
// [slot_id u64][probability f64][action u32][reward f32][state][next_state]
inline constexpr std::size_t sample_record_size(std::uint32_t state_dim) {
  return 24 + 8 * static_cast<std::size_t>(state_dim);
}

struct PushRecord {
  double priority = 0.0;
  Experience experience;
  bool operator==(const PushRecord&) const = default;
};

struct SampledRecord {
  std::uint64_t slot_id = 0;
  double probability = 0.0;
  Experience experience;
  bool operator==(const SampledRecord&) const = default;
};

struct PriorityUpdate {
  std::uint64_t slot_id = 0;
  double priority = 0.0;
  bool operator==(const PriorityUpdate&) const = default;
};

// Server counters as carried by STATS_RESP: 18 u64 fields in this order.
struct StatsSnapshot {
  std::uint64_t pushes_received = 0;
  std::uint64_t experiences_pushed = 0;
  std::uint64_t experiences_added = 0;
  std::uint64_t experiences_rejected = 0;
  std::uint64_t experiences_drained = 0;
  std::uint64_t sample_requests = 0;
  std::uint64_t experiences_sampled = 0;
  std::uint64_t priority_updates_applied = 0;
  std::uint64_t priority_updates_stale = 0;
  std::uint64_t param_sets = 0;
  std::uint64_t param_pulls = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  // Experience records sent toward the learner side (SAMPLE_RESP in mode B,
  // EXPERIENCES_BLOB in mode A) and the frame bytes that carried them.
  std::uint64_t learner_experience_records = 0;
  std::uint64_t learner_experience_bytes = 0;
  std::uint64_t queue_depth = 0;
  std::uint64_t queue_high_water = 0;
  std::uint64_t param_version = 0;

  static constexpr std::size_t kFieldCount = 18;

  template <typename F>
  void for_each(F&& f) const {
    f("pushes_received", pushes_received);
    f("experiences_pushed", experiences_pushed);
    f("experiences_added", experiences_added);
    f("experiences_rejected", experiences_rejected);
    f("experiences_drained", experiences_drained);
    f("sample_requests", sample_requests);
    f("experiences_sampled", experiences_sampled);
    f("priority_updates_applied", priority_updates_applied);
    f("priority_updates_stale", priority_updates_stale);
    f("param_sets", param_sets);
    f("param_pulls", param_pulls);
    f("bytes_in", bytes_in);
    f("bytes_out", bytes_out);
    f("learner_experience_records", learner_experience_records);
    f("learner_experience_bytes", learner_experience_bytes);
    f("queue_depth", queue_depth);
    f("queue_high_water", queue_high_water);
    f("param_version", param_version);
  }

  template <typename F>
  void for_each_mut(F&& f) {
    std::uint64_t* fields[] = {&pushes_received, &experiences_pushed, &experiences_added,
                               &experiences_rejected, &experiences_drained, &sample_requests,
                               &experiences_sampled, &priority_updates_applied,
                               &priority_updates_stale, &param_sets, &param_pulls, &bytes_in,
                               &bytes_out, &learner_experience_records,
                               &learner_experience_bytes, &queue_depth, &queue_high_water,
                               &param_version};
    for (auto* field : fields) f(*field);
  }

  bool operator==(const StatsSnapshot&) const = default;
};

struct Hello {
  Role role = Role::kActor;
  std::uint32_t client_id = 0;
  std::uint32_t state_dim = 0;
  std::uint32_t action_count = 0;
  std::uint32_t flags = 0;
  bool operator==(const Hello&) const = default;
};

struct HelloAck {
  std::uint32_t session_id = 0;
  ServerMode server_mode = ServerMode::kColocatedReplay;
  std::uint32_t state_dim = 0;
  std::uint32_t action_count = 0;
  std::uint32_t flags = 0;
  std::uint64_t capacity = 0;
  double alpha = 0.0;
  bool operator==(const HelloAck&) const = default;
};

struct PushExperiences {
  std::vector<PushRecord> records;
  bool operator==(const PushExperiences&) const = default;
};

struct PushAck {
  std::uint32_t accepted = 0;
  std::uint32_t queue_depth = 0;
  bool operator==(const PushAck&) const = default;
};

struct SetParams {
  std::uint64_t param_version = 0;
  std::vector<std::uint8_t> blob;
  bool operator==(const SetParams&) const = default;
};

struct SetAck {
  std::uint64_t param_version = 0;
  bool operator==(const SetAck&) const = default;
};

struct PullParams {
  std::uint64_t min_version = 0;
  bool operator==(const PullParams&) const = default;
};

struct ParamsBlob {
  std::uint64_t param_version = 0;
  std::vector<std::uint8_t> blob;
  bool operator==(const ParamsBlob&) const = default;
};

struct SampleReq {
  std::uint32_t batch_size = 0;
  bool operator==(const SampleReq&) const = default;
};

struct SampleResp {
  std::vector<SampledRecord> records;
  bool operator==(const SampleResp&) const = default;
};

struct UpdatePriorities {
  std::vector<PriorityUpdate> updates;
  bool operator==(const UpdatePriorities&) const = default;
};

struct UpdateAck {
  std::uint32_t applied = 0;
  std::uint32_t stale = 0;
  bool operator==(const UpdateAck&) const = default;
};

struct PullExperiences {
  std::uint32_t max_count = 0;
  bool operator==(const PullExperiences&) const = default;
};

struct ExperiencesBlob {
  std::vector<PushRecord> records;
  bool operator==(const ExperiencesBlob&) const = default;
};

struct StatsReq {
  bool operator==(const StatsReq&) const = default;
};

struct StatsResp {
  StatsSnapshot stats;
  bool operator==(const StatsResp&) const = default;
};

struct ErrorMsg {
  ErrorCode code = ErrorCode::kInternal;
  std::string detail;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<Hello, HelloAck, PushExperiences, PushAck, SetParams, SetAck,
                             PullParams, ParamsBlob, SampleReq, SampleResp, UpdatePriorities,
                             UpdateAck, PullExperiences, ExperiencesBlob, StatsReq, StatsResp,
                             ErrorMsg>;

namespace detail {

template <typename T> struct TypeOf;
template <> struct TypeOf<Hello> { static constexpr MsgType value = MsgType::kHello; };
template <> struct TypeOf<HelloAck> { static constexpr MsgType value = MsgType::kHelloAck; };
template <> struct TypeOf<PushExperiences> { static constexpr MsgType value = MsgType::kPushExperiences; };
template <> struct TypeOf<PushAck> { static constexpr MsgType value = MsgType::kPushAck; };
template <> struct TypeOf<SetParams> { static constexpr MsgType value = MsgType::kSetParams; };
template <> struct TypeOf<SetAck> { static constexpr MsgType value = MsgType::kSetAck; };
template <> struct TypeOf<PullParams> { static constexpr MsgType value = MsgType::kPullParams; };
template <> struct TypeOf<ParamsBlob> { static constexpr MsgType value = MsgType::kParamsBlob; };
template <> struct TypeOf<SampleReq> { static constexpr MsgType value = MsgType::kSampleReq; };
template <> struct TypeOf<SampleResp> { static constexpr MsgType value = MsgType::kSampleResp; };
template <> struct TypeOf<UpdatePriorities> { static constexpr MsgType value = MsgType::kUpdatePriorities; };
template <> struct TypeOf<UpdateAck> { static constexpr MsgType value = MsgType::kUpdateAck; };
template <> struct TypeOf<PullExperiences> { static constexpr MsgType value = MsgType::kPullExperiences; };
template <> struct TypeOf<ExperiencesBlob> { static constexpr MsgType value = MsgType::kExperiencesBlob; };
template <> struct TypeOf<StatsReq> { static constexpr MsgType value = MsgType::kStatsReq; };
template <> struct TypeOf<StatsResp> { static constexpr MsgType value = MsgType::kStatsResp; };
template <> struct TypeOf<ErrorMsg> { static constexpr MsgType value = MsgType::kError; };

// All records in one message must share a state_dim; returns it (0 if empty).
template <typename Record>
std::uint32_t common_state_dim(const std::vector<Record>& records) {
  if (records.empty()) return 0;
  const std::size_t d = records.front().experience.state.size();
  for (const auto& r : records) {
    if (r.experience.state.size() != d || r.experience.next_state.size() != d) {
      throw EncodeError("records disagree on state_dim");
    }
  }
  return static_cast<std::uint32_t>(d);
}

inline void write_experience_body(ByteWriter& w, const Experience& e) {
  w.u32(e.action);
  w.f32(e.reward);
  w.f32_array(e.state);
  w.f32_array(e.next_state);
}

inline Experience read_experience_body(ByteReader& r, std::uint32_t state_dim) {
  Experience e;
  e.action = r.u32();
  e.reward = r.f32();
  r.f32_array(state_dim, e.state);
  r.f32_array(state_dim, e.next_state);
  return e;
}

inline void write_push_records(ByteWriter& w, const std::vector<PushRecord>& records) {
  common_state_dim(records);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    w.f64(rec.priority);
    write_experience_body(w, rec.experience);
  }
}

// Checks the count against the payload length before touching any record.
inline void check_record_arithmetic(const ByteReader& r, std::uint32_t count,
                                    std::size_t record_size, const char* what) {
  const std::size_t expected = static_cast<std::size_t>(count) * record_size;
  if (r.remaining() != expected) {
    throw MalformedError(std::string(what) + ": count " + std::to_string(count) + " x " +
                         std::to_string(record_size) + " bytes != " +
                         std::to_string(r.remaining()) + " payload bytes");
  }
}

inline std::vector<PushRecord> read_push_records(ByteReader& r, std::uint32_t state_dim,
                                                 const char* what) {
  const std::uint32_t count = r.u32();
  check_record_arithmetic(r, count, push_record_size(state_dim), what);
  std::vector<PushRecord> records(count);
  for (auto& rec : records) {
    rec.priority = r.f64();
    rec.experience = read_experience_body(r, state_dim);
  }
  return records;
}

inline void write_blob(ByteWriter& w, std::uint64_t version, const std::vector<std::uint8_t>& blob) {
  w.u64(version);
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob);
}

inline std::pair<std::uint64_t, std::vector<std::uint8_t>> read_blob(ByteReader& r) {
  std::uint64_t version = r.u64();
  std::uint32_t len = r.u32();
  if (r.remaining() != len) {
    throw MalformedError("blob_len " + std::to_string(len) + " != remaining " +
                         std::to_string(r.remaining()));
  }
  auto bytes = r.bytes(len);
  return {version, std::vector<std::uint8_t>(bytes.begin(), bytes.end())};
}

inline void write_payload(ByteWriter& w, const Hello& m) {
  w.u8(static_cast<std::uint8_t>(m.role));
  w.u32(m.client_id);
  w.u32(m.state_dim);
  w.u32(m.action_count);
  w.u32(m.flags);
}
inline void write_payload(ByteWriter& w, const HelloAck& m) {
  w.u32(m.session_id);
  w.u8(static_cast<std::uint8_t>(m.server_mode));
  w.u32(m.state_dim);
  w.u32(m.action_count);
  w.u32(m.flags);
  w.u64(m.capacity);
  w.f64(m.alpha);
}
inline void write_payload(ByteWriter& w, const PushExperiences& m) { write_push_records(w, m.records); }
inline void write_payload(ByteWriter& w, const PushAck& m) {
  w.u32(m.accepted);
  w.u32(m.queue_depth);
}
inline void write_payload(ByteWriter& w, const SetParams& m) { write_blob(w, m.param_version, m.blob); }
inline void write_payload(ByteWriter& w, const SetAck& m) { w.u64(m.param_version); }
inline void write_payload(ByteWriter& w, const PullParams& m) { w.u64(m.min_version); }
inline void write_payload(ByteWriter& w, const ParamsBlob& m) { write_blob(w, m.param_version, m.blob); }
inline void write_payload(ByteWriter& w, const SampleReq& m) { w.u32(m.batch_size); }
inline void write_payload(ByteWriter& w, const SampleResp& m) {
  common_state_dim(m.records);
  w.u32(static_cast<std::uint32_t>(m.records.size()));
  for (const auto& rec : m.records) {
    w.u64(rec.slot_id);
    w.f64(rec.probability);
    write_experience_body(w, rec.experience);
  }
}
inline void write_payload(ByteWriter& w, const UpdatePriorities& m) {
  w.u32(static_cast<std::uint32_t>(m.updates.size()));
  for (const auto& u : m.updates) {
    w.u64(u.slot_id);
    w.f64(u.priority);
  }
}
inline void write_payload(ByteWriter& w, const UpdateAck& m) {
  w.u32(m.applied);
  w.u32(m.stale);
}
inline void write_payload(ByteWriter& w, const PullExperiences& m) { w.u32(m.max_count); }
inline void write_payload(ByteWriter& w, const ExperiencesBlob& m) { write_push_records(w, m.records); }
inline void write_payload(ByteWriter&, const StatsReq&) {}
inline void write_payload(ByteWriter& w, const StatsResp& m) {
  m.stats.for_each([&](const char*, std::uint64_t v) { w.u64(v); });
}
inline void write_payload(ByteWriter& w, const ErrorMsg& m) {
  w.u16(static_cast<std::uint16_t>(m.code));
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(m.detail.data()), m.detail.size()));
}

inline std::size_t payload_size_hint(const Message& message) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PushExperiences> || std::is_same_v<T, ExperiencesBlob>) {
          return 4 + m.records.size() *
                         push_record_size(m.records.empty() ? 0 : m.records[0].experience.state.size());
        } else if constexpr (std::is_same_v<T, SampleResp>) {
          return 4 + m.records.size() *
                         sample_record_size(m.records.empty() ? 0 : m.records[0].experience.state.size());
        } else if constexpr (std::is_same_v<T, SetParams> || std::is_same_v<T, ParamsBlob>) {
          return 12 + m.blob.size();
        } else {
          return 64;
        }
      },
      message);
}

inline Message read_payload(MsgType type, ByteReader& r, std::uint32_t state_dim) {
  switch (type) {
    case MsgType::kHello: {
      Hello m;
      std::uint8_t role = r.u8();
      if (role < 1 || role > 3) throw MalformedError("HELLO: unknown role " + std::to_string(role));
      m.role = static_cast<Role>(role);
      m.client_id = r.u32();
      m.state_dim = r.u32();
      m.action_count = r.u32();
      m.flags = r.u32();
      r.expect_end();
      return m;
    }
    case MsgType::kHelloAck: {
      HelloAck m;
      m.session_id = r.u32();
      std::uint8_t mode = r.u8();
      if (mode != 'A' && mode != 'B') throw MalformedError("HELLO_ACK: unknown server mode");
      m.server_mode = static_cast<ServerMode>(mode);
      m.state_dim = r.u32();
      m.action_count = r.u32();
      m.flags = r.u32();
      m.capacity = r.u64();
      m.alpha = r.f64();
      r.expect_end();
      return m;
    }
    case MsgType::kPushExperiences:
      return PushExperiences{read_push_records(r, state_dim, "PUSH_EXPERIENCES")};
    case MsgType::kPushAck: {
      PushAck m;
      m.accepted = r.u32();
      m.queue_depth = r.u32();
      r.expect_end();
      return m;
    }
    case MsgType::kSetParams: {
      auto [version, blob] = read_blob(r);
      return SetParams{version, std::move(blob)};
    }
    case MsgType::kSetAck: {
      SetAck m{r.u64()};
      r.expect_end();
      return m;
    }
    case MsgType::kPullParams: {
      PullParams m{r.u64()};
      r.expect_end();
      return m;
    }
    case MsgType::kParamsBlob: {
      auto [version, blob] = read_blob(r);
      return ParamsBlob{version, std::move(blob)};
    }
    case MsgType::kSampleReq: {
      SampleReq m{r.u32()};
      r.expect_end();
      return m;
    }
    case MsgType::kSampleResp: {
      const std::uint32_t count = r.u32();
      check_record_arithmetic(r, count, sample_record_size(state_dim), "SAMPLE_RESP");
      SampleResp m;
      m.records.resize(count);
      for (auto& rec : m.records) {
        rec.slot_id = r.u64();
        rec.probability = r.f64();
        rec.experience = read_experience_body(r, state_dim);
      }
      return m;
    }
    case MsgType::kUpdatePriorities: {
      const std::uint32_t count = r.u32();
      check_record_arithmetic(r, count, 16, "UPDATE_PRIORITIES");
      UpdatePriorities m;
      m.updates.resize(count);
      for (auto& u : m.updates) {
        u.slot_id = r.u64();
        u.priority = r.f64();
      }
      return m;
    }
    case MsgType::kUpdateAck: {
      UpdateAck m;
      m.applied = r.u32();
      m.stale = r.u32();
      r.expect_end();
      return m;
    }
    case MsgType::kPullExperiences: {
      PullExperiences m{r.u32()};
      r.expect_end();
      return m;
    }
    case MsgType::kExperiencesBlob:
      return ExperiencesBlob{read_push_records(r, state_dim, "EXPERIENCES_BLOB")};
    case MsgType::kStatsReq:
      r.expect_end();
      return StatsReq{};
    case MsgType::kStatsResp: {
      check_record_arithmetic(r, StatsSnapshot::kFieldCount, 8, "STATS_RESP");
      StatsResp m;
      m.stats.for_each_mut([&](std::uint64_t& v) { v = r.u64(); });
      return m;
    }
    case MsgType::kError: {
      ErrorMsg m;
      std::uint16_t code = r.u16();
      if (code < 1 || code > 8) throw MalformedError("ERROR: unknown code " + std::to_string(code));
      m.code = static_cast<ErrorCode>(code);
      auto detail = r.bytes(r.remaining());
      m.detail.assign(detail.begin(), detail.end());
      return m;
    }
  }
  throw ProtocolError("unknown msg_type 0x" + std::to_string(static_cast<int>(type)));
}

inline bool known_type(std::uint8_t t) {
  switch (static_cast<MsgType>(t)) {
    case MsgType::kHello: case MsgType::kHelloAck: case MsgType::kPushExperiences:
    case MsgType::kPushAck: case MsgType::kSetParams: case MsgType::kSetAck:
    case MsgType::kPullParams: case MsgType::kParamsBlob: case MsgType::kSampleReq:
    case MsgType::kSampleResp: case MsgType::kUpdatePriorities: case MsgType::kUpdateAck:
    case MsgType::kPullExperiences: case MsgType::kExperiencesBlob: case MsgType::kStatsReq:
    case MsgType::kStatsResp: case MsgType::kError:
      return true;
  }
  return false;
}

}  // namespace detail

inline MsgType type_of(const Message& message) {
  return std::visit([](const auto& m) { return detail::TypeOf<std::decay_t<decltype(m)>>::value; },
                    message);
}

inline const char* type_name(MsgType type) {
  switch (type) {
    case MsgType::kHello: return "HELLO";
    case MsgType::kHelloAck: return "HELLO_ACK";
    case MsgType::kPushExperiences: return "PUSH_EXPERIENCES";
    case MsgType::kPushAck: return "PUSH_ACK";
    case MsgType::kSetParams: return "SET_PARAMS";
    case MsgType::kSetAck: return "SET_ACK";
    case MsgType::kPullParams: return "PULL_PARAMS";
    case MsgType::kParamsBlob: return "PARAMS_BLOB";
    case MsgType::kSampleReq: return "SAMPLE_REQ";
    case MsgType::kSampleResp: return "SAMPLE_RESP";
    case MsgType::kUpdatePriorities: return "UPDATE_PRIORITIES";
    case MsgType::kUpdateAck: return "UPDATE_ACK";
    case MsgType::kPullExperiences: return "PULL_EXPERIENCES";
    case MsgType::kExperiencesBlob: return "EXPERIENCES_BLOB";
    case MsgType::kStatsReq: return "STATS_REQ";
    case MsgType::kStatsResp: return "STATS_RESP";
    case MsgType::kError: return "ERROR";
  }
  return "UNKNOWN";
}

// Appends one complete frame to out. Returns the frame size in bytes.
inline std::size_t encode_into(const Message& message, std::vector<std::uint8_t>& out) {
  const std::size_t start = out.size();
  out.reserve(start + kHeaderSize + detail::payload_size_hint(message));
  ByteWriter w(out);
  w.bytes(kMagic);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(type_of(message)));
  w.u16(0);
  w.u32(0);
  std::visit([&](const auto& m) { detail::write_payload(w, m); }, message);
  const std::size_t payload = out.size() - start - kHeaderSize;
  if (payload > kMaxPayload) {
    out.resize(start);
    throw EncodeError("payload of " + std::to_string(payload) + " bytes exceeds 256 MiB cap");
  }
  w.patch_u32(start + 8, static_cast<std::uint32_t>(payload));
  return out.size() - start;
}

inline std::vector<std::uint8_t> encode(const Message& message) {
  std::vector<std::uint8_t> out;
  encode_into(message, out);
  return out;
}

struct FrameHeader {
  std::uint8_t version = kVersion;
  MsgType msg_type = MsgType::kStatsReq;
  std::uint16_t flags = 0;
  std::uint32_t payload_len = 0;
};

// Validates whatever header bytes are present. Returns the parsed header
// once all 12 bytes are available.
inline std::optional<FrameHeader> peek_header(std::span<const std::uint8_t> bytes) {
  const std::size_t n = std::min(bytes.size(), kHeaderSize);
  for (std::size_t i = 0; i < std::min<std::size_t>(n, 4); ++i) {
    if (bytes[i] != kMagic[i]) throw ProtocolError("bad frame magic");
  }
  if (n > 4 && bytes[4] != kVersion) {
    throw ProtocolError("unsupported protocol version " + std::to_string(bytes[4]));
  }
  if (n > 5 && !detail::known_type(bytes[5])) {
    throw ProtocolError("unknown msg_type " + std::to_string(bytes[5]));
  }
  if (n < kHeaderSize) return std::nullopt;
  ByteReader r(bytes.subspan(4, 8));
  FrameHeader h;
  h.version = r.u8();
  h.msg_type = static_cast<MsgType>(r.u8());
  h.flags = r.u16();
  h.payload_len = r.u32();
  if (h.payload_len > kMaxPayload) {
    throw ProtocolError("payload_len " + std::to_string(h.payload_len) + " exceeds 256 MiB cap");
  }
  return h;
}

struct DecodeResult {
  // Set when a full frame was decoded.
  std::optional<Message> message;
  // Bytes of input consumed by that frame (0 when incomplete).
  std::size_t consumed = 0;
  // Additional bytes required before anything more can be decided.
  std::size_t need_more = 0;

  bool complete() const noexcept { return message.has_value(); }
};

// Decodes the first frame in bytes. Incomplete input is reported through
// need_more; corruption throws ProtocolError / MalformedError. state_dim
// is the session's negotiated dimension and fixes every record's size.
inline DecodeResult decode(std::span<const std::uint8_t> bytes, std::uint32_t state_dim) {
  DecodeResult result;
  auto header = peek_header(bytes);
  if (!header) {
    result.need_more = kHeaderSize - bytes.size();
    return result;
  }
  const std::size_t frame = kHeaderSize + header->payload_len;
  if (bytes.size() < frame) {
    result.need_more = frame - bytes.size();
    return result;
  }
  ByteReader reader(bytes.subspan(kHeaderSize, header->payload_len));
  result.message = detail::read_payload(header->msg_type, reader, state_dim);
  result.consumed = frame;
  return result;
}

// Per-connection reassembly buffer: feed arbitrary chunks, pull whole messages.
class StreamDecoder {
 public:
  explicit StreamDecoder(std::uint32_t state_dim = 0) : state_dim_(state_dim) {}

  void set_state_dim(std::uint32_t state_dim) { state_dim_ = state_dim; }
  std::uint32_t state_dim() const noexcept { return state_dim_; }

  void feed(std::span<const std::uint8_t> chunk) {
    compact();
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  }

  // Next complete message, or nullopt when more bytes are needed.
  std::optional<Message> next() {
    auto view = std::span<const std::uint8_t>(buffer_).subspan(head_);
    DecodeResult r = decode(view, state_dim_);
    if (!r.complete()) {
      need_more_ = r.need_more;
      return std::nullopt;
    }
    head_ += r.consumed;
    last_frame_size_ = r.consumed;
    need_more_ = 0;
    return std::move(r.message);
  }

  std::size_t buffered() const noexcept { return buffer_.size() - head_; }
  std::size_t need_more() const noexcept { return need_more_; }
  std::size_t last_frame_size() const noexcept { return last_frame_size_; }

 private:
  void compact() {
    if (head_ == 0) return;
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }

  std::uint32_t state_dim_;
  std::vector<std::uint8_t> buffer_;
  std::size_t head_ = 0;
  std::size_t need_more_ = 0;
  std::size_t last_frame_size_ = 0;
};

}  // namespace replaynet::wire

#endif  // REPLAYNET_WIRE_PROTOCOL_HPP_
