#ifndef REPLAYNET_TOOLS_FIXTURE_CORPUS_HPP_
#define REPLAYNET_TOOLS_FIXTURE_CORPUS_HPP_

// Golden-frame corpus shared by replaynet-fixtures and the fixture test.
// Every message is built from fixed values so other implementations can
// rebuild it from manifest.json and compare bytes.

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "replaynet/wire/protocol.hpp"

namespace replaynet::fixtures {

struct Fixture {
  std::string name;
  std::uint32_t state_dim = 0;
  wire::Message message;
};

inline Experience fixture_experience(std::uint32_t dim, std::uint32_t k) {
  Experience e;
  for (std::uint32_t i = 0; i < dim; ++i) {
    e.state.push_back(0.25f * static_cast<float>(i + k));
    e.next_state.push_back(-0.5f * static_cast<float>(i + 1) + 0.1f * static_cast<float>(k));
  }
  e.action = k % 4;
  e.reward = k % 2 ? 1.0f : -0.01f;
  return e;
}

inline std::vector<Fixture> corpus() {
  using namespace wire;
  std::vector<Fixture> out;
  auto add = [&](std::string name, std::uint32_t dim, Message m) { out.push_back({std::move(name), dim, std::move(m)}); };

  add("hello_actor", 0, Hello{Role::kActor, 7, 3, 4, 0});
  add("hello_learner_gated", 0, Hello{Role::kLearner, 1, 28224, 4, kFlagGatedPull});
  add("hello_puller", 0, Hello{Role::kReplayPuller, 2, 64, 18, 0});
  add("hello_ack_mode_b", 0, HelloAck{5, ServerMode::kColocatedReplay, 3, 4, 0, 65536, 0.6});
  add("hello_ack_mode_a", 0, HelloAck{6, ServerMode::kSharedMemory, 64, 4, kFlagGatedPull, 0, 0.6});

  PushExperiences push;
  for (std::uint32_t k = 0; k < 3; ++k) push.records.push_back({1.5 + k, fixture_experience(3, k)});
  add("push_experiences_d3_n3", 3, push);
  add("push_experiences_empty", 3, PushExperiences{});
  add("push_ack", 0, PushAck{200, 12});

  add("set_params", 0, SetParams{9, {0x00, 0x01, 0x7F, 0x80, 0xFE, 0xFF}});
  add("set_params_empty_blob", 0, SetParams{0, {}});
  add("set_ack", 0, SetAck{10});
  add("pull_params_always", 0, PullParams{0});
  add("pull_params_gated", 0, PullParams{10});
  add("params_blob", 0, ParamsBlob{10, {0xDE, 0xAD, 0xBE, 0xEF}});
  add("params_blob_unchanged", 0, ParamsBlob{10, {}});

  add("sample_req", 0, SampleReq{512});
  SampleResp sample;
  sample.records.push_back({4, 0.125, fixture_experience(2, 1)});
  sample.records.push_back({65535, 0.875, fixture_experience(2, 2)});
  add("sample_resp_d2_n2", 2, sample);
  add("sample_resp_empty", 2, SampleResp{});

  add("update_priorities", 0, UpdatePriorities{{{4, 0.75}, {65535, 1e-6}, {0, 3.0}}});
  add("update_priorities_empty", 0, UpdatePriorities{});
  add("update_ack", 0, UpdateAck{2, 1});

  add("pull_experiences", 0, PullExperiences{65536});
  ExperiencesBlob blob;
  blob.records.push_back({0.5, fixture_experience(1, 3)});
  add("experiences_blob_d1_n1", 1, blob);

  add("stats_req", 0, StatsReq{});
  StatsResp stats;
  std::uint64_t v = 1;
  stats.stats.for_each_mut([&](std::uint64_t& field) { field = v++ * 1000 + 7; });
  add("stats_resp", 0, stats);

  add("error_not_ready", 0, ErrorMsg{ErrorCode::kNotReady, "replay memory is empty"});
  add("error_backpressure", 0, ErrorMsg{ErrorCode::kBackpressure, "ingress queue full"});
  add("error_utf8", 0, ErrorMsg{ErrorCode::kMalformed, "caf\xc3\xa9"});
  return out;
}

inline std::string hex(const std::vector<std::uint8_t>& bytes) {
  std::string s;
  char buf[3];
  for (auto b : bytes) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    s += buf;
  }
  return s;
}

inline nlohmann::json experience_json(const Experience& e) {
  return {{"state", e.state}, {"action", e.action}, {"reward", e.reward}, {"next_state", e.next_state}};
}

// Field-level description of a message; keys follow docs/protocol.md.
inline nlohmann::json to_json(const wire::Message& message) {
  using nlohmann::json;
  using namespace wire;
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          return {{"role", static_cast<int>(m.role)}, {"client_id", m.client_id}, {"state_dim", m.state_dim},
                  {"action_count", m.action_count}, {"flags", m.flags}};
        } else if constexpr (std::is_same_v<T, HelloAck>) {
          return {{"session_id", m.session_id}, {"server_mode", std::string(1, static_cast<char>(m.server_mode))},
                  {"state_dim", m.state_dim}, {"action_count", m.action_count}, {"flags", m.flags},
                  {"capacity", m.capacity}, {"alpha", m.alpha}};
        } else if constexpr (std::is_same_v<T, PushExperiences> || std::is_same_v<T, ExperiencesBlob>) {
          json records = json::array();
          for (const auto& r : m.records) {
            json j = experience_json(r.experience);
            j["priority"] = r.priority;
            records.push_back(j);
          }
          return {{"records", records}};
        } else if constexpr (std::is_same_v<T, PushAck>) {
          return {{"accepted", m.accepted}, {"queue_depth", m.queue_depth}};
        } else if constexpr (std::is_same_v<T, SetParams> || std::is_same_v<T, ParamsBlob>) {
          return {{"param_version", m.param_version}, {"blob_hex", hex(m.blob)}};
        } else if constexpr (std::is_same_v<T, SetAck>) {
          return {{"param_version", m.param_version}};
        } else if constexpr (std::is_same_v<T, PullParams>) {
          return {{"min_version", m.min_version}};
        } else if constexpr (std::is_same_v<T, SampleReq>) {
          return {{"batch_size", m.batch_size}};
        } else if constexpr (std::is_same_v<T, SampleResp>) {
          json records = json::array();
          for (const auto& r : m.records) {
            json j = experience_json(r.experience);
            j["slot_id"] = r.slot_id;
            j["probability"] = r.probability;
            records.push_back(j);
          }
          return {{"records", records}};
        } else if constexpr (std::is_same_v<T, UpdatePriorities>) {
          json updates = json::array();
          for (const auto& u : m.updates) updates.push_back({{"slot_id", u.slot_id}, {"priority", u.priority}});
          return {{"updates", updates}};
        } else if constexpr (std::is_same_v<T, UpdateAck>) {
          return {{"applied", m.applied}, {"stale", m.stale}};
        } else if constexpr (std::is_same_v<T, PullExperiences>) {
          return {{"max_count", m.max_count}};
        } else if constexpr (std::is_same_v<T, StatsReq>) {
          return json::object();
        } else if constexpr (std::is_same_v<T, StatsResp>) {
          json j = json::object();
          m.stats.for_each([&](const char* name, std::uint64_t v) { j[name] = v; });
          return j;
        } else {
          return {{"code", static_cast<int>(m.code)}, {"code_name", to_string(m.code)}, {"detail", m.detail}};
        }
      },
      message);
}

inline nlohmann::json manifest(const std::vector<Fixture>& fixtures) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : fixtures) {
    auto frame = wire::encode(f.message);
    list.push_back({{"name", f.name},
                    {"file", f.name + ".bin"},
                    {"type", wire::type_name(wire::type_of(f.message))},
                    {"type_code", static_cast<int>(wire::type_of(f.message))},
                    {"decode_state_dim", f.state_dim},
                    {"frame_len", frame.size()},
                    {"fields", to_json(f.message)}});
  }
  return {{"protocol_version", wire::kVersion}, {"fixtures", list}};
}

}  // namespace replaynet::fixtures

#endif  // REPLAYNET_TOOLS_FIXTURE_CORPUS_HPP_
