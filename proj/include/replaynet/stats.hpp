#ifndef REPLAYNET_STATS_HPP_
#define REPLAYNET_STATS_HPP_

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "replaynet/wire/protocol.hpp"

namespace replaynet {

using Clock = std::chrono::steady_clock;

inline double elapsed_us(Clock::time_point since, Clock::time_point until = Clock::now()) {
  return std::chrono::duration<double, std::micro>(until - since).count();
}

// Fixed log-spaced buckets from 1 us to 10 s, eight per decade. Bucket i
// counts samples <= upper_bound_us(i); the final bucket catches overflow.
class LatencyHistogram {
 public:
  static constexpr int kPerDecade = 8;
  static constexpr int kDecades = 7;
  static constexpr std::size_t kBounded = kPerDecade * kDecades + 1;
  static constexpr std::size_t kBuckets = kBounded + 1;

  static double upper_bound_us(std::size_t bucket) {
    if (bucket >= kBounded) return INFINITY;
    return std::pow(10.0, static_cast<double>(bucket) / kPerDecade);
  }

  void record(double micros) {
    std::size_t bucket = kBounded;
    if (micros <= 1.0) {
      bucket = 0;
    } else {
      double position = std::ceil(std::log10(micros) * kPerDecade - 1e-9);
      if (position < static_cast<double>(kBounded)) bucket = static_cast<std::size_t>(position);
    }
    buckets_[bucket].fetch_add(1, std::memory_order_relaxed);
    count_.fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }
  std::uint64_t bucket(std::size_t i) const { return buckets_[i].load(std::memory_order_relaxed); }

 private:
  std::array<std::atomic<std::uint64_t>, kBuckets> buckets_{};
  std::atomic<std::uint64_t> count_{0};
};

// Exact summary over retained samples (client side, where counts are small).
struct LatencySummary {
  std::uint64_t count = 0;
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
  double total_us = 0.0;

  static LatencySummary of(std::vector<double> samples) {
    LatencySummary s;
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    s.count = samples.size();
    for (double v : samples) s.total_us += v;
    s.mean_us = s.total_us / static_cast<double>(s.count);
    auto rank = [&](double q) {
      std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.count))) ;
      idx = std::clamp<std::size_t>(idx, 1, s.count) - 1;
      return samples[idx];
    };
    s.p50_us = rank(0.50);
    s.p99_us = rank(0.99);
    s.max_us = samples.back();
    return s;
  }
};

// Server-wide counters. Every field is monotone except the queue depth gauge.
struct ServerStats {
  std::atomic<std::uint64_t> pushes_received{0};
  std::atomic<std::uint64_t> experiences_pushed{0};
  std::atomic<std::uint64_t> experiences_added{0};
  std::atomic<std::uint64_t> experiences_rejected{0};
  std::atomic<std::uint64_t> experiences_drained{0};
  std::atomic<std::uint64_t> sample_requests{0};
  std::atomic<std::uint64_t> experiences_sampled{0};
  std::atomic<std::uint64_t> priority_updates_applied{0};
  std::atomic<std::uint64_t> priority_updates_stale{0};
  std::atomic<std::uint64_t> param_sets{0};
  std::atomic<std::uint64_t> param_pulls{0};
  std::atomic<std::uint64_t> bytes_in{0};
  std::atomic<std::uint64_t> bytes_out{0};
  std::atomic<std::uint64_t> learner_experience_records{0};
  std::atomic<std::uint64_t> learner_experience_bytes{0};
  std::atomic<std::uint64_t> queue_depth{0};
  std::atomic<std::uint64_t> queue_high_water{0};
  std::atomic<std::uint64_t> param_version{0};

  LatencyHistogram push_latency;
  LatencyHistogram sample_latency;
  LatencyHistogram update_latency;
  LatencyHistogram set_params_latency;
  LatencyHistogram pull_params_latency;
  LatencyHistogram pull_experiences_latency;

  void set_queue_depth(std::uint64_t depth) {
    queue_depth.store(depth, std::memory_order_relaxed);
    std::uint64_t seen = queue_high_water.load(std::memory_order_relaxed);
    while (depth > seen && !queue_high_water.compare_exchange_weak(seen, depth)) {
    }
  }

  wire::StatsSnapshot snapshot() const {
    wire::StatsSnapshot s;
    s.pushes_received = pushes_received.load();
    s.experiences_pushed = experiences_pushed.load();
    s.experiences_added = experiences_added.load();
    s.experiences_rejected = experiences_rejected.load();
    s.experiences_drained = experiences_drained.load();
    s.sample_requests = sample_requests.load();
    s.experiences_sampled = experiences_sampled.load();
    s.priority_updates_applied = priority_updates_applied.load();
    s.priority_updates_stale = priority_updates_stale.load();
    s.param_sets = param_sets.load();
    s.param_pulls = param_pulls.load();
    s.bytes_in = bytes_in.load();
    s.bytes_out = bytes_out.load();
    s.learner_experience_records = learner_experience_records.load();
    s.learner_experience_bytes = learner_experience_bytes.load();
    s.queue_depth = queue_depth.load();
    s.queue_high_water = queue_high_water.load();
    s.param_version = param_version.load();
    return s;
  }

  // CSV rows "timestamp,counter,value": every counter, then the non-empty
  // histogram buckets as latency_us.<op>.le_<bound>.
  void write_csv(std::ostream& out, double timestamp_s, bool header = true) const {
    if (header) out << "timestamp,counter,value\n";
    auto ts = std::to_string(timestamp_s);
    snapshot().for_each([&](const char* name, std::uint64_t v) {
      out << ts << ',' << name << ',' << v << '\n';
    });
    const std::pair<const char*, const LatencyHistogram*> hists[] = {
        {"push", &push_latency},           {"sample", &sample_latency},
        {"update_priorities", &update_latency}, {"set_params", &set_params_latency},
        {"pull_params", &pull_params_latency}, {"pull_experiences", &pull_experiences_latency}};
    for (const auto& [name, h] : hists) {
      out << ts << ",latency_us." << name << ".count," << h->count() << '\n';
      for (std::size_t i = 0; i < LatencyHistogram::kBuckets; ++i) {
        std::uint64_t c = h->bucket(i);
        if (c == 0) continue;
        double bound = LatencyHistogram::upper_bound_us(i);
        out << ts << ",latency_us." << name << ".le_";
        if (std::isinf(bound)) {
          out << "inf";
        } else {
          out << bound;
        }
        out << ',' << c << '\n';
      }
    }
  }
};

}  // namespace replaynet

#endif  // REPLAYNET_STATS_HPP_
