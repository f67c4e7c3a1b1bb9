#ifndef REPLAYNET_SUM_TREE_HPP_
#define REPLAYNET_SUM_TREE_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "replaynet/errors.hpp"
#include "replaynet/replay_core.hpp"

namespace replaynet {

template <typename Payload>
struct SampleResult {
  std::vector<std::uint64_t> slot_ids;
  std::vector<Payload> experiences;
  std::vector<double> probabilities;

  std::size_t size() const noexcept { return slot_ids.size(); }
};

/**
 * Prioritized replay storage: a complete binary tree of priority sums laid
 * out flat (children of node i at 2i+1 and 2i+2) over a ring buffer of
 * payload slots.
 *
 * Leaves hold p^alpha, so a uniform draw in [0, total()) resolved by
 * sample_one() picks slot i with probability p_i^alpha / sum_k p_k^alpha.
 * Callers always pass raw priorities; alpha is applied on every write.
 *
 * Not thread-safe. One thread owns the tree.
 */
template <typename Payload>
class SumTree {
 public:
  // Full bottom-up recomputation of internal sums after this many mutations.
  static constexpr std::uint64_t kRebuildInterval = std::uint64_t{1} << 20;

  SumTree(std::uint64_t capacity_request, double p_min, double alpha = 1.0,
          bool stratified = false)
      : p_min_(p_min), alpha_(alpha), stratified_(stratified) {
    if (capacity_request == 0) throw DomainError("SumTree capacity must be >= 1");
    if (!(p_min > 0.0)) throw DomainError("SumTree p_min must be > 0");
    if (!(alpha >= 0.0)) throw DomainError("SumTree alpha must be >= 0");
    capacity_ = std::bit_ceil(capacity_request);
    depth_ = static_cast<std::uint32_t>(std::countr_zero(capacity_));
    nodes_.assign(2 * capacity_ - 1, 0.0);
    slots_.resize(capacity_);
    generations_.assign(capacity_, 0);
  }

  std::uint64_t capacity() const noexcept { return capacity_; }
  std::uint32_t depth() const noexcept { return depth_; }
  std::uint64_t live_count() const noexcept { return live_count_; }
  std::uint64_t insert_count() const noexcept { return insert_count_; }
  std::uint64_t write_cursor() const noexcept { return write_cursor_; }
  bool empty() const noexcept { return live_count_ == 0; }
  double alpha() const noexcept { return alpha_; }
  double p_min() const noexcept { return p_min_; }

  double total() const noexcept { return nodes_[0]; }

  // Internal nodes touched by the most recent insert/update/sample_one.
  std::uint32_t last_visit_count() const noexcept { return last_visits_; }

  // Stored leaf value (p^alpha) for a slot; 0 for never-written slots.
  double leaf(std::uint64_t slot) const { return nodes_.at(leaf_index(slot)); }
  double node(std::size_t index) const { return nodes_.at(index); }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Insert ordinal (1-based) of the payload currently in a slot; 0 when empty.
  std::uint64_t generation(std::uint64_t slot) const { return generations_.at(slot); }

  bool is_live(std::uint64_t slot) const noexcept { return slot < live_count_; }

  const Payload& at(std::uint64_t slot) const {
    if (!is_live(slot)) throw NotFoundError("slot " + std::to_string(slot) + " is not live");
    return slots_[slot];
  }

  double probability(std::uint64_t slot) const {
    if (!is_live(slot)) throw NotFoundError("slot " + std::to_string(slot) + " is not live");
    return leaf(slot) / total();
  }

  // Writes at the cursor, overwriting the oldest slot once full.
  std::uint64_t insert(Payload payload, Priority priority) {
    std::uint64_t slot = write_cursor_;
    slots_[slot] = std::move(payload);
    generations_[slot] = ++insert_count_;
    set_leaf(slot, stored_value(priority));
    write_cursor_ = (write_cursor_ + 1) % capacity_;
    if (live_count_ < capacity_) ++live_count_;
    return slot;
  }

  void update_priority(std::uint64_t slot, Priority priority) {
    if (!is_live(slot)) {
      throw NotFoundError("update_priority: slot " + std::to_string(slot) + " is not live");
    }
    set_leaf(slot, stored_value(priority));
  }

  // Walks root to leaf: go left when the left sum is >= s, otherwise go
  // right with s reduced by the left sum.
  std::uint64_t sample_one(double s) {
    if (empty()) throw DomainError("sample_one: tree is empty");
    if (!(s >= 0.0 && s <= total())) {
      throw DomainError("sample_one: s=" + std::to_string(s) + " outside [0, total]");
    }
    std::size_t index = 0;
    std::uint32_t visits = 0;
    const std::size_t first_leaf = capacity_ - 1;
    while (index < first_leaf) {
      ++visits;
      std::size_t left = 2 * index + 1;
      if (nodes_[left] >= s) {
        index = left;
      } else if (nodes_[left + 1] > 0.0) {
        s -= nodes_[left];
        index = left + 1;
      } else {
        // Rounding pushed s past the last non-zero subtree.
        index = left;
      }
    }
    last_visits_ = visits;
    return index - first_leaf;
  }

  // k draws with replacement. Independent uniform draws by default,
  // one draw per equal-width segment of [0, total) when stratified.
  template <typename Rng>
  SampleResult<Payload> sample_batch(std::uint32_t k, Rng& rng) {
    if (empty()) throw DomainError("sample_batch: tree is empty");
    if (k == 0) throw DomainError("sample_batch: k must be >= 1");
    SampleResult<Payload> result;
    result.slot_ids.reserve(k);
    result.experiences.reserve(k);
    result.probabilities.reserve(k);
    const double sum = total();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::uint32_t i = 0; i < k; ++i) {
      double s = stratified_ ? (i + unit(rng)) * (sum / k) : unit(rng) * sum;
      if (s > sum) s = sum;
      std::uint64_t slot = sample_one(s);
      result.slot_ids.push_back(slot);
      result.experiences.push_back(slots_[slot]);
      result.probabilities.push_back(nodes_[leaf_index(slot)] / sum);
    }
    return result;
  }

  // Recomputes every internal node from the leaves.
  void rebuild() {
    for (std::size_t i = capacity_ - 1; i-- > 0;) {
      nodes_[i] = nodes_[2 * i + 1] + nodes_[2 * i + 2];
    }
    mutations_since_rebuild_ = 0;
  }

  // Largest relative gap between an internal node and the sum of its children.
  double max_relative_sum_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < capacity_; ++i) {
      double children = nodes_[2 * i + 1] + nodes_[2 * i + 2];
      double scale = std::max(std::abs(children), std::abs(nodes_[i]));
      if (scale == 0.0) continue;
      worst = std::max(worst, std::abs(nodes_[i] - children) / scale);
    }
    return worst;
  }

 private:
  std::size_t leaf_index(std::uint64_t slot) const {
    if (slot >= capacity_) throw NotFoundError("slot " + std::to_string(slot) + " >= capacity");
    return static_cast<std::size_t>(capacity_ - 1 + slot);
  }

  double stored_value(Priority priority) const {
    double v = std::pow(std::max(priority.value(), p_min_), alpha_);
    return std::max(v, p_min_);
  }

  void set_leaf(std::uint64_t slot, double value) {
    std::size_t index = leaf_index(slot);
    nodes_[index] = value;
    std::uint32_t visits = 0;
    // Ancestors are recomputed from their children rather than shifted by a
    // delta, so parent == left + right holds exactly after every write.
    while (index > 0) {
      index = (index - 1) / 2;
      nodes_[index] = nodes_[2 * index + 1] + nodes_[2 * index + 2];
      ++visits;
    }
    last_visits_ = visits;
    if (++mutations_since_rebuild_ >= kRebuildInterval) rebuild();
  }

  double p_min_;
  double alpha_;
  bool stratified_;
  std::uint64_t capacity_ = 0;
  std::uint32_t depth_ = 0;
  std::vector<double> nodes_;
  std::vector<Payload> slots_;
  std::vector<std::uint64_t> generations_;
  std::uint64_t write_cursor_ = 0;
  std::uint64_t live_count_ = 0;
  std::uint64_t insert_count_ = 0;
  std::uint64_t mutations_since_rebuild_ = 0;
  std::uint32_t last_visits_ = 0;
};

}  // namespace replaynet

#endif  // REPLAYNET_SUM_TREE_HPP_
