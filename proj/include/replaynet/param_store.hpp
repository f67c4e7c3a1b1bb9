#ifndef REPLAYNET_PARAM_STORE_HPP_
#define REPLAYNET_PARAM_STORE_HPP_

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

namespace replaynet {

struct ParameterBlob {
  std::uint64_t version = 0;
  std::vector<std::uint8_t> bytes;
  std::chrono::system_clock::time_point updated_at{};
};

// Latest model parameters. Writers build the new blob outside the lock and
// publish it with a pointer swap; readers hold a shared_ptr to an immutable
// blob, so a read never observes a partially written one.
class ParameterStore {
 public:
  ParameterStore() : current_(std::make_shared<const ParameterBlob>()) {}

  // Returns the version assigned to the new blob (previous + 1).
  std::uint64_t set(std::vector<std::uint8_t> bytes) {
    auto next = std::make_shared<ParameterBlob>();
    next->bytes = std::move(bytes);
    next->updated_at = std::chrono::system_clock::now();
    std::lock_guard lock(mutex_);
    next->version = current_->version + 1;
    current_ = std::move(next);
    return current_->version;
  }

  std::shared_ptr<const ParameterBlob> get() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  std::uint64_t version() const { return get()->version; }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ParameterBlob> current_;
};

}  // namespace replaynet

#endif  // REPLAYNET_PARAM_STORE_HPP_
