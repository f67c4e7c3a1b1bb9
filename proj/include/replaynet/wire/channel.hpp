#ifndef REPLAYNET_WIRE_CHANNEL_HPP_
#define REPLAYNET_WIRE_CHANNEL_HPP_

#include <memory>
#include <optional>
#include <vector>

#include "replaynet/transport.hpp"
#include "replaynet/wire/protocol.hpp"

namespace replaynet::wire {

// Whole-message send/receive over a ByteStream. Reads pull as many bytes as
// the socket has ready (up to 1 MiB) and decode every complete frame from
// that chunk before touching the socket again.
class FrameChannel {
 public:
  static constexpr std::size_t kReadChunk = 1 << 20;

  explicit FrameChannel(std::unique_ptr<ByteStream> stream, std::uint32_t state_dim = 0)
      : stream_(std::move(stream)), decoder_(state_dim), read_buffer_(kReadChunk) {}

  void set_state_dim(std::uint32_t state_dim) { decoder_.set_state_dim(state_dim); }
  std::uint32_t state_dim() const noexcept { return decoder_.state_dim(); }

  std::size_t send(const Message& message) {
    return send(message, [](std::size_t) {});
  }

  // before_write sees the frame size once encoded, before the peer can.
  template <typename F>
  std::size_t send(const Message& message, F&& before_write) {
    send_buffer_.clear();
    std::size_t n = encode_into(message, send_buffer_);
    before_write(n);
    stream_->write_all(send_buffer_);
    bytes_sent_ += n;
    return n;
  }

  // Next message; nullopt when the peer closed cleanly between frames.
  std::optional<Message> receive() {
    for (;;) {
      if (auto m = decoder_.next()) {
        last_frame_size_ = decoder_.last_frame_size();
        bytes_received_ += last_frame_size_;
        return m;
      }
      std::size_t n = stream_->read_some(read_buffer_);
      if (n == 0) {
        if (decoder_.buffered() != 0) throw TransportError("peer closed mid-frame");
        return std::nullopt;
      }
      decoder_.feed(std::span<const std::uint8_t>(read_buffer_.data(), n));
    }
  }

  void shutdown() { stream_->shutdown(); }

  std::size_t last_frame_size() const noexcept { return last_frame_size_; }
  std::uint64_t bytes_sent() const noexcept { return bytes_sent_; }
  std::uint64_t bytes_received() const noexcept { return bytes_received_; }

 private:
  std::unique_ptr<ByteStream> stream_;
  StreamDecoder decoder_;
  std::vector<std::uint8_t> read_buffer_;
  std::vector<std::uint8_t> send_buffer_;
  std::size_t last_frame_size_ = 0;
  std::uint64_t bytes_sent_ = 0;
  std::uint64_t bytes_received_ = 0;
};

}  // namespace replaynet::wire

#endif  // REPLAYNET_WIRE_CHANNEL_HPP_
