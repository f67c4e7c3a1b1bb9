#ifndef REPLAYNET_WIRE_BYTE_IO_HPP_
#define REPLAYNET_WIRE_BYTE_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "replaynet/errors.hpp"

namespace replaynet::wire {

// Little-endian appender.
class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

  void bytes(std::span<const std::uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
  }

  void f32_array(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* raw = reinterpret_cast<const std::uint8_t*>(values.data());
      out_.insert(out_.end(), raw, raw + values.size_bytes());
    } else {
      for (float v : values) f32(v);
    }
  }

  void patch_u32(std::size_t offset, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  std::vector<std::uint8_t>& out_;
};

// Bounds-checked little-endian reader over one payload. Running off the end
// is a MalformedError: the header promised more than the payload holds.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  std::uint8_t u8() { return get_le<std::uint8_t>(); }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::span<const std::uint8_t> bytes(std::size_t n) {
    require(n);
    auto view = data_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

  void f32_array(std::size_t count, std::vector<float>& out) {
    require(count * sizeof(float));
    out.resize(count);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, count * sizeof(float));
      pos_ += count * sizeof(float);
    } else {
      for (auto& v : out) v = f32();
    }
  }

  void expect_end() const {
    if (remaining() != 0) {
      throw MalformedError("payload has " + std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  void require(std::size_t n) const {
    if (n > remaining()) {
      throw MalformedError("payload truncated: need " + std::to_string(n) + " bytes, have " +
                           std::to_string(remaining()));
    }
  }

  template <typename T>
  T get_le() {
    require(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v = static_cast<T>(v | (static_cast<T>(data_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace replaynet::wire

#endif  // REPLAYNET_WIRE_BYTE_IO_HPP_
