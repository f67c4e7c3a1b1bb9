#ifndef REPLAYNET_ERRORS_HPP_
#define REPLAYNET_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace replaynet {

// Precondition violated by a caller (empty input, out-of-range draw, bad config).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A slot id that was never written or is no longer live.
class NotFoundError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Frame-level corruption: bad magic, bad version, oversize payload.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header is valid but the payload does not match the message's layout.
class MalformedError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// Encoder refused a message (oversize payload, inconsistent record shapes).
class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Socket-level failure or peer hang-up.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Error codes carried by the ERROR (0x7F) message.
enum class ErrorCode : std::uint16_t {
  kProtocol = 1,
  kMalformed = 2,
  kBackpressure = 3,
  kWrongMode = 4,
  kNotReady = 5,
  kForbidden = 6,
  kBadState = 7,
  kInternal = 8,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kProtocol: return "PROTOCOL";
    case ErrorCode::kMalformed: return "MALFORMED";
    case ErrorCode::kBackpressure: return "BACKPRESSURE";
    case ErrorCode::kWrongMode: return "WRONG_MODE";
    case ErrorCode::kNotReady: return "NOT_READY";
    case ErrorCode::kForbidden: return "FORBIDDEN";
    case ErrorCode::kBadState: return "BAD_STATE";
    case ErrorCode::kInternal: return "INTERNAL";
  }
  return "UNKNOWN";
}

// An ERROR frame received from the server, surfaced on the client side.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept {
    return code_ == ErrorCode::kBackpressure || code_ == ErrorCode::kNotReady;
  }

 private:
  ErrorCode code_;
};

}  // namespace replaynet

#endif  // REPLAYNET_ERRORS_HPP_
