#ifndef REPLAYNET_TRANSPORT_HPP_
#define REPLAYNET_TRANSPORT_HPP_

// Byte-stream transport boundary. The server and clients only see
// ByteStream / Listener, so a kernel-bypass stack can be dropped in behind
// the same interface. The shipped implementation is POSIX TCP.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "replaynet/errors.hpp"

namespace replaynet {

class ByteStream {
 public:
  virtual ~ByteStream() = default;
  // Blocks until at least one byte arrives. Returns 0 on orderly close.
  virtual std::size_t read_some(std::span<std::uint8_t> buffer) = 0;
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  // Unblocks pending reads on both ends; safe to call from another thread.
  virtual void shutdown() = 0;
};

class Listener {
 public:
  virtual ~Listener() = default;
  // Returns nullptr once the listener has been closed.
  virtual std::unique_ptr<ByteStream> accept() = 0;
  virtual void close() = 0;
  virtual std::uint16_t port() const = 0;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port"
  static Endpoint parse(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos) throw DomainError("endpoint must be HOST:PORT, got '" + text + "'");
    Endpoint e;
    e.host = text.substr(0, colon);
    if (e.host.empty()) e.host = "0.0.0.0";
    unsigned long port = 0;
    try {
      port = std::stoul(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw DomainError("bad port in '" + text + "'");
    }
    if (port > 65535) throw DomainError("port out of range in '" + text + "'");
    e.port = static_cast<std::uint16_t>(port);
    return e;
  }

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

namespace detail {

inline std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0" || host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return addr;
  }
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &found) != 0 || found == nullptr) {
    throw TransportError("cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(found->ai_addr)->sin_addr;
  ::freeaddrinfo(found);
  return addr;
}

}  // namespace detail

class SocketStream final : public ByteStream {
 public:
  explicit SocketStream(detail::UniqueFd fd) : fd_(std::move(fd)) {
    int one = 1;
    // Fails harmlessly on AF_UNIX socket pairs.
    ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  std::size_t read_some(std::span<std::uint8_t> buffer) override {
    for (;;) {
      ssize_t n = ::recv(fd_.get(), buffer.data(), buffer.size(), 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      throw TransportError(detail::errno_text("recv"));
    }
  }

  void write_all(std::span<const std::uint8_t> data) override {
    std::size_t sent = 0;
    while (sent < data.size()) {
      ssize_t n = ::send(fd_.get(), data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(detail::errno_text("send"));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void shutdown() override { ::shutdown(fd_.get(), SHUT_RDWR); }

 private:
  detail::UniqueFd fd_;
};

class TcpListener final : public Listener {
 public:
  explicit TcpListener(const Endpoint& endpoint, int backlog = 128) {
    detail::UniqueFd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (fd.get() < 0) throw TransportError(detail::errno_text("socket"));
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = detail::resolve(endpoint.host, endpoint.port);
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw TransportError(detail::errno_text(("bind " + endpoint.to_string()).c_str()));
    }
    if (::listen(fd.get(), backlog) != 0) throw TransportError(detail::errno_text("listen"));
    socklen_t len = sizeof(addr);
    ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    fd_ = std::move(fd);
  }

  std::unique_ptr<ByteStream> accept() override {
    for (;;) {
      int client = ::accept(fd_.get(), nullptr, nullptr);
      if (client >= 0) return std::make_unique<SocketStream>(detail::UniqueFd(client));
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return nullptr;
    }
  }

  // shutdown() wakes a thread blocked in accept(); the fd is released in the destructor.
  void close() override { ::shutdown(fd_.get(), SHUT_RDWR); }

  std::uint16_t port() const override { return port_; }

 private:
  detail::UniqueFd fd_;
  std::uint16_t port_ = 0;
};

inline std::unique_ptr<ByteStream> connect_tcp(const Endpoint& endpoint) {
  detail::UniqueFd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (fd.get() < 0) throw TransportError(detail::errno_text("socket"));
  std::string host = endpoint.host == "0.0.0.0" ? "127.0.0.1" : endpoint.host;
  sockaddr_in addr = detail::resolve(host, endpoint.port);
  int rc;
  do {
    rc = ::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  } while (rc != 0 && errno == EINTR);
  if (rc != 0) throw TransportError(detail::errno_text(("connect " + endpoint.to_string()).c_str()));
  return std::make_unique<SocketStream>(std::move(fd));
}

// Two connected in-process streams (AF_UNIX socketpair), handy for tests and
// for wiring a client directly to a mock peer.
inline std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> stream_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw TransportError(detail::errno_text("socketpair"));
  }
  return {std::make_unique<SocketStream>(detail::UniqueFd(fds[0])),
          std::make_unique<SocketStream>(detail::UniqueFd(fds[1]))};
}

}  // namespace replaynet

#endif  // REPLAYNET_TRANSPORT_HPP_
