#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sinfer/errors.hpp"
#include "sinfer/wire.hpp"

namespace sinfer {

inline int io_timeout_ms() {
  if (const char* env = std::getenv("SINFER_TIMEOUT_MS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 30000;
}

// Message-oriented duplex link carrying whole frames.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(MsgType type, const std::vector<uint8_t>& payload) = 0;
  virtual Frame recv() = 0;
  virtual void close() = 0;
};

namespace detail {

struct FrameQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Frame> q;
  bool closed = false;

  void push(Frame f) {
    {
      std::lock_guard<std::mutex> lock(mu);
      if (closed) return;
      q.push_back(std::move(f));
    }
    cv.notify_one();
  }

  Frame pop(int timeout_ms) {
    std::unique_lock<std::mutex> lock(mu);
    if (!cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                     [this] { return !q.empty() || closed; }))
      throw ProtocolError("timed out waiting for a frame");
    if (q.empty()) throw ProtocolError("peer closed the connection");
    Frame f = std::move(q.front());
    q.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

}  // namespace detail

// Two transports joined back to back in one process.
class InProcTransport : public Transport {
 public:
  ~InProcTransport() override { close(); }

  void send(MsgType type, const std::vector<uint8_t>& payload) override {
    auto peer = peer_.lock();
    if (!peer) throw ProtocolError("peer closed the connection");
    peer->push(Frame{type, payload});
  }

  Frame recv() override { return inbox_->pop(io_timeout_ms()); }

  void close() override {
    inbox_->close();
    if (auto peer = peer_.lock()) peer->close();
  }

  static std::pair<std::unique_ptr<InProcTransport>, std::unique_ptr<InProcTransport>> make_pair() {
    auto a = std::unique_ptr<InProcTransport>(new InProcTransport);
    auto b = std::unique_ptr<InProcTransport>(new InProcTransport);
    a->peer_ = b->inbox_;
    b->peer_ = a->inbox_;
    return {std::move(a), std::move(b)};
  }

 private:
  InProcTransport() : inbox_(std::make_shared<detail::FrameQueue>()) {}

  std::shared_ptr<detail::FrameQueue> inbox_;
  std::weak_ptr<detail::FrameQueue> peer_;
};

// TCP transport over a connected socket.  Writes go through a background
// thread so that two peers flooding each other never deadlock on full
// kernel buffers.
class TcpTransport : public Transport {
 public:
  explicit TcpTransport(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    struct timeval tv;
    tv.tv_sec = io_timeout_ms() / 1000;
    tv.tv_usec = (io_timeout_ms() % 1000) * 1000;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    writer_ = std::thread([this] { write_loop(); });
  }

  ~TcpTransport() override { close(); }

  void send(MsgType type, const std::vector<uint8_t>& payload) override {
    std::vector<uint8_t> bytes = frame_bytes(type, payload);
    {
      std::lock_guard<std::mutex> lock(out_mu_);
      if (out_closed_) throw ProtocolError("peer closed the connection");
      out_.push_back(std::move(bytes));
    }
    out_cv_.notify_one();
  }

  Frame recv() override {
    Frame f;
    size_t consumed = 0;
    while (!parse_frame(inbuf_, f, &consumed)) {
      uint8_t chunk[65536];
      ssize_t got = ::recv(fd_, chunk, sizeof chunk, 0);
      if (got < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK)
          throw ProtocolError("timed out waiting for a frame");
        throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (got == 0) throw ProtocolError("peer closed the connection");
      inbuf_.insert(inbuf_.end(), chunk, chunk + got);
    }
    inbuf_.erase(inbuf_.begin(), inbuf_.begin() + static_cast<long>(consumed));
    return f;
  }

  void close() override {
    {
      std::lock_guard<std::mutex> lock(out_mu_);
      if (out_closed_) return;
      out_closed_ = true;
    }
    out_cv_.notify_one();
    if (writer_.joinable()) writer_.join();
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
  }

 private:
  void write_loop() {
    for (;;) {
      std::vector<uint8_t> bytes;
      {
        std::unique_lock<std::mutex> lock(out_mu_);
        out_cv_.wait(lock, [this] { return !out_.empty() || out_closed_; });
        if (out_.empty()) return;
        bytes = std::move(out_.front());
        out_.pop_front();
      }
      size_t sent = 0;
      while (sent < bytes.size()) {
        ssize_t put = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (put <= 0) return;
        sent += static_cast<size_t>(put);
      }
    }
  }

  int fd_;
  std::vector<uint8_t> inbuf_;
  std::thread writer_;
  std::mutex out_mu_;
  std::condition_variable out_cv_;
  std::deque<std::vector<uint8_t>> out_;
  bool out_closed_ = false;
};

// Record of one frame crossing a tapped transport.
struct TapEntry {
  bool outgoing = false;
  MsgType type = MsgType::Abort;
  std::vector<uint8_t> payload;
};

// Wrapper that records every frame crossing a transport into a log the
// caller owns, for audits and traffic accounting.
class TapTransport : public Transport {
 public:
  TapTransport(Transport& inner, std::vector<TapEntry>& log) : inner_(inner), log_(log) {}

  void send(MsgType type, const std::vector<uint8_t>& payload) override {
    log_.push_back({true, type, payload});
    inner_.send(type, payload);
  }

  Frame recv() override {
    Frame f = inner_.recv();
    log_.push_back({false, f.type, f.payload});
    return f;
  }

  void close() override { inner_.close(); }

 private:
  Transport& inner_;
  std::vector<TapEntry>& log_;
};

inline uint64_t tap_bytes(const std::vector<TapEntry>& log, bool outgoing) {
  uint64_t total = 0;
  for (const TapEntry& e : log)
    if (e.outgoing == outgoing) total += e.payload.size() + 5;
  return total;
}

// Listening socket bound to 127.0.0.1; port 0 picks a free port.
class TcpListener {
 public:
  explicit TcpListener(uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError(std::string("socket failed: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      int err = errno;
      ::close(fd_);
      throw ProtocolError(std::string("bind failed: ") + std::strerror(err));
    }
    if (::listen(fd_, 16) < 0) {
      int err = errno;
      ::close(fd_);
      throw ProtocolError(std::string("listen failed: ") + std::strerror(err));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  ~TcpListener() { close(); }

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  uint16_t port() const { return port_; }

  std::unique_ptr<TcpTransport> accept() {
    int conn = ::accept(fd_, nullptr, nullptr);
    if (conn < 0) throw ProtocolError(std::string("accept failed: ") + std::strerror(errno));
    return std::make_unique<TcpTransport>(conn);
  }

  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

inline std::unique_ptr<TcpTransport> tcp_connect(const std::string& host, uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ProtocolError(std::string("socket failed: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ProtocolError("bad address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    int err = errno;
    ::close(fd);
    throw ProtocolError(std::string("connect failed: ") + std::strerror(err));
  }
  return std::make_unique<TcpTransport>(fd);
}

}  // namespace sinfer
