#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cellgan/message.hpp"

namespace cellgan::transport {

using Clock = std::chrono::steady_clock;
using Millis = std::chrono::milliseconds;

enum class Plane { Control, Data, Any };

/// Receive side of an endpoint: independent control and data queues, each
/// FIFO. `recv(Any)` returns the oldest arrival across both.
class Mailbox {
 public:
  void push(Message msg);
  /// Waits at most `timeout`; nullopt on timeout or once closed and empty.
  std::optional<Message> recv(Clock::duration timeout, Plane plane = Plane::Any);
  void close();
  bool closed() const;
  std::size_t size(Plane plane = Plane::Any) const;

 private:
  struct Entry {
    std::uint64_t seq;
    Message msg;
  };
  std::optional<Message> pop_locked(Plane plane);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Entry> control_;
  std::deque<Entry> data_;
  std::uint64_t next_seq_ = 0;
  bool closed_ = false;
};

/// One endpoint of the message-passing layer. send() stamps the sender
/// rank, is thread-safe and delivers reliably in order per peer pair.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual int rank() const = 0;
  virtual int world_size() const = 0;
  /// RoutingError for ranks outside the world, LinkError for closed peers.
  virtual void send(int to, Message msg) = 0;
  virtual void close() = 0;

  std::optional<Message> recv(Clock::duration timeout, Plane plane = Plane::Any) {
    return mailbox_.recv(timeout, plane);
  }
  Mailbox& mailbox() { return mailbox_; }

 protected:
  void check_route(int to) const;
  Mailbox mailbox_;
};

/// In-process backend: one mailbox per rank, shared by all endpoints.
class InprocHub {
 public:
  explicit InprocHub(int world_size);
  ~InprocHub();
  InprocHub(const InprocHub&) = delete;
  InprocHub& operator=(const InprocHub&) = delete;

  int world_size() const { return static_cast<int>(endpoints_.size()); }
  /// Non-owning; valid for the hub's lifetime.
  Transport& endpoint(int rank);
  /// Simulates process death: the endpoint's mailbox closes and any send
  /// to or from it raises LinkError.
  void kill(int rank);
  bool alive(int rank) const;

 private:
  class Endpoint;
  friend class Endpoint;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
};

struct TcpOptions {
  int rank = 0;
  int world_size = 1;
  int base_port = 47000;
  /// Host per rank; a single entry is used for every rank.
  std::vector<std::string> hosts{"127.0.0.1"};
  Millis connect_timeout{10000};
};

/// TCP backend: rank r listens on base_port + r, connects lazily to peers
/// and keeps one outgoing connection per peer.
class TcpTransport final : public Transport {
 public:
  /// Binds the listening socket; StartupError if the port is unavailable.
  explicit TcpTransport(TcpOptions opts);
  ~TcpTransport() override;

  int rank() const override { return opts_.rank; }
  int world_size() const override { return opts_.world_size; }
  void send(int to, Message msg) override;
  void close() override;
  int port() const { return opts_.base_port + opts_.rank; }

 private:
  struct Peer {
    std::mutex mu;
    int fd = -1;
    bool broken = false;
  };
  void accept_loop();
  void read_loop(int fd);
  int connect_to(int to);
  const std::string& host_of(int rank) const;

  TcpOptions opts_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex readers_mu_;
  std::vector<std::thread> readers_;
  std::vector<int> reader_fds_;
  std::vector<std::unique_ptr<Peer>> peers_;
};

}  // namespace cellgan::transport
