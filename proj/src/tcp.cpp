#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cellgan/log.hpp"
#include "cellgan/transport.hpp"

namespace cellgan::transport {

namespace {

std::string errno_text() { return std::strerror(errno); }

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

TcpTransport::TcpTransport(TcpOptions opts) : opts_(std::move(opts)) {
  if (opts_.world_size < 1 || opts_.rank < 0 || opts_.rank >= opts_.world_size)
    throw UsageError("rank " + std::to_string(opts_.rank) + " invalid for world size " +
                     std::to_string(opts_.world_size));
  if (opts_.hosts.empty()) throw UsageError("no hosts configured");
  if (opts_.hosts.size() != 1 && static_cast<int>(opts_.hosts.size()) != opts_.world_size)
    throw UsageError("host list must have one entry or one per rank");
  for (int r = 0; r < opts_.world_size; ++r) peers_.push_back(std::make_unique<Peer>());

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw StartupError("socket: " + errno_text());
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<std::uint16_t>(port()));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 64) < 0) {
    const std::string why = errno_text();
    ::close(listen_fd_);
    throw StartupError("cannot listen on port " + std::to_string(port()) + ": " + why);
  }
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpTransport::~TcpTransport() { close(); }

const std::string& TcpTransport::host_of(int rank) const {
  return opts_.hosts.size() == 1 ? opts_.hosts.front() : opts_.hosts[static_cast<std::size_t>(rank)];
}

void TcpTransport::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    std::lock_guard lock(readers_mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    reader_fds_.push_back(fd);
    readers_.emplace_back([this, fd] { read_loop(fd); });
  }
}

void TcpTransport::read_loop(int fd) {
  std::uint8_t header[kFrameHeaderSize];
  while (!stopping_) {
    if (!read_all(fd, header, sizeof header)) return;
    FrameHeader h;
    try {
      h = decode_frame_header(header);
    } catch (const DecodeError& e) {
      log::error("rank ", opts_.rank, ": dropping connection: ", e.what());
      return;
    }
    Bytes payload(h.length);
    if (h.length && !read_all(fd, payload.data(), payload.size())) return;
    mailbox_.push(Message{h.tag, h.sender, h.epoch, std::move(payload)});
  }
}

int TcpTransport::connect_to(int to) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(opts_.base_port + to);
  if (::getaddrinfo(host_of(to).c_str(), service.c_str(), &hints, &res) != 0 || !res)
    throw LinkError("cannot resolve host " + host_of(to));

  const auto deadline = Clock::now() + opts_.connect_timeout;
  int fd = -1;
  while (true) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) break;
    if (fd >= 0) ::close(fd);
    fd = -1;
    if (stopping_ || Clock::now() >= deadline) break;
    std::this_thread::sleep_for(Millis(20));
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw LinkError("cannot connect to rank " + std::to_string(to) + " at " + host_of(to) + ":" + service);
  set_nodelay(fd);
  return fd;
}

void TcpTransport::send(int to, Message msg) {
  check_route(to);
  if (stopping_) throw LinkError("rank " + std::to_string(opts_.rank) + " is closed");
  msg.sender = opts_.rank;
  if (to == opts_.rank) {
    mailbox_.push(std::move(msg));
    return;
  }
  const Bytes frame = encode_frame(msg);
  Peer& peer = *peers_[static_cast<std::size_t>(to)];
  std::lock_guard lock(peer.mu);
  if (peer.broken) throw LinkError("link to rank " + std::to_string(to) + " is broken");
  if (peer.fd < 0) peer.fd = connect_to(to);
  if (!write_all(peer.fd, frame.data(), frame.size())) {
    peer.broken = true;
    ::close(peer.fd);
    peer.fd = -1;
    throw LinkError("send to rank " + std::to_string(to) + " failed: " + errno_text());
  }
}

void TcpTransport::close() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  {
    std::lock_guard lock(readers_mu_);
    for (int fd : reader_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : readers_) t.join();
  for (int fd : reader_fds_) ::close(fd);
  for (auto& p : peers_) {
    std::lock_guard lock(p->mu);
    if (p->fd >= 0) ::close(p->fd);
    p->fd = -1;
  }
  mailbox_.close();
}

}  // namespace cellgan::transport
