#include <atomic>

#include "cellgan/transport.hpp"

namespace cellgan::transport {

class InprocHub::Endpoint final : public Transport {
 public:
  Endpoint(InprocHub& hub, int rank) : hub_(hub), rank_(rank) {}

  int rank() const override { return rank_; }
  int world_size() const override { return hub_.world_size(); }

  void send(int to, Message msg) override {
    check_route(to);
    if (!alive_) throw LinkError("rank " + std::to_string(rank_) + " is closed");
    auto& target = *hub_.endpoints_[static_cast<std::size_t>(to)];
    if (!target.alive_) throw LinkError("peer rank " + std::to_string(to) + " is closed");
    msg.sender = rank_;
    target.mailbox_.push(std::move(msg));
  }

  void close() override {
    alive_ = false;
    mailbox_.close();
  }

  bool alive() const { return alive_; }

 private:
  InprocHub& hub_;
  int rank_;
  std::atomic<bool> alive_{true};
};

InprocHub::InprocHub(int world_size) {
  if (world_size < 1) throw UsageError("world size must be positive");
  for (int r = 0; r < world_size; ++r) endpoints_.push_back(std::make_unique<Endpoint>(*this, r));
}

InprocHub::~InprocHub() = default;

Transport& InprocHub::endpoint(int rank) {
  if (rank < 0 || rank >= world_size()) throw RoutingError("no endpoint for rank " + std::to_string(rank));
  return *endpoints_[static_cast<std::size_t>(rank)];
}

void InprocHub::kill(int rank) { endpoint(rank).close(); }

bool InprocHub::alive(int rank) const {
  if (rank < 0 || rank >= static_cast<int>(endpoints_.size())) return false;
  return endpoints_[static_cast<std::size_t>(rank)]->alive();
}

}  // namespace cellgan::transport
