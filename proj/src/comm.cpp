#include "cellgan/comm.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "cellgan/log.hpp"

namespace cellgan::transport {

namespace {

std::string join(const std::vector<int>& ranks) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ranks.size(); ++i) os << (i ? ", " : "") << ranks[i];
  return os.str();
}

}  // namespace

bool CommContext::contains(int rank) const { return std::binary_search(members.begin(), members.end(), rank); }

GatherAborted::GatherAborted(std::vector<int> missing, std::map<int, Bytes> partial, const std::string& why)
    : Error("gather aborted (" + why + "), missing ranks: " + join(missing)),
      missing_(std::move(missing)),
      partial_(std::move(partial)) {}

Communicator::Communicator(Transport& transport) : transport_(transport) {}

CommContext Communicator::world() const {
  CommContext c{ContextKind::World, std::vector<int>(static_cast<std::size_t>(world_size()))};
  std::iota(c.members.begin(), c.members.end(), 0);
  return c;
}

CommContext Communicator::global() const {
  auto c = world();
  c.kind = ContextKind::Global;
  return c;
}

CommContext Communicator::local(std::vector<int> workers) const {
  std::sort(workers.begin(), workers.end());
  workers.erase(std::unique(workers.begin(), workers.end()), workers.end());
  for (int r : workers) {
    if (r == 0) throw UsageError("LOCAL context cannot include the master");
    if (r < 0 || r >= world_size()) throw RoutingError("rank " + std::to_string(r) + " outside world");
  }
  return CommContext{ContextKind::Local, std::move(workers)};
}

void Communicator::send(const CommContext& ctx, int to, Message msg) {
  if (!ctx.contains(to) && !(to == 0 && is_control(msg.tag)))
    throw RoutingError("rank " + std::to_string(to) + " is not a member of the context");
  transport_.send(to, std::move(msg));
}

void Communicator::mark_failed(int rank) {
  std::lock_guard lock(mu_);
  failed_.insert(rank);
}

std::set<int> Communicator::failed() const {
  std::lock_guard lock(mu_);
  return failed_;
}

bool Communicator::is_failed(int rank) const {
  std::lock_guard lock(mu_);
  return failed_.count(rank) > 0;
}

void Communicator::cancel() { cancelled_ = true; }

std::map<int, Bytes> Communicator::gather(const CommContext& ctx, const Bytes& contribution, int epoch,
                                          const GatherOptions& opts) {
  const int self = rank();
  if (!ctx.contains(self)) throw UsageError("caller is not a member of the gather context");
  std::vector<int> others;
  for (int r : ctx.members)
    if (r != self) others.push_back(r);

  for (int r : others) {
    if (is_failed(r)) continue;
    try {
      transport_.send(r, Message{Tag::CenterExchange, self, epoch, contribution});
    } catch (const LinkError& e) {
      log::warn("rank ", self, ": ", e.what());
      mark_failed(r);
    }
  }

  const int oldest = epoch - opts.staleness;
  auto promote = [&](int r) {
    auto it = pending_.find(r);
    if (it == pending_.end()) return;
    auto& by_epoch = it->second;
    while (!by_epoch.empty() && by_epoch.begin()->first <= epoch) {
      auto node = by_epoch.extract(by_epoch.begin());
      latest_[r] = {node.key(), std::move(node.mapped())};
    }
  };
  auto satisfied = [&](int r) {
    auto it = latest_.find(r);
    return it != latest_.end() && it->second.first >= oldest && it->second.first <= epoch;
  };

  auto file = [&](Message&& msg) {
    if (msg.tag != Tag::CenterExchange) {
      log::warn("rank ", self, ": ignoring ", to_string(msg.tag), " during gather");
      return;
    }
    if (ctx.contains(msg.sender) && msg.epoch < oldest)
      throw ProtocolError("stale contribution from rank " + std::to_string(msg.sender) + ": epoch " +
                          std::to_string(msg.epoch) + " while gathering epoch " + std::to_string(epoch));
    pending_[msg.sender][msg.epoch] = std::move(msg.payload);
  };

  const auto deadline = Clock::now() + opts.timeout;
  std::string abort_reason;
  while (true) {
    // Everything already delivered is filed first, so a newer contribution
    // wins over a reusable older one.
    while (auto ready = transport_.recv(Clock::duration::zero(), Plane::Data)) file(std::move(*ready));
    bool done = true;
    for (int r : others) {
      promote(r);
      if (!satisfied(r) && !is_failed(r)) done = false;
    }
    if (done) break;
    if (cancelled_) {
      abort_reason = "cancelled";
      break;
    }
    const auto now = Clock::now();
    if (now >= deadline) {
      abort_reason = "timeout";
      break;
    }
    auto msg = transport_.recv(std::min<Clock::duration>(Millis(50), deadline - now), Plane::Data);
    if (!msg) {
      if (transport_.mailbox().closed()) {
        abort_reason = "endpoint closed";
        break;
      }
      continue;
    }
    file(std::move(*msg));
  }

  std::map<int, Bytes> out;
  out.emplace(self, contribution);
  std::vector<int> missing;
  for (int r : others) {
    if (satisfied(r)) {
      out.emplace(r, latest_[r].second);
    } else {
      missing.push_back(r);
    }
  }
  if (!missing.empty()) throw GatherAborted(std::move(missing), std::move(out), abort_reason.empty() ? "peer failed" : abort_reason);
  return out;
}

void Communicator::broadcast_config(const CommContext& ctx, const Bytes& config) {
  if (rank() != 0) throw UsageError("only the master broadcasts the configuration");
  if (config.empty()) throw UsageError("empty configuration");
  std::vector<int> undelivered;
  for (int r : ctx.members) {
    if (r == 0) continue;
    try {
      transport_.send(r, Message{Tag::Config, 0, 0, config});
    } catch (const Error& e) {
      log::error("config broadcast: ", e.what());
      undelivered.push_back(r);
    }
  }
  if (!undelivered.empty()) throw StartupError("configuration not delivered to ranks: " + join(undelivered));
}

}  // namespace cellgan::transport
