#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <vector>

#include "cellgan/transport.hpp"

namespace cellgan::transport {

enum class ContextKind { World, Local, Global };

struct CommContext {
  ContextKind kind = ContextKind::World;
  std::vector<int> members;  // ascending ranks

  bool contains(int rank) const;
};

/// A gather that could not complete: `missing` lists the ranks whose
/// contribution never arrived, `partial` holds everything that did.
class GatherAborted : public Error {
 public:
  GatherAborted(std::vector<int> missing, std::map<int, Bytes> partial, const std::string& why);
  const std::vector<int>& missing() const noexcept { return missing_; }
  const std::map<int, Bytes>& partial() const noexcept { return partial_; }

 private:
  std::vector<int> missing_;
  std::map<int, Bytes> partial_;
};

struct GatherOptions {
  /// Contributions from up to `staleness` epochs back are accepted without
  /// waiting for the current one.
  int staleness = 0;
  Clock::duration timeout = std::chrono::hours(24);
};

/// Context-aware wrapper over one Transport endpoint.
class Communicator {
 public:
  explicit Communicator(Transport& transport);

  int rank() const { return transport_.rank(); }
  int world_size() const { return transport_.world_size(); }
  Transport& transport() { return transport_; }

  CommContext world() const;
  /// Master plus every worker; used to collect final results.
  CommContext global() const;
  /// The given workers only; UsageError if it would include the master.
  CommContext local(std::vector<int> workers) const;

  /// RoutingError unless `to` is a context member, or the master for a
  /// control tag.
  void send(const CommContext& ctx, int to, Message msg);

  /// Exchanges `contribution` with every other member of `ctx` and returns
  /// all contributions keyed by rank, the caller's own included. Messages
  /// for later epochs are held for later calls. A contribution older than
  /// epoch - staleness raises ProtocolError naming the sender.
  std::map<int, Bytes> gather(const CommContext& ctx, const Bytes& contribution, int epoch,
                              const GatherOptions& opts = {});

  /// Master only: sends CONFIG to every worker in `ctx`. StartupError
  /// lists the ranks that could not be reached.
  void broadcast_config(const CommContext& ctx, const Bytes& config);

  /// Marks a rank as failed; pending and future gathers stop waiting for it.
  void mark_failed(int rank);
  std::set<int> failed() const;
  /// Makes pending and future gathers abort.
  void cancel();

 private:
  bool is_failed(int rank) const;

  Transport& transport_;
  mutable std::mutex mu_;
  std::set<int> failed_;
  std::atomic<bool> cancelled_{false};
  // Gather state is owned by the (single) gathering thread.
  std::map<int, std::map<int, Bytes>> pending_;  // sender -> epoch -> payload
  std::map<int, std::pair<int, Bytes>> latest_;  // sender -> (epoch, payload)
};

}  // namespace cellgan::transport
