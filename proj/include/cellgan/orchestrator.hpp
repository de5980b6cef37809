#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cellgan/comm.hpp"
#include "cellgan/config.hpp"
#include "cellgan/profiler.hpp"

namespace cellgan::orch {

using transport::Clock;
using transport::Millis;
using transport::WorkerState;

/// Seed of a cell's training-data stream; independent of placement.
std::uint64_t data_seed(std::uint64_t seed, const grid::CellCoord& cell);
/// The initial cell for `coord` as every runner builds it.
coevo::Cell build_cell(const config::RunConfig& cfg, const grid::CellCoord& coord);

struct HeartbeatConfig {
  Millis interval{2000};
  int misses = 3;  // consecutive missed acks before a rank is declared failed

  Millis timeout() const { return interval * misses; }
  void validate() const;
};

struct NodeInfo {
  std::string name;
  int cores = 1;
};

struct Placement {
  std::map<int, grid::CellCoord> assignments;  // worker rank -> cell
  std::map<int, std::string> nodes;            // rank -> node name (master included)
};

/// Cells in row-major order go to ranks 1..n; ranks are dealt round-robin
/// over nodes with free cores. The master occupies one core of the first
/// node. CapacityError names the deficit.
Placement compute_placement(const grid::GridSpec& grid, const std::vector<NodeInfo>& nodes);

/// Background liveness checker. Sends a heartbeat to every monitored rank
/// each interval and reports a rank as failed, once, when its last ack is
/// older than interval * misses.
class HeartbeatMonitor {
 public:
  using SendFn = std::function<void(int rank)>;
  using FailFn = std::function<void(int rank)>;

  HeartbeatMonitor(HeartbeatConfig cfg, std::vector<int> ranks, SendFn send, FailFn on_failure);
  ~HeartbeatMonitor();
  HeartbeatMonitor(const HeartbeatMonitor&) = delete;
  HeartbeatMonitor& operator=(const HeartbeatMonitor&) = delete;

  void start();
  void stop();
  /// Records a HEARTBEAT_ACK (or any other sign of life) from `rank`.
  void ack(int rank);
  /// Stops monitoring `rank` without reporting it.
  void remove(int rank);
  std::vector<int> failed() const;

 private:
  void loop();
  void declare_locked(int rank, std::vector<int>& out);

  HeartbeatConfig cfg_;
  SendFn send_;
  FailFn on_failure_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<int, Clock::time_point> last_ack_;
  std::vector<int> failed_;
  bool running_ = false;
  bool stop_ = false;
  std::thread thread_;
};

/// Everything a worker reports when it finishes.
struct CellResult {
  int rank = 0;
  grid::CellCoord coord;
  Bytes center_gen;
  Bytes center_disc;
  std::vector<grid::CellCoord> ensemble_coords;
  std::vector<Bytes> ensemble_gens;
  std::vector<double> mixture_weights;
  std::vector<double> gen_losses;   // per epoch
  std::vector<double> disc_losses;  // per epoch
  double center_gen_fitness = 0.0;
  double center_disc_fitness = 0.0;
  double learning_rate = 0.0;
  int epochs = 0;
  int degraded_epochs = 0;
  metrics::ProfileReport profile;

  bool operator==(const CellResult&) const = default;
};

/// FINAL_RESULT payload: u32 JSON length + JSON summary, then u32 blob
/// count and length-prefixed blobs (center gen, center disc, ensemble gens).
Bytes encode_cell_result(const CellResult& r);
CellResult decode_cell_result(std::span<const std::uint8_t> payload);

/// Copies the cell's centers, ensemble and final hyperparameters into `res`;
/// losses, profile and rank are left to the caller.
void fill_cell_result(CellResult& res, const coevo::Cell& cell);

/// Builds the ensemble a cell result describes.
coevo::Ensemble ensemble_from(const CellResult& r, const nn::MlpArch& gen_arch);

struct FinalReport {
  grid::GridSpec grid;
  std::vector<CellResult> cells;  // row-major, failed cells absent
  std::vector<grid::CellCoord> failed_cells;
  std::vector<double> scores;     // aligned with cells
  std::optional<coevo::Ensemble> best;
  std::optional<data::QualityScore> best_quality;  // synthetic datasets only
  metrics::MergedProfile profile;
  /// Routine totals compared against a baseline: the merged mean for
  /// parallel runs, the sum over cells for sequential runs.
  metrics::ProfileReport overall_profile;
  double wall_seconds = 0.0;
};

/// Scores every surviving cell's ensemble and picks the best: synthetic
/// data by mode coverage minus TVD, MNIST by negated generator fitness.
FinalReport finalize_report(const config::RunConfig& cfg, std::vector<CellResult> cells,
                            std::vector<grid::CellCoord> failed, double wall_seconds);

/// Exit status of a master run.
enum class RunStatus { Ok = 0, StartupFailure = 2, WorkerFailure = 3 };

struct MasterOptions {
  std::vector<NodeInfo> nodes;  // empty: one node with a core per rank
  /// Called once per failure event, on the master's main thread.
  std::function<void(int rank)> on_failure;
};

struct MasterOutcome {
  RunStatus status = RunStatus::Ok;
  std::optional<FinalReport> report;
  std::vector<int> failed_ranks;
  Placement placement;
  std::string error;
};

/// Master lifecycle: handshake, placement, config broadcast, RUN_TASK,
/// heartbeat monitoring, FINAL_RESULT collection, reduction, SHUTDOWN.
MasterOutcome master_run(transport::Transport& ep, const config::RunConfig& cfg, const MasterOptions& opts = {});

/// Records state transitions and rejects anything but
/// INACTIVE -> PROCESSING -> FINISHED (and -> FAILED from a live state).
class StateTrace {
 public:
  WorkerState current() const;
  /// ProtocolError on an illegal transition; the state is unchanged.
  void transition(WorkerState to);
  std::vector<WorkerState> history() const;

 private:
  mutable std::mutex mu_;
  std::vector<WorkerState> history_{WorkerState::Inactive};
};

/// Worker lifecycle. The control loop runs on the caller's thread and
/// answers GET_STATUS and HEARTBEAT at once; training runs on a second
/// thread that exchanges centers with its neighbors after every epoch.
class Worker {
 public:
  explicit Worker(transport::Transport& ep);
  ~Worker();
  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  /// Handshake, then handles control messages until SHUTDOWN or until the
  /// endpoint closes. Returns 0 on a clean shutdown.
  int run();
  /// Processes one control message. Throws ProtocolError for messages the
  /// current state does not accept.
  void handle(const transport::Message& msg);

  WorkerState state() const { return trace_.current(); }
  const StateTrace& trace() const { return trace_; }
  int epoch() const { return epoch_; }
  bool shutdown_requested() const { return shutdown_; }
  /// Blocks the control loop for `d` before its next message (fault tests).
  void inject_pause(Millis d);
  /// Gives up on the master after `d` without a message from it. Used by
  /// process workers, whose link cannot report the master's exit.
  void watch_master(Millis d) { master_timeout_ = d; }
  /// Waits for the training thread to end.
  void join_training();
  /// The finished cell result (after FINISHED).
  std::optional<CellResult> result() const;

 private:
  void train(grid::CellCoord coord);
  void report_status(int to);

  transport::Transport& ep_;
  transport::Communicator comm_;
  StateTrace trace_;
  std::optional<config::RunConfig> cfg_;
  std::atomic<int> epoch_{0};
  std::atomic<bool> shutdown_{false};
  std::atomic<long long> pause_ms_{0};
  std::optional<Millis> master_timeout_;
  std::thread trainer_;
  mutable std::mutex result_mu_;
  std::optional<CellResult> result_;
};

}  // namespace cellgan::orch
