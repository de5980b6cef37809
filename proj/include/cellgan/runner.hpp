#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cellgan/config.hpp"
#include "cellgan/orchestrator.hpp"

namespace cellgan::run {

/// All cells trained round-robin in one thread with in-memory exchanges
/// after every epoch. Deterministic for a fixed seed.
orch::FinalReport run_sequential(const config::RunConfig& cfg);

struct ParallelResult {
  orch::RunStatus status = orch::RunStatus::Ok;
  std::optional<orch::FinalReport> report;
  std::vector<int> failed_ranks;
  std::string error;
};

struct InprocOptions {
  /// Runs on its own thread once every worker has started; used to inject
  /// faults. Receives the hub and the workers indexed by rank - 1.
  std::function<void(transport::InprocHub&, const std::vector<orch::Worker*>&)> side_task;
  orch::MasterOptions master;
};

/// Master and one worker per cell as threads of this process.
ParallelResult run_parallel_inproc(const config::RunConfig& cfg, const InprocOptions& opts = {});

/// TCP master on base_port; workers are separate processes.
ParallelResult run_tcp_master(const config::RunConfig& cfg);
/// TCP worker for `rank`; returns the worker's exit code.
int run_tcp_worker(const config::RunConfig& cfg, int rank);

/// The run document: config, per-cell results, best cell, profiles and,
/// when a baseline is given, the speedup table.
nlohmann::json metrics_json(const config::RunConfig& cfg, const orch::FinalReport& report,
                            const metrics::ProfileReport* baseline = nullptr);

/// Human-readable routine table, with speedup columns when a baseline is given.
std::string profile_table(const metrics::ProfileReport& profile, const metrics::ProfileReport* baseline = nullptr);

/// Writes metrics.json, profile.txt and, for synthetic data, samples.csv
/// (points drawn from the best ensemble) into cfg.output_dir.
void write_outputs(const config::RunConfig& cfg, const orch::FinalReport& report,
                   const metrics::ProfileReport* baseline = nullptr);

/// Reads "overall_profile" from a metrics.json written by an earlier run.
metrics::ProfileReport load_baseline_profile(const std::string& path);

}  // namespace cellgan::run
