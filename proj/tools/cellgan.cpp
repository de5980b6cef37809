// Command-line front end: sequential baseline, in-process parallel runs and
// TCP master/worker processes.

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cellgan/log.hpp"
#include "cellgan/runner.hpp"

using namespace cellgan;

namespace {

constexpr int kExitConfig = 2;

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void print_summary(const orch::FinalReport& rep, const metrics::ProfileReport* baseline) {
  std::cout << "grid " << grid::to_string(rep.grid) << ", " << rep.cells.size() << " cells finished";
  if (!rep.failed_cells.empty()) {
    std::cout << ", failed:";
    for (const auto& c : rep.failed_cells) std::cout << " " << grid::to_string(c);
  }
  std::cout << "\n";
  if (rep.best) std::cout << "best cell " << grid::to_string(rep.best->coord) << " score " << rep.best->score << "\n";
  if (rep.best_quality)
    std::cout << "modes covered " << rep.best_quality->modes_covered << "/" << rep.best_quality->total_modes
              << ", high-quality ratio " << rep.best_quality->high_quality_ratio << ", tvd " << rep.best_quality->tvd
              << "\n";
  std::cout << run::profile_table(rep.overall_profile, baseline);
}

int finish(const config::RunConfig& cfg, const run::ParallelResult& res, const metrics::ProfileReport* baseline) {
  if (res.status != orch::RunStatus::Ok) {
    std::cerr << "run failed: " << res.error << "\n";
    return static_cast<int>(res.status);
  }
  run::write_outputs(cfg, *res.report, baseline);
  print_summary(*res.report, baseline);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially distributed coevolutionary GAN training"};

  std::string config_path, role = "auto", baseline_path, log_level;
  int rank = -1;
  bool sequential = false;
  nlohmann::json flags = nlohmann::json::object();

  // Flags are collected as JSON and applied over the config file.
  auto add = [&](const std::string& name, const std::string& key, auto example, const std::string& help) {
    using T = decltype(example);
    return app.add_option_function<T>(name, [&flags, key](const T& v) { flags[key] = v; }, help);
  };

  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  add("--grid", "grid", std::string{}, "grid size RxC");
  add("--iterations", "iterations", int{}, "training epochs per cell");
  add("--batch-size", "batch_size", int{}, "samples per batch");
  add("--batches-per-epoch", "batches_per_epoch", int{}, "training batches per epoch (0: sample budget / batch size)");
  add("--learning-rate", "learning_rate", double{}, "initial Adam learning rate");
  add("--dataset", "dataset", std::string{}, "ring | grid25 | mnist");
  add("--mnist-images", "mnist_images", std::string{}, "MNIST image file (IDX)");
  add("--mnist-labels", "mnist_labels", std::string{}, "MNIST label file (IDX)");
  add("--loss-mode", "loss_mode", std::string{}, "uniform-bce | mustangs-roundrobin");
  add("--transport", "transport", std::string{}, "inproc | tcp");
  add("--base-port", "base_port", int{}, "TCP port of rank 0; rank r listens on base + r");
  add("--seed", "seed", std::uint64_t{}, "run seed");
  add("--output", "output_dir", std::string{}, "output directory");
  add("--failure-policy", "failure_policy", std::string{}, "continue | abort");
  add("--heartbeat-interval-ms", "heartbeat_interval_ms", int{}, "heartbeat period");
  add("--heartbeat-misses", "heartbeat_misses", int{}, "missed acks before a worker is declared failed");
  add("--handshake-timeout-ms", "handshake_timeout_ms", int{}, "time allowed for workers to connect");
  add("--eval-samples", "eval_samples", int{}, "samples drawn when scoring ensembles");
  app.add_option_function<std::vector<std::string>>(
      "--host", [&flags](const std::vector<std::string>& h) { flags["hosts"] = h; },
      "host of every rank (once) or of each rank in order");
  app.add_flag_callback("--deterministic", [&flags] { flags["deterministic"] = true; },
                        "serialize epoch barriers (bit-exact with the sequential run)");
  app.add_option("--role", role, "master | worker | auto")->check(CLI::IsMember({"master", "worker", "auto"}));
  app.add_option("--rank", rank, "worker rank (role worker)");
  app.add_flag("--sequential", sequential, "single-thread baseline run");
  app.add_option("--baseline-profile", baseline_path, "metrics.json of a sequential run, for the speedup table")
      ->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level, "debug | info | warn | error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (log_level == "debug") log::set_threshold(log::Level::Debug);
  if (log_level == "info") log::set_threshold(log::Level::Info);
  if (log_level == "warn") log::set_threshold(log::Level::Warn);
  if (log_level == "error") log::set_threshold(log::Level::Error);

  config::RunConfig cfg;
  std::optional<metrics::ProfileReport> baseline;
  try {
    cfg = config::load_config(config_path.empty() ? std::string() : read_file(config_path), flags);
    if (!baseline_path.empty()) baseline = run::load_baseline_profile(baseline_path);
  } catch (const Error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
  const auto* base = baseline ? &*baseline : nullptr;

  try {
    if (sequential) {
      const auto rep = run::run_sequential(cfg);
      run::write_outputs(cfg, rep, base);
      print_summary(rep, base);
      return 0;
    }
    if (role == "worker") {
      if (cfg.transport != config::TransportKind::Tcp) {
        std::cerr << "role worker requires --transport tcp\n";
        return kExitConfig;
      }
      return run::run_tcp_worker(cfg, rank);
    }
    if (role == "master") {
      if (cfg.transport != config::TransportKind::Tcp) {
        std::cerr << "role master requires --transport tcp\n";
        return kExitConfig;
      }
      return finish(cfg, run::run_tcp_master(cfg), base);
    }
    if (cfg.transport == config::TransportKind::Inproc) return finish(cfg, run::run_parallel_inproc(cfg), base);
    // auto over tcp: every role as a thread of this process, over loopback.
    std::vector<std::thread> workers;
    for (int r = 1; r <= cfg.grid_spec().cells(); ++r) workers.emplace_back([&cfg, r] { run::run_tcp_worker(cfg, r); });
    const auto res = run::run_tcp_master(cfg);
    for (auto& t : workers) t.join();
    return finish(cfg, res, base);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StartupError& e) {
    std::cerr << "startup error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
