#include "cellgan/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "cellgan/log.hpp"

namespace cellgan::run {

using metrics::Routine;

orch::FinalReport run_sequential(const config::RunConfig& cfg) {
  cfg.validate();
  const auto g = cfg.grid_spec();
  const auto tc = cfg.train_config();
  const auto gen_arch = cfg.generator_arch();
  const auto disc_arch = cfg.discriminator_arch();
  const auto start = transport::Clock::now();

  std::vector<coevo::Cell> cells;
  std::vector<std::unique_ptr<data::DataSource>> sources;
  std::vector<orch::CellResult> results(static_cast<std::size_t>(g.cells()));
  for (int rank = 1; rank <= g.cells(); ++rank) {
    const auto coord = grid::rank_to_coord(g, rank);
    cells.push_back(orch::build_cell(cfg, coord));
    sources.push_back(data::make_source(cfg.dataset_spec(), orch::data_seed(cfg.seed, coord)));
    results[static_cast<std::size_t>(rank - 1)].rank = rank;
  }
  std::vector<metrics::Profiler> profs(cells.size());

  std::vector<Bytes> shared(cells.size());
  for (int e = 1; e <= tc.iterations; ++e) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto stats = coevo::train_epoch(cells[i], *sources[i], tc, &profs[i]);
      results[i].gen_losses.push_back(stats.gen_loss);
      results[i].disc_losses.push_back(stats.disc_loss);
      results[i].degraded_epochs += stats.degraded;
      shared[i] = profs[i].section(Routine::Other, [&] {
        return transport::encode_center_exchange({cells[i].coord(), nn::serialize_params(cells[i].center_gen),
                                                  nn::serialize_params(cells[i].center_disc)});
      });
    }
    // In-memory exchange: every cell reads its neighbors' epoch-e centers.
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::vector<const Bytes*> got;
      profs[i].section(Routine::Gather, [&] {
        for (const auto& m : cells[i].hood.members)
          if (m != cells[i].coord()) got.push_back(&shared[static_cast<std::size_t>(grid::coord_to_rank(g, m) - 1)]);
      });
      profs[i].section(Routine::Other, [&] {
        for (const Bytes* b : got) {
          auto ce = transport::decode_center_exchange(*b);
          cells[i].absorb(ce.source, nn::deserialize_params(ce.generator, gen_arch),
                          nn::deserialize_params(ce.discriminator, disc_arch));
        }
      });
    }
  }

  metrics::ProfileReport total;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    orch::fill_cell_result(results[i], cells[i]);
    results[i].profile = profs[i].finish();
    for (std::size_t r = 0; r < metrics::kRoutineCount; ++r) total.seconds[r] += results[i].profile.seconds[r];
  }
  const double wall = std::chrono::duration<double>(transport::Clock::now() - start).count();
  total.wall = wall;
  auto report = orch::finalize_report(cfg, std::move(results), {}, wall);
  report.overall_profile = total;
  return report;
}

namespace {

ParallelResult from_outcome(orch::MasterOutcome&& o) {
  ParallelResult r;
  r.status = o.status;
  r.report = std::move(o.report);
  r.failed_ranks = std::move(o.failed_ranks);
  r.error = std::move(o.error);
  return r;
}

}  // namespace

ParallelResult run_parallel_inproc(const config::RunConfig& cfg, const InprocOptions& opts) {
  cfg.validate();
  const int n = cfg.grid_spec().cells();
  transport::InprocHub hub(n + 1);
  std::vector<std::unique_ptr<orch::Worker>> workers;
  std::vector<orch::Worker*> handles;
  for (int r = 1; r <= n; ++r) {
    workers.push_back(std::make_unique<orch::Worker>(hub.endpoint(r)));
    handles.push_back(workers.back().get());
  }
  std::vector<std::thread> threads;
  for (auto& w : workers) threads.emplace_back([&w] { w->run(); });
  std::thread side;
  if (opts.side_task) side = std::thread([&] { opts.side_task(hub, handles); });

  auto outcome = orch::master_run(hub.endpoint(0), cfg, opts.master);
  if (side.joinable()) side.join();
  // Workers exit on SHUTDOWN; closing their endpoints covers aborted runs.
  if (outcome.status != orch::RunStatus::Ok)
    for (int r = 1; r <= n; ++r) hub.kill(r);
  for (auto& t : threads) t.join();
  return from_outcome(std::move(outcome));
}

ParallelResult run_tcp_master(const config::RunConfig& cfg) {
  cfg.validate();
  transport::TcpOptions o;
  o.rank = 0;
  o.world_size = cfg.grid_spec().cells() + 1;
  o.base_port = cfg.base_port;
  o.hosts = cfg.hosts;
  try {
    transport::TcpTransport ep(o);
    auto outcome = orch::master_run(ep, cfg);
    // Give SHUTDOWN frames time to leave before the sockets close.
    std::this_thread::sleep_for(transport::Millis(100));
    ep.close();
    return from_outcome(std::move(outcome));
  } catch (const StartupError& e) {
    ParallelResult r;
    r.status = orch::RunStatus::StartupFailure;
    r.error = e.what();
    return r;
  }
}

int run_tcp_worker(const config::RunConfig& cfg, int rank) {
  cfg.validate();
  transport::TcpOptions o;
  o.rank = rank;
  o.world_size = cfg.grid_spec().cells() + 1;
  o.base_port = cfg.base_port;
  o.hosts = cfg.hosts;
  if (rank < 1 || rank >= o.world_size) throw UsageError("worker rank must lie in [1, " + std::to_string(o.world_size - 1) + "]");
  o.connect_timeout = transport::Millis(cfg.handshake_timeout_ms);
  transport::TcpTransport ep(o);
  orch::Worker w(ep);
  w.watch_master(transport::Millis(cfg.handshake_timeout_ms) +
                 transport::Millis(cfg.heartbeat_interval_ms) * cfg.heartbeat_misses);
  const int code = w.run();
  ep.close();
  return code;
}

nlohmann::json metrics_json(const config::RunConfig& cfg, const orch::FinalReport& report,
                            const metrics::ProfileReport* baseline) {
  using nlohmann::json;
  json j;
  j["config"] = config::to_json(cfg);
  j["grid"] = grid::to_string(report.grid);
  j["wall_seconds"] = report.wall_seconds;
  auto& cells = j["per_cell"] = json::array();
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    const auto& c = report.cells[i];
    cells.push_back({
        {"rank", c.rank},
        {"row", c.coord.row},
        {"col", c.coord.col},
        {"score", i < report.scores.size() ? report.scores[i] : 0.0},
        {"center_gen_fitness", c.center_gen_fitness},
        {"center_disc_fitness", c.center_disc_fitness},
        {"learning_rate", c.learning_rate},
        {"epochs", c.epochs},
        {"degraded_epochs", c.degraded_epochs},
        {"mixture_weights", c.mixture_weights},
        {"gen_losses", c.gen_losses},
        {"disc_losses", c.disc_losses},
        {"profile", c.profile},
    });
  }
  auto& failed = j["failed_cells"] = json::array();
  for (const auto& f : report.failed_cells) failed.push_back(grid::to_string(f));
  if (report.best) {
    j["best_cell"] = {{"row", report.best->coord.row}, {"col", report.best->coord.col}, {"score", report.best->score}};
    if (report.best_quality) {
      const auto& q = *report.best_quality;
      j["best_cell"]["quality"] = {{"modes_covered", q.modes_covered},
                                   {"total_modes", q.total_modes},
                                   {"high_quality_ratio", q.high_quality_ratio},
                                   {"tvd", q.tvd}};
    }
  } else {
    j["best_cell"] = nullptr;
  }
  j["overall_profile"] = report.overall_profile;
  j["profile_max"] = report.profile.max;
  if (baseline) j["speedup"] = metrics::speedup(*baseline, report.overall_profile);
  return j;
}

std::string profile_table(const metrics::ProfileReport& profile, const metrics::ProfileReport* baseline) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(16) << "routine" << std::right << std::setw(12) << "seconds";
  if (baseline) os << std::setw(12) << "baseline" << std::setw(10) << "accel%" << std::setw(10) << "speedup";
  os << "\n";
  auto row = [&](const std::string& name, double t, double b) {
    os << std::left << std::setw(16) << name << std::right << std::setw(12) << t;
    if (baseline) {
      os << std::setw(12) << b;
      if (t > 0.0) {
        os << std::setw(10) << std::setprecision(1) << metrics::acceleration_percent(b, t) << std::setw(10)
           << std::setprecision(2) << metrics::speedup_ratio(b, t) << std::setprecision(3);
      } else {
        os << std::setw(10) << "-" << std::setw(10) << "-";
      }
    }
    os << "\n";
  };
  for (auto r : metrics::kProfiledRoutines)
    row(std::string(metrics::routine_name(r)), profile[r], baseline ? (*baseline)[r] : 0.0);
  row("other", profile[Routine::Other], baseline ? (*baseline)[Routine::Other] : 0.0);
  row("overall", profile.wall, baseline ? baseline->wall : 0.0);
  return os.str();
}

void write_outputs(const config::RunConfig& cfg, const orch::FinalReport& report,
                   const metrics::ProfileReport* baseline) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  open("metrics.json") << metrics_json(cfg, report, baseline).dump(2) << "\n";
  open("profile.txt") << profile_table(report.overall_profile, baseline);
  if (report.best && cfg.dataset_spec().synthetic()) {
    const auto samples = coevo::sample_ensemble(*report.best, static_cast<std::size_t>(cfg.eval_samples),
                                                splitmix64(cfg.seed ^ 0x5a3bULL));
    auto f = open("samples.csv");
    f << "x,y\n" << std::setprecision(9);
    for (std::size_t i = 0; i < samples.rows; ++i) f << samples(i, 0) << "," << samples(i, 1) << "\n";
  }
}

metrics::ProfileReport load_baseline_profile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read baseline profile " + path);
  try {
    const auto j = nlohmann::json::parse(f);
    return j.at("overall_profile").get<metrics::ProfileReport>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed baseline profile " + path + ": " + e.what());
  }
}

}  // namespace cellgan::run
