#include "doctest.h"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "cellgan/runner.hpp"

using namespace cellgan;

namespace {

config::RunConfig small(const std::string& grid, int iterations) {
  config::RunConfig c;
  c.grid = grid;
  c.iterations = iterations;
  c.batch_size = 16;
  c.batches_per_epoch = 3;
  c.hidden_layers = {8};
  c.seed = 2024;
  c.eval_samples = 300;
  c.deterministic = true;
  c.heartbeat_interval_ms = 500;
  c.handshake_timeout_ms = 10000;
  return c;
}

int port_base() {
  static int next = 30000 + (static_cast<int>(getpid()) % 300) * 60;
  const int p = next;
  next += 20;
  return p;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cellgan_" + std::to_string(getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  return p;
}

void check_same_centers(const orch::FinalReport& a, const orch::FinalReport& b) {
  REQUIRE(a.cells.size() == b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(a.cells[i].coord == b.cells[i].coord);
    CHECK(a.cells[i].center_gen == b.cells[i].center_gen);
    CHECK(a.cells[i].center_disc == b.cells[i].center_disc);
    CHECK(a.cells[i].ensemble_gens == b.cells[i].ensemble_gens);
    CHECK(a.cells[i].mixture_weights == b.cells[i].mixture_weights);
    CHECK(a.cells[i].gen_losses == b.cells[i].gen_losses);
  }
  CHECK(a.scores == b.scores);
}

}  // namespace

TEST_CASE("sequential 1x1 run trains a single pair") {
  const auto rep = run::run_sequential(small("1x1", 3));
  REQUIRE(rep.cells.size() == 1);
  CHECK(rep.cells[0].epochs == 3);
  CHECK(rep.cells[0].gen_losses.size() == 3);
  CHECK(rep.cells[0].ensemble_coords == std::vector<grid::CellCoord>{{0, 0}});
  CHECK(rep.cells[0].mixture_weights == std::vector<double>{1.0});
  REQUIRE(rep.best);
  REQUIRE(rep.best_quality);
  CHECK(rep.best_quality->total_modes == 8);
}

TEST_CASE("sequential runs are deterministic for a fixed seed") {
  const auto cfg = small("2x2", 3);
  const auto a = run::run_sequential(cfg);
  const auto b = run::run_sequential(cfg);
  check_same_centers(a, b);
  auto other = cfg;
  other.seed = 2025;
  const auto c = run::run_sequential(other);
  CHECK(c.cells[0].center_gen != a.cells[0].center_gen);
}

TEST_CASE("deterministic in-process parallel run equals the sequential run") {
  for (const char* g : {"1x1", "2x2", "1x3", "3x3"}) {
    CAPTURE(g);
    const auto cfg = small(g, 3);
    const auto seq = run::run_sequential(cfg);
    const auto par = run::run_parallel_inproc(cfg);
    REQUIRE(par.status == orch::RunStatus::Ok);
    REQUIRE(par.report);
    check_same_centers(seq, *par.report);
  }
}

TEST_CASE("asynchronous mode completes with every cell reporting") {
  auto cfg = small("2x2", 5);
  cfg.deterministic = false;
  const auto par = run::run_parallel_inproc(cfg);
  REQUIRE(par.status == orch::RunStatus::Ok);
  REQUIRE(par.report);
  CHECK(par.report->cells.size() == 4);
  for (const auto& c : par.report->cells) CHECK(c.epochs == 5);
}

TEST_CASE("round-robin losses run end to end") {
  auto cfg = small("1x3", 2);
  cfg.loss_mode = config::LossMode::MustangsRoundRobin;
  const auto seq = run::run_sequential(cfg);
  const auto par = run::run_parallel_inproc(cfg);
  REQUIRE(par.report);
  check_same_centers(seq, *par.report);
}

TEST_CASE("outputs: metrics JSON, profile report and samples") {
  auto cfg = small("2x2", 2);
  cfg.output_dir = scratch("out").string();
  const auto rep = run::run_sequential(cfg);
  run::write_outputs(cfg, rep);
  const std::filesystem::path dir(cfg.output_dir);
  std::ifstream mf(dir / "metrics.json");
  REQUIRE(mf);
  const auto j = nlohmann::json::parse(mf);
  for (const char* key : {"config", "grid", "wall_seconds", "per_cell", "failed_cells", "best_cell", "overall_profile",
                          "profile_max"})
    CHECK(j.contains(key));
  CHECK_FALSE(j.contains("speedup"));
  CHECK(j["grid"] == "2x2");
  CHECK(j["per_cell"].size() == 4);
  CHECK(j["best_cell"].contains("quality"));
  CHECK(config::from_json(j["config"]).grid == "2x2");

  std::ifstream sf(dir / "samples.csv");
  std::string line;
  std::getline(sf, line);
  CHECK(line == "x,y");
  int rows = 0;
  while (std::getline(sf, line)) ++rows;
  CHECK(rows == cfg.eval_samples);
  CHECK(std::filesystem::exists(dir / "profile.txt"));

  // A second run can be compared against the first as a baseline.
  const auto base = run::load_baseline_profile((dir / "metrics.json").string());
  CHECK(base == rep.overall_profile);
  const auto j2 = run::metrics_json(cfg, rep, &base);
  REQUIRE(j2.contains("speedup"));
  const auto table = run::profile_table(rep.overall_profile, &base);
  CHECK(table.find("speedup") != std::string::npos);
  CHECK(table.find("overall") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("baseline loading reports unreadable files") {
  CHECK_THROWS_AS(run::load_baseline_profile("/nonexistent/metrics.json"), IoError);
  const auto p = scratch("bad.json");
  std::ofstream(p) << "{}";
  CHECK_THROWS_AS(run::load_baseline_profile(p.string()), IoError);
  std::filesystem::remove(p);
}

TEST_CASE("sequential profile decomposes into routines within the wall time") {
  const auto rep = run::run_sequential(small("2x2", 4));
  const auto& p = rep.overall_profile;
  CHECK(p.routine_sum() <= p.wall);
  CHECK(p[metrics::Routine::Gather] >= 0.0);
  CHECK(p.wall == rep.wall_seconds);
}

TEST_CASE("tcp master reports a startup error when a worker is missing") {
  auto cfg = small("1x2", 1);
  cfg.transport = config::TransportKind::Tcp;
  cfg.base_port = port_base();
  cfg.handshake_timeout_ms = 500;
  std::thread worker([&] { run::run_tcp_worker(cfg, 1); });
  const auto res = run::run_tcp_master(cfg);
  worker.join();
  CHECK(res.status == orch::RunStatus::StartupFailure);
  CHECK(static_cast<int>(res.status) == 2);
  CHECK(res.error.find("2") != std::string::npos);
}

TEST_CASE("tcp run matches the in-process run byte for byte") {
  auto cfg = small("3x3", 3);
  cfg.transport = config::TransportKind::Tcp;
  cfg.base_port = port_base();
  std::vector<std::thread> workers;
  std::vector<int> codes(9, -1);
  for (int r = 1; r <= 9; ++r) workers.emplace_back([&, r] { codes[r - 1] = run::run_tcp_worker(cfg, r); });
  const auto tcp = run::run_tcp_master(cfg);
  for (auto& t : workers) t.join();
  REQUIRE(tcp.status == orch::RunStatus::Ok);
  REQUIRE(tcp.report);
  CHECK(codes == std::vector<int>(9, 0));
  const auto inproc = run::run_parallel_inproc(cfg);
  REQUIRE(inproc.report);
  check_same_centers(*tcp.report, *inproc.report);
}
