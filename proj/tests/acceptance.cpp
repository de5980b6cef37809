// Acceptance harness: one PASS / FAIL / N/A line per criterion. Exits
// non-zero when any criterion fails.

#include <sched.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cellgan/idx.hpp"
#include "cellgan/log.hpp"
#include "cellgan/runner.hpp"
#include "gradient_check.hpp"
#include "oracles.hpp"

using namespace cellgan;
using transport::Clock;
using transport::Message;
using transport::Millis;
using transport::Tag;

namespace {

// Tolerances and limits, pinned.
constexpr double kTopologySeconds = 1.0;
constexpr double kPropagationSeconds = 5.0;
constexpr double kGradientTolerance = 1e-4;
constexpr double kAdamTolerance = 1e-9;
constexpr double kGradientSeconds = 10.0;
constexpr double kProtocolSeconds = 30.0;
constexpr double kHeartbeatSlackSeconds = 0.5;
constexpr double kBackendSeconds = 120.0;
constexpr double kModeCollapseSeconds = 15 * 60.0;
constexpr int kModeCollapseSeeds = 5;
constexpr int kModesRequired = 6;
constexpr int kSeedsRequired = 3;
constexpr int kScalingThreads = 5;
constexpr double kScalingSpeedup = 2.0;
constexpr double kSpeedupTolerance = 0.01;
constexpr double kAccelerationTolerance = 0.1;

enum class Verdict { Pass, Fail, NotApplicable };

struct Line {
  Verdict verdict = Verdict::Pass;
  std::ostringstream detail;
  void fail(const std::string& why) {
    verdict = Verdict::Fail;
    detail << " [" << why << "]";
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void check_time(Line& line, Clock::time_point t0, double limit) {
  const double s = seconds_since(t0);
  line.detail << std::fixed << std::setprecision(2) << " (" << s << "s, limit " << limit << "s)";
  if (s > limit) line.fail("over time");
}

// ------------------------------------------------------------ criteria

void topology(Line& line) {
  const auto t0 = Clock::now();
  int cells = 0, mismatches = 0;
  for (int rows = 1; rows <= 6; ++rows)
    for (int cols = 1; cols <= 6; ++cols) {
      const grid::GridSpec g{rows, cols};
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          ++cells;
          const grid::CellCoord cell{r, c};
          const auto brute = oracle::brute_neighborhood(rows, cols, cell);
          const auto hood = grid::neighborhood(g, cell).members;
          std::set<grid::CellCoord> brute_overlap;
          for (int r2 = 0; r2 < rows; ++r2)
            for (int c2 = 0; c2 < cols; ++c2)
              if (oracle::brute_neighborhood(rows, cols, {r2, c2}).count(cell)) brute_overlap.insert({r2, c2});
          const auto ov = grid::overlap_neighbors(g, cell);
          const bool ok = std::set<grid::CellCoord>(hood.begin(), hood.end()) == brute &&
                          hood.size() == brute.size() && hood.front() == cell &&
                          std::set<grid::CellCoord>(ov.begin(), ov.end()) == brute_overlap &&
                          grid::coord_to_rank(g, cell) == r * cols + c + 1 &&
                          grid::rank_to_coord(g, r * cols + c + 1) == cell;
          if (!ok) ++mismatches;
        }
    }
  line.detail << cells << " cells over 36 grids, " << mismatches << " mismatches";
  if (mismatches) line.fail("mismatch");
  check_time(line, t0, kTopologySeconds);
}

float marker_of(const nn::MlpParams& p) { return p.layer(p.layer_count() - 1).biases[0]; }

// Rounds until every center carries the marker planted at (0,0); -1 when
// the per-round frontier deviates from the torus distance.
int propagation_rounds(const grid::GridSpec& g) {
  const auto gen_arch = nn::MlpArch::make(2, {4}, 2, nn::Activation::Linear);
  const auto disc_arch = nn::MlpArch::make(2, {4}, 1, nn::Activation::Sigmoid);
  coevo::TrainConfig cfg;
  cfg.seed = 99;
  std::vector<coevo::Cell> cells;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      cells.push_back(coevo::make_cell(g, {r, c}, gen_arch, disc_arch, loss::LossKind::Bce, cfg));
      auto& b = cells.back().center_gen.mutable_layer(cells.back().center_gen.layer_count() - 1).biases;
      b[0] = (r == 0 && c == 0) ? 1.0f : 0.0f;
    }
  coevo::EpochHooks hooks;
  hooks.train = false;
  hooks.gen_fitness = [](const nn::MlpParams& p) { return -static_cast<double>(marker_of(p)); };
  hooks.disc_fitness = [](const nn::MlpParams&) { return 0.0; };
  data::SyntheticSource src(data::DatasetSpec::ring2d(), 1);

  for (int round = 1; round <= g.rows + g.cols; ++round) {
    std::vector<std::pair<nn::MlpParams, nn::MlpParams>> centers;
    for (const auto& c : cells) centers.emplace_back(c.center_gen, c.center_disc);
    for (auto& c : cells)
      for (const auto& m : c.hood.members)
        if (m != c.coord()) {
          const auto& src_pair = centers[static_cast<std::size_t>(grid::coord_to_rank(g, m) - 1)];
          c.absorb(m, src_pair.first, src_pair.second);
        }
    for (auto& c : cells) coevo::train_epoch(c, src, cfg, nullptr, hooks);
    bool all = true;
    for (const auto& c : cells) {
      const bool marked = marker_of(c.center_gen) == 1.0f;
      if (marked != (oracle::torus_distance(g.rows, g.cols, {0, 0}, c.coord()) <= round)) return -1;
      all = all && marked;
    }
    if (all) return round;
  }
  return -1;
}

void propagation(Line& line) {
  const auto t0 = Clock::now();
  const int r44 = propagation_rounds({4, 4});
  line.detail << "4x4 filled in " << r44 << " rounds";
  if (r44 != 4) line.fail("4x4 expected 4 rounds");
  int bad = 0;
  for (int rows = 1; rows <= 6; ++rows)
    for (int cols = 1; cols <= 6; ++cols) {
      const int rounds = propagation_rounds({rows, cols});
      // A 1x1 grid is filled before any exchange; the loop reports round 1.
      const int bound = std::max(1, rows / 2 + cols / 2);
      if (rounds < 0 || rounds > bound) ++bad;
    }
  line.detail << "; grids within floor(R/2)+floor(C/2): " << 36 - bad << "/36";
  if (bad) line.fail("bound exceeded or frontier mismatch");
  check_time(line, t0, kPropagationSeconds);
}

void gradients(Line& line) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) worst = std::max(worst, oracle::gradient_check(rng));
  line.detail << std::scientific << std::setprecision(2) << "worst FD relative error " << worst;
  if (!(worst < kGradientTolerance)) line.fail("gradient tolerance");

  nn::MlpParams p(nn::MlpArch::make(1, {}, 1, nn::Activation::Linear));
  p.mutable_layer(0).weights[0] = 0.0f;
  nn::AdamState s(p, 0.0002);
  auto g = nn::zero_gradients(p);
  g[0].weights[0] = 1.0f;
  s.step(p, g);
  oracle::ScalarAdam ref{0.0002};
  const double err = std::abs(static_cast<double>(p.layer(0).weights[0]) - ref.step(0.0, 1.0));
  line.detail << "; Adam first step error " << err;
  if (!(err < kAdamTolerance)) line.fail("Adam step");
  line.detail << std::defaultfloat;
  check_time(line, t0, kGradientSeconds);
}

config::RunConfig small_run(const std::string& grid, int iterations) {
  config::RunConfig c;
  c.grid = grid;
  c.iterations = iterations;
  c.batch_size = 16;
  c.batches_per_epoch = 2;
  c.hidden_layers = {8};
  c.seed = 7;
  c.eval_samples = 200;
  c.deterministic = true;
  c.handshake_timeout_ms = 10000;
  return c;
}

void protocol(Line& line) {
  const auto t0 = Clock::now();
  using S = transport::WorkerState;

  // Exhaustive transition table plus a real worker's trace.
  const std::set<std::pair<S, S>> legal{
      {S::Inactive, S::Processing}, {S::Processing, S::Finished}, {S::Inactive, S::Failed}, {S::Processing, S::Failed}};
  int table_errors = 0;
  for (S from : {S::Inactive, S::Processing, S::Finished, S::Failed})
    for (S to : {S::Inactive, S::Processing, S::Finished, S::Failed}) {
      orch::StateTrace t;
      bool reached = true;
      if (from == S::Processing || from == S::Finished) t.transition(S::Processing);
      if (from == S::Finished) t.transition(S::Finished);
      if (from == S::Failed) t.transition(S::Failed);
      bool accepted = true;
      try {
        t.transition(to);
      } catch (const ProtocolError&) {
        accepted = false;
      }
      if (reached && accepted != (legal.count({from, to}) == 1)) ++table_errors;
    }
  {
    transport::InprocHub hub(2);
    orch::Worker w(hub.endpoint(1));
    std::thread th([&] { w.run(); });
    auto& master = hub.endpoint(0);
    master.send(1, Message{Tag::Config, 0, 0, to_bytes(config::serialize_config(small_run("1x1", 2)))});
    master.send(1, Message{Tag::RunTask, 0, 0, transport::encode_coord({0, 0})});
    master.send(1, Message{Tag::RunTask, 0, 0, transport::encode_coord({0, 0})});  // rejected
    const auto deadline = Clock::now() + Millis(10000);
    while (w.state() != S::Finished && Clock::now() < deadline) std::this_thread::sleep_for(Millis(5));
    master.send(1, Message{Tag::Shutdown, 0, 0, {}});
    th.join();
    if (w.trace().history() != std::vector<S>{S::Inactive, S::Processing, S::Finished}) ++table_errors;
  }
  line.detail << "trace errors " << table_errors;
  if (table_errors) line.fail("state machine");

  // Heartbeat fault injection: one paused worker, abort on first failure.
  {
    auto cfg = small_run("2x2", 1000000);
    cfg.heartbeat_interval_ms = 200;
    cfg.heartbeat_misses = 3;
    cfg.failure_policy = config::FailurePolicy::Abort;
    std::mutex mu;
    std::vector<std::pair<int, Clock::time_point>> events;
    Clock::time_point paused_at;
    run::InprocOptions opts;
    opts.master.on_failure = [&](int r) {
      std::lock_guard lock(mu);
      events.emplace_back(r, Clock::now());
    };
    opts.side_task = [&](transport::InprocHub&, const std::vector<orch::Worker*>& workers) {
      while (workers[1]->epoch() < 1) std::this_thread::sleep_for(Millis(1));
      {
        std::lock_guard lock(mu);
        paused_at = Clock::now();
      }
      workers[1]->inject_pause(Millis(4000));
    };
    run::run_parallel_inproc(cfg, opts);
    const double bound = cfg.heartbeat_interval_ms * (cfg.heartbeat_misses + 1) / 1000.0 + kHeartbeatSlackSeconds;
    if (events.size() != 1 || events[0].first != 2) {
      line.fail("expected exactly one failure event for rank 2, got " + std::to_string(events.size()));
    } else {
      const double latency = std::chrono::duration<double>(events[0].second - paused_at).count();
      line.detail << std::fixed << std::setprecision(3) << "; failure latency " << latency << "s (bound " << bound
                  << "s)";
      if (latency > bound) line.fail("heartbeat latency");
    }
  }

  // GET_STATUS while the worker's first gather waits on an absent peer.
  {
    auto cfg = small_run("1x2", 5);
    transport::InprocHub hub(3);
    auto& master = hub.endpoint(0);
    orch::Worker w(hub.endpoint(1));
    std::thread th([&] { w.run(); });
    master.recv(Millis(2000));  // handshake
    master.send(1, Message{Tag::Config, 0, 0, to_bytes(config::serialize_config(cfg))});
    master.send(1, Message{Tag::RunTask, 0, 0, transport::encode_coord({0, 0})});
    while (w.epoch() < 1) std::this_thread::sleep_for(Millis(1));
    std::this_thread::sleep_for(Millis(50));
    double worst = 0.0;
    bool answered = true;
    for (int i = 0; i < 10 && answered; ++i) {
      const auto sent = Clock::now();
      master.send(1, Message{Tag::GetStatus, 0, 0, {}});
      auto m = master.recv(Millis(cfg.heartbeat_interval_ms), transport::Plane::Control);
      answered = m && m->tag == Tag::StatusReport;
      worst = std::max(worst, seconds_since(sent));
    }
    master.send(1, Message{Tag::Shutdown, 0, 0, {}});
    th.join();
    line.detail << "; GET_STATUS worst round trip " << worst * 1000 << "ms";
    if (!answered || worst * 1000 >= cfg.heartbeat_interval_ms) line.fail("status latency");
  }
  line.detail << std::defaultfloat;
  check_time(line, t0, kProtocolSeconds);
}

int port_base() { return 33000 + static_cast<int>(getpid() % 200) * 100; }

bool same_centers(const orch::FinalReport& a, const orch::FinalReport& b) {
  if (a.cells.size() != b.cells.size()) return false;
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    if (a.cells[i].coord != b.cells[i].coord || a.cells[i].center_gen != b.cells[i].center_gen ||
        a.cells[i].center_disc != b.cells[i].center_disc)
      return false;
  return true;
}

void backends(Line& line) {
  const auto t0 = Clock::now();
  auto cfg = small_run("3x3", 3);
  cfg.base_port = port_base();
  const auto inproc = run::run_parallel_inproc(cfg);
  std::vector<std::thread> workers;
  for (int r = 1; r <= 9; ++r) workers.emplace_back([&cfg, r] { run::run_tcp_worker(cfg, r); });
  const auto tcp = run::run_tcp_master(cfg);
  for (auto& t : workers) t.join();
  if (!inproc.report || !tcp.report) {
    line.fail("run failed: " + inproc.error + tcp.error);
  } else {
    const bool same = same_centers(*inproc.report, *tcp.report);
    line.detail << "3x3, 3 epochs: per-cell centers " << (same ? "byte-identical" : "differ");
    if (!same) line.fail("centers differ");
  }
  check_time(line, t0, kBackendSeconds);
}

// The experiment's free knobs (everything the criterion does not fix).
config::RunConfig ring_run(const std::string& grid, std::uint64_t seed) {
  config::RunConfig c;
  c.grid = grid;
  c.dataset = "ring";
  c.iterations = 200;
  c.hidden_layers = {32, 32};
  c.latent_dim = 2;
  c.seed = seed;
  c.deterministic = true;
  c.learning_rate = 0.005;
  c.batch_size = 100;
  c.batches_per_epoch = 50;
  c.eval_samples = 1000;
  return c;
}

double median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void mode_collapse(Line& line) {
  const auto t0 = Clock::now();
  std::vector<int> single, spatial;
  for (int s = 1; s <= kModeCollapseSeeds; ++s) {
    single.push_back(run::run_sequential(ring_run("1x1", static_cast<std::uint64_t>(s))).best_quality->modes_covered);
    spatial.push_back(run::run_sequential(ring_run("2x2", static_cast<std::uint64_t>(s))).best_quality->modes_covered);
  }
  auto list = [](const std::vector<int>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
  };
  const double med1 = median(single), med2 = median(spatial);
  const auto good = std::count_if(spatial.begin(), spatial.end(), [](int m) { return m >= kModesRequired; });
  line.detail << "modes 1x1 [" << list(single) << "] median " << med1 << "; 2x2 [" << list(spatial) << "] median "
              << med2 << "; seeds with >=" << kModesRequired << "/8: " << good;
  if (med2 < med1) line.fail("2x2 median below 1x1 median");
  if (good < kSeedsRequired) line.fail("fewer than 3 seeds reach 6/8 modes");
  check_time(line, t0, kModeCollapseSeconds);
}

int hardware_threads() {
  cpu_set_t set;
  if (sched_getaffinity(0, sizeof set, &set) == 0) return CPU_COUNT(&set);
  return static_cast<int>(std::thread::hardware_concurrency());
}

bool decomposition_ok(const metrics::ProfileReport& p) {
  if (metrics::kProfiledRoutines.size() != 4) return false;
  for (double s : p.seconds)
    if (s < 0.0) return false;
  return p.routine_sum() <= p.wall;
}

void scaling(Line& line) {
  auto workload = [](const std::string& grid) {
    auto c = ring_run(grid, 1);
    c.iterations = 30;
    return c;
  };
  const auto seq = run::run_sequential(workload("2x2"));
  const bool decomposed = decomposition_ok(seq.overall_profile);
  const int threads = hardware_threads();
  if (threads < kScalingThreads) {
    line.verdict = Verdict::NotApplicable;
    line.detail << "speedup needs >= " << kScalingThreads << " hardware threads, found " << threads
                << "; profiler decomposition into 4 routines with sum <= wall: " << (decomposed ? "ok" : "violated");
    if (!decomposed) line.fail("profile decomposition");
    return;
  }
  const auto seq1 = run::run_sequential(workload("1x1"));
  const auto par1 = run::run_parallel_inproc(workload("1x1"));
  const auto par2 = run::run_parallel_inproc(workload("2x2"));
  if (!par1.report || !par2.report) {
    line.fail("parallel run failed");
    return;
  }
  const double s1 = seq1.wall_seconds / par1.report->wall_seconds;
  const double s2 = seq.wall_seconds / par2.report->wall_seconds;
  line.detail << std::fixed << std::setprecision(2) << "speedup 1x1 " << s1 << ", 2x2 " << s2
              << "; decomposition " << (decomposed ? "ok" : "violated");
  if (s2 < kScalingSpeedup) line.fail("2x2 speedup below 2.0");
  if (s2 < s1) line.fail("speedup decreases from 1x1 to 2x2");
  if (!decomposed || !decomposition_ok(par2.report->overall_profile)) line.fail("profile decomposition");
}

void speedup_arithmetic(Line& line) {
  struct Row {
    const char* routine;
    double base, par, speedup;
    double accel;  // < 0: not asserted
  };
  const Row rows[] = {{"overall", 509.6, 97.9, 5.21, 80.8}, {"train", 264.9, 43.8, 6.05, -1}, {"update_genomes", 199.8, 16.8, 11.87, -1}};
  line.detail << std::fixed;
  for (const auto& r : rows) {
    const double s = metrics::speedup_ratio(r.base, r.par);
    line.detail << r.routine << " " << std::setprecision(3) << s << " (want " << std::setprecision(2) << r.speedup
                << ")";
    if (std::abs(s - r.speedup) > kSpeedupTolerance) line.fail(std::string(r.routine) + " speedup");
    if (r.accel >= 0) {
      const double a = metrics::acceleration_percent(r.base, r.par);
      line.detail << " accel " << std::setprecision(2) << a << "% (want " << std::setprecision(1) << r.accel << "%)";
      if (std::abs(a - r.accel) > kAccelerationTolerance) line.fail(std::string(r.routine) + " acceleration");
    }
    line.detail << "; ";
  }
}

void idx(Line& line) {
  const auto t0 = Clock::now();
  std::string real;
  if (const char* env = std::getenv("MNIST_TRAIN_IMAGES")) real = env;
  for (const char* candidate : {"data/train-images-idx3-ubyte", "examples/train-images-idx3-ubyte"})
    if (real.empty() && std::filesystem::exists(candidate)) real = candidate;
  if (!real.empty()) {
    const auto t = data::load_idx(real);
    line.detail << "real MNIST dims " << t.dims.size();
    if (t.dims != std::vector<std::uint32_t>{60000, 28, 28}) line.fail("unexpected dims");
  } else {
    const auto tiny = data::load_idx(CELLGAN_FIXTURES "/tiny_1x1x1.idx3");
    const bool tiny_ok = tiny.dims == std::vector<std::uint32_t>{1, 1, 1} && tiny.data == std::vector<std::uint8_t>{0x7F};
    bool bad_rejected = false;
    try {
      data::load_idx(CELLGAN_FIXTURES "/bad_magic.idx");
    } catch (const DecodeError& e) {
      bad_rejected = std::string(e.what()).find("unsupported") != std::string::npos;
    }
    line.detail << "no MNIST file; fixture 1x1x1 " << (tiny_ok ? "parsed [[[127]]]" : "wrong")
                << ", corrupted magic " << (bad_rejected ? "rejected" : "accepted");
    if (!tiny_ok) line.fail("tiny fixture");
    if (!bad_rejected) line.fail("bad magic");
  }
  check_time(line, t0, 5.0);
}

}  // namespace

int main(int argc, char** argv) {
  log::set_threshold(log::Level::Off);
  const std::vector<std::pair<std::string, std::function<void(Line&)>>> criteria{
      {"topology-oracle", topology},
      {"propagation", propagation},
      {"gradient-suite", gradients},
      {"protocol-conformance", protocol},
      {"backend-equivalence", backends},
      {"mode-collapse", mode_collapse},
      {"scaling", scaling},
      {"speedup-arithmetic", speedup_arithmetic},
      {"idx-parser", idx},
  };
  // Optional filter: run only the named criteria.
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Line line;
    try {
      fn(line);
    } catch (const std::exception& e) {
      line.fail(std::string("exception: ") + e.what());
    }
    const char* tag = line.verdict == Verdict::Pass ? "PASS" : line.verdict == Verdict::Fail ? "FAIL" : "N/A ";
    std::cout << tag << "  " << name << ": " << line.detail.str() << std::endl;
    failures += line.verdict == Verdict::Fail;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: all criteria met")
            << std::endl;
  return failures ? 1 : 0;
}
