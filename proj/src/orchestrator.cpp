#include "cellgan/orchestrator.hpp"

#include <algorithm>
#include <numeric>

#include "cellgan/log.hpp"

namespace cellgan::orch {

using transport::Message;
using transport::Tag;

std::uint64_t data_seed(std::uint64_t seed, const grid::CellCoord& cell) {
  return splitmix64(cell_seed(seed, cell.row, cell.col) ^ 0xda7aULL);
}

coevo::Cell build_cell(const config::RunConfig& cfg, const grid::CellCoord& coord) {
  return coevo::make_cell(cfg.grid_spec(), coord, cfg.generator_arch(), cfg.discriminator_arch(), cfg.loss_for(coord),
                          cfg.train_config());
}

void HeartbeatConfig::validate() const {
  if (interval.count() <= 0) throw UsageError("heartbeat interval must be positive");
  if (misses < 1) throw UsageError("heartbeat misses must be at least 1");
}

// ---------------------------------------------------------------- placement

Placement compute_placement(const grid::GridSpec& grid, const std::vector<NodeInfo>& nodes) {
  const int workers = grid.cells();
  const int needed = workers + 1;
  const int available = std::accumulate(nodes.begin(), nodes.end(), 0,
                                        [](int acc, const NodeInfo& n) { return acc + std::max(0, n.cores); });
  if (available < needed)
    throw CapacityError("placement needs " + std::to_string(needed) + " cores but only " + std::to_string(available) +
                        " are available (deficit " + std::to_string(needed - available) + ")");

  Placement p;
  std::vector<int> free(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) free[i] = std::max(0, nodes[i].cores);
  // The master takes a core on the first node that has one.
  std::size_t first = 0;
  while (free[first] == 0) ++first;
  --free[first];
  p.nodes[0] = nodes[first].name;

  std::size_t next = 0;
  for (int rank = 1; rank <= workers; ++rank) {
    while (free[next % nodes.size()] == 0) ++next;
    const std::size_t n = next % nodes.size();
    --free[n];
    ++next;
    p.nodes[rank] = nodes[n].name;
    p.assignments[rank] = grid::rank_to_coord(grid, rank);
  }
  return p;
}

// ---------------------------------------------------------------- heartbeat

HeartbeatMonitor::HeartbeatMonitor(HeartbeatConfig cfg, std::vector<int> ranks, SendFn send, FailFn on_failure)
    : cfg_(cfg), send_(std::move(send)), on_failure_(std::move(on_failure)) {
  cfg_.validate();
  const auto now = Clock::now();
  for (int r : ranks) last_ack_[r] = now;
}

HeartbeatMonitor::~HeartbeatMonitor() { stop(); }

void HeartbeatMonitor::start() {
  std::lock_guard lock(mu_);
  if (running_) return;
  running_ = true;
  const auto now = Clock::now();
  for (auto& [r, t] : last_ack_) t = now;
  thread_ = std::thread([this] { loop(); });
}

void HeartbeatMonitor::stop() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void HeartbeatMonitor::ack(int rank) {
  std::lock_guard lock(mu_);
  auto it = last_ack_.find(rank);
  if (it != last_ack_.end()) it->second = Clock::now();
}

void HeartbeatMonitor::remove(int rank) {
  std::lock_guard lock(mu_);
  last_ack_.erase(rank);
}

std::vector<int> HeartbeatMonitor::failed() const {
  std::lock_guard lock(mu_);
  return failed_;
}

void HeartbeatMonitor::declare_locked(int rank, std::vector<int>& out) {
  last_ack_.erase(rank);
  failed_.push_back(rank);
  out.push_back(rank);
}

void HeartbeatMonitor::loop() {
  // Checks run four times per interval so detection latency stays close
  // to the timeout itself.
  const auto tick = std::max(Millis(1), cfg_.interval / 4);
  auto next_beat = Clock::now();
  std::unique_lock lock(mu_);
  while (!stop_) {
    const auto now = Clock::now();
    std::vector<int> newly_failed;
    for (auto it = last_ack_.begin(); it != last_ack_.end();) {
      const int r = it->first;
      ++it;
      if (now - last_ack_[r] > cfg_.timeout()) declare_locked(r, newly_failed);
    }
    std::vector<int> beat;
    if (now >= next_beat) {
      for (const auto& [r, t] : last_ack_) beat.push_back(r);
      next_beat = now + cfg_.interval;
    }
    lock.unlock();
    for (int r : newly_failed) {
      log::warn("heartbeat: rank ", r, " missed ", cfg_.misses, " intervals, declared failed");
      on_failure_(r);
    }
    for (int r : beat) {
      try {
        send_(r);
      } catch (const Error& e) {
        log::debug("heartbeat to rank ", r, " failed: ", e.what());
      }
    }
    lock.lock();
    cv_.wait_for(lock, tick, [this] { return stop_; });
  }
}

// ---------------------------------------------------------------- results

Bytes encode_cell_result(const CellResult& r) {
  nlohmann::json j{
      {"rank", r.rank},
      {"row", r.coord.row},
      {"col", r.coord.col},
      {"mixture_weights", r.mixture_weights},
      {"gen_losses", r.gen_losses},
      {"disc_losses", r.disc_losses},
      {"center_gen_fitness", r.center_gen_fitness},
      {"center_disc_fitness", r.center_disc_fitness},
      {"learning_rate", r.learning_rate},
      {"epochs", r.epochs},
      {"degraded_epochs", r.degraded_epochs},
      {"profile", r.profile},
  };
  auto& coords = j["ensemble_coords"] = nlohmann::json::array();
  for (const auto& c : r.ensemble_coords) coords.push_back({c.row, c.col});
  ByteWriter w;
  w.blob(j.dump());
  w.u32_be(static_cast<std::uint32_t>(2 + r.ensemble_gens.size()));
  w.blob(r.center_gen);
  w.blob(r.center_disc);
  for (const auto& g : r.ensemble_gens) w.blob(g);
  return w.take();
}

CellResult decode_cell_result(std::span<const std::uint8_t> payload) {
  ByteReader rd(payload);
  CellResult r;
  try {
    const auto j = nlohmann::json::parse(rd.blob_string());
    r.rank = j.at("rank").get<int>();
    r.coord = {j.at("row").get<int>(), j.at("col").get<int>()};
    r.mixture_weights = j.at("mixture_weights").get<std::vector<double>>();
    r.gen_losses = j.at("gen_losses").get<std::vector<double>>();
    r.disc_losses = j.at("disc_losses").get<std::vector<double>>();
    r.center_gen_fitness = j.at("center_gen_fitness").get<double>();
    r.center_disc_fitness = j.at("center_disc_fitness").get<double>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.epochs = j.at("epochs").get<int>();
    r.degraded_epochs = j.at("degraded_epochs").get<int>();
    r.profile = j.at("profile").get<metrics::ProfileReport>();
    for (const auto& c : j.at("ensemble_coords")) r.ensemble_coords.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed result summary: ") + e.what());
  }
  const auto blobs = rd.u32_be();
  if (blobs < 2) throw DecodeError("result carries fewer than two parameter blobs");
  auto copy = [&] {
    auto b = rd.blob();
    return Bytes(b.begin(), b.end());
  };
  r.center_gen = copy();
  r.center_disc = copy();
  for (std::uint32_t i = 2; i < blobs; ++i) r.ensemble_gens.push_back(copy());
  if (!rd.done()) throw DecodeError("trailing bytes after result");
  if (r.ensemble_gens.size() != r.ensemble_coords.size() || r.ensemble_gens.size() != r.mixture_weights.size())
    throw DecodeError("ensemble generators, coordinates and weights disagree in length");
  return r;
}

void fill_cell_result(CellResult& res, const coevo::Cell& cell) {
  res.coord = cell.coord();
  res.center_gen = nn::serialize_params(cell.center_gen);
  res.center_disc = nn::serialize_params(cell.center_disc);
  const auto ens = coevo::ensemble_of(cell);
  res.ensemble_coords.clear();
  res.ensemble_gens.clear();
  res.mixture_weights.clear();
  for (std::size_t i = 0, k = 0; i < cell.hood.members.size(); ++i) {
    const auto& m = cell.hood.members[i];
    if (m != cell.coord() && !cell.neighbor_gens.count(m)) continue;
    res.ensemble_coords.push_back(m);
    res.ensemble_gens.push_back(nn::serialize_params(ens.generators[k]));
    res.mixture_weights.push_back(ens.weights[k]);
    ++k;
  }
  res.center_gen_fitness = cell.center_gen_fitness;
  res.center_disc_fitness = cell.center_disc_fitness;
  res.learning_rate = cell.hyper.learning_rate;
  res.epochs = cell.epoch;
}

coevo::Ensemble ensemble_from(const CellResult& r, const nn::MlpArch& gen_arch) {
  coevo::Ensemble e;
  e.coord = r.coord;
  for (const auto& g : r.ensemble_gens) e.generators.push_back(nn::deserialize_params(g, gen_arch));
  e.weights = r.mixture_weights;
  return e;
}

FinalReport finalize_report(const config::RunConfig& cfg, std::vector<CellResult> cells,
                            std::vector<grid::CellCoord> failed, double wall_seconds) {
  FinalReport rep;
  rep.grid = cfg.grid_spec();
  std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) { return a.coord < b.coord; });
  std::sort(failed.begin(), failed.end());
  rep.cells = std::move(cells);
  rep.failed_cells = std::move(failed);
  rep.wall_seconds = wall_seconds;

  std::vector<metrics::ProfileReport> profiles;
  for (const auto& c : rep.cells) profiles.push_back(c.profile);
  rep.profile = metrics::merge_profiles(profiles, wall_seconds);
  rep.overall_profile = rep.profile.mean;
  if (rep.cells.empty()) return rep;

  const auto arch = cfg.generator_arch();
  std::vector<coevo::Ensemble> candidates;
  for (const auto& c : rep.cells) candidates.push_back(ensemble_from(c, arch));
  const auto spec = cfg.dataset_spec();
  const std::uint64_t eval_seed = splitmix64(cfg.seed ^ 0xe7a1ULL);
  const auto n = static_cast<std::size_t>(cfg.eval_samples);

  if (spec.synthetic()) {
    const coevo::QualityMetric metric = [&](const Batch& b) { return data::quality(b, spec).score(); };
    rep.best = coevo::select_best_ensemble(candidates, metric, n, eval_seed, &rep.scores);
    rep.best_quality = data::quality(coevo::sample_ensemble(*rep.best, n, eval_seed), spec);
  } else {
    std::size_t best = 0;
    for (std::size_t i = 0; i < rep.cells.size(); ++i) {
      rep.scores.push_back(-rep.cells[i].center_gen_fitness);
      if (rep.scores[i] > rep.scores[best]) best = i;
    }
    rep.best = candidates[best];
    rep.best->score = rep.scores[best];
  }
  return rep;
}

// ---------------------------------------------------------------- state trace

WorkerState StateTrace::current() const {
  std::lock_guard lock(mu_);
  return history_.back();
}

void StateTrace::transition(WorkerState to) {
  std::lock_guard lock(mu_);
  const WorkerState from = history_.back();
  const bool legal = (from == WorkerState::Inactive && to == WorkerState::Processing) ||
                     (from == WorkerState::Processing && to == WorkerState::Finished) ||
                     (to == WorkerState::Failed && from != WorkerState::Failed && from != WorkerState::Finished);
  if (!legal)
    throw ProtocolError("illegal worker transition " + transport::to_string(from) + " -> " + transport::to_string(to));
  history_.push_back(to);
}

std::vector<WorkerState> StateTrace::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

// ---------------------------------------------------------------- worker

Worker::Worker(transport::Transport& ep) : ep_(ep), comm_(ep) {}

Worker::~Worker() {
  shutdown_ = true;
  comm_.cancel();
  join_training();
}

void Worker::inject_pause(Millis d) { pause_ms_ = d.count(); }

void Worker::join_training() {
  if (trainer_.joinable()) trainer_.join();
}

std::optional<CellResult> Worker::result() const {
  std::lock_guard lock(result_mu_);
  return result_;
}

void Worker::report_status(int to) {
  ep_.send(to, Message{Tag::StatusReport, 0, epoch_, transport::encode_state(state())});
}

void Worker::handle(const Message& msg) {
  switch (msg.tag) {
    case Tag::Config: {
      if (state() != WorkerState::Inactive) throw ProtocolError("CONFIG received while " + transport::to_string(state()));
      try {
        cfg_ = config::parse_config(to_string(msg.payload));
      } catch (const ConfigError& e) {
        throw ProtocolError(std::string("invalid configuration from master: ") + e.what());
      }
      return;
    }
    case Tag::RunTask: {
      if (state() != WorkerState::Inactive)
        throw ProtocolError("RUN_TASK rejected: worker is " + transport::to_string(state()));
      if (!cfg_) throw ProtocolError("RUN_TASK received before the configuration");
      const auto coord = transport::decode_coord(msg.payload);
      const auto g = cfg_->grid_spec();
      if (!grid::in_bounds(g, coord)) throw ProtocolError("RUN_TASK for cell outside the grid");
      trace_.transition(WorkerState::Processing);
      trainer_ = std::thread([this, coord] { train(coord); });
      return;
    }
    case Tag::GetStatus:
      report_status(msg.sender);
      return;
    case Tag::Heartbeat:
      ep_.send(msg.sender, Message{Tag::HeartbeatAck, 0, epoch_, {}});
      return;
    case Tag::PeerFailed:
      comm_.mark_failed(transport::decode_rank(msg.payload));
      return;
    case Tag::Shutdown:
      shutdown_ = true;
      comm_.cancel();
      return;
    default:
      throw ProtocolError("unexpected " + transport::to_string(msg.tag) + " on the worker control plane");
  }
}

int Worker::run() {
  try {
    report_status(0);
  } catch (const Error& e) {
    log::error("rank ", ep_.rank(), ": handshake failed: ", e.what());
    return 2;
  }
  auto last_master = Clock::now();
  int code = 0;
  while (!shutdown_) {
    if (const auto p = pause_ms_.exchange(0); p > 0) std::this_thread::sleep_for(Millis(p));
    auto msg = ep_.recv(Millis(50), transport::Plane::Control);
    if (!msg) {
      if (ep_.mailbox().closed()) break;
      if (master_timeout_ && Clock::now() - last_master > *master_timeout_) {
        if (state() == WorkerState::Finished) {
          log::info("rank ", ep_.rank(), ": master silent after the final result, exiting");
        } else {
          log::error("rank ", ep_.rank(), ": no message from the master for ", master_timeout_->count(), " ms");
          code = 1;
        }
        break;
      }
      continue;
    }
    if (msg->sender == 0) last_master = Clock::now();
    try {
      handle(*msg);
    } catch (const ProtocolError& e) {
      log::error("rank ", ep_.rank(), ": ", e.what());
    } catch (const LinkError& e) {
      log::error("rank ", ep_.rank(), ": ", e.what());
    }
  }
  shutdown_ = true;
  comm_.cancel();
  join_training();
  return state() == WorkerState::Failed ? 1 : code;
}

void Worker::train(grid::CellCoord coord) {
  try {
    const auto& cfg = *cfg_;
    const auto g = cfg.grid_spec();
    const auto tc = cfg.train_config();
    const auto gen_arch = cfg.generator_arch();
    const auto disc_arch = cfg.discriminator_arch();
    metrics::Profiler prof;
    auto cell = build_cell(cfg, coord);
    auto source = data::make_source(cfg.dataset_spec(), data_seed(cfg.seed, coord));

    const int self = ep_.rank();
    std::vector<int> neighbor_ranks;
    for (const auto& m : cell.hood.members)
      if (m != coord) neighbor_ranks.push_back(grid::coord_to_rank(g, m));
    transport::GatherOptions gopts;
    gopts.staleness = cfg.deterministic ? 0 : 1;

    std::set<int> dropped;
    auto drop = [&](int r) {
      if (std::find(neighbor_ranks.begin(), neighbor_ranks.end(), r) == neighbor_ranks.end()) return;
      if (!dropped.insert(r).second) return;
      cell.drop_neighbor(grid::rank_to_coord(g, r));
      log::warn("rank ", self, ": dropping neighbor rank ", r);
    };

    CellResult res;
    res.rank = self;
    res.coord = coord;
    for (int e = 1; e <= tc.iterations && !shutdown_ && !ep_.mailbox().closed(); ++e) {
      const auto stats = coevo::train_epoch(cell, *source, tc, &prof);
      res.gen_losses.push_back(stats.gen_loss);
      res.disc_losses.push_back(stats.disc_loss);
      res.degraded_epochs += stats.degraded;
      epoch_ = e;

      const Bytes contribution = prof.section(metrics::Routine::Other, [&] {
        return transport::encode_center_exchange(
            {coord, nn::serialize_params(cell.center_gen), nn::serialize_params(cell.center_disc)});
      });
      std::vector<int> members{self};
      for (int r : comm_.failed()) drop(r);
      for (int r : neighbor_ranks)
        if (!dropped.count(r)) members.push_back(r);
      std::map<int, Bytes> got;
      try {
        got = prof.section(metrics::Routine::Gather, [&] { return comm_.gather(comm_.local(members), contribution, e, gopts); });
      } catch (const transport::GatherAborted& a) {
        if (shutdown_ || ep_.mailbox().closed()) break;
        got = a.partial();
        for (int r : a.missing()) {
          comm_.mark_failed(r);
          drop(r);
        }
      }
      prof.section(metrics::Routine::Other, [&] {
        for (const auto& [r, bytes] : got) {
          if (r == self) continue;
          auto ce = transport::decode_center_exchange(bytes);
          cell.absorb(ce.source, nn::deserialize_params(ce.generator, gen_arch),
                      nn::deserialize_params(ce.discriminator, disc_arch));
        }
      });
    }
    if (shutdown_ || ep_.mailbox().closed()) return;

    fill_cell_result(res, cell);
    res.profile = prof.finish();
    {
      std::lock_guard lock(result_mu_);
      result_ = res;
    }
    trace_.transition(WorkerState::Finished);
    ep_.send(0, Message{Tag::FinalResult, 0, epoch_, encode_cell_result(res)});
  } catch (const Error& e) {
    log::error("rank ", ep_.rank(), ": training failed: ", e.what());
    try {
      trace_.transition(WorkerState::Failed);
      report_status(0);
    } catch (const Error&) {
    }
  }
}

// ---------------------------------------------------------------- master

namespace {

std::string rank_list(const std::vector<int>& ranks) {
  std::string s;
  for (int r : ranks) s += (s.empty() ? "" : ", ") + std::to_string(r);
  return s;
}

}  // namespace

MasterOutcome master_run(transport::Transport& ep, const config::RunConfig& cfg, const MasterOptions& opts) {
  MasterOutcome out;
  const auto start = Clock::now();
  const auto g = cfg.grid_spec();
  const int workers = g.cells();
  auto fail_startup = [&](const std::string& why) {
    log::error("master: ", why);
    out.status = RunStatus::StartupFailure;
    out.error = why;
    return out;
  };
  if (ep.world_size() < workers + 1)
    return fail_startup("grid " + grid::to_string(g) + " needs " + std::to_string(workers) + " workers, world has " +
                        std::to_string(ep.world_size() - 1));

  transport::Communicator comm(ep);
  std::vector<int> ranks(static_cast<std::size_t>(workers));
  std::iota(ranks.begin(), ranks.end(), 1);

  // Handshake: every worker announces itself as INACTIVE.
  std::set<int> greeted;
  const auto deadline = start + Millis(cfg.handshake_timeout_ms);
  while (static_cast<int>(greeted.size()) < workers) {
    const auto now = Clock::now();
    if (now >= deadline) {
      std::vector<int> missing;
      for (int r : ranks)
        if (!greeted.count(r)) missing.push_back(r);
      return fail_startup("no handshake from ranks " + rank_list(missing));
    }
    auto msg = ep.recv(std::min<Clock::duration>(Millis(50), deadline - now), transport::Plane::Control);
    if (msg && msg->tag == Tag::StatusReport && msg->sender >= 1 && msg->sender <= workers) greeted.insert(msg->sender);
  }

  try {
    out.placement = compute_placement(g, opts.nodes.empty()
                                             ? std::vector<NodeInfo>{{"localhost", ep.world_size()}}
                                             : opts.nodes);
  } catch (const CapacityError& e) {
    return fail_startup(e.what());
  }
  transport::CommContext run_ctx{transport::ContextKind::World, {0}};
  run_ctx.members.insert(run_ctx.members.end(), ranks.begin(), ranks.end());
  try {
    comm.broadcast_config(run_ctx, to_bytes(config::serialize_config(cfg)));
    for (const auto& [rank, coord] : out.placement.assignments)
      ep.send(rank, Message{Tag::RunTask, 0, 0, transport::encode_coord(coord)});
  } catch (const Error& e) {
    return fail_startup(e.what());
  }
  log::info("master: launched ", workers, " workers on grid ", grid::to_string(g));

  std::mutex ev_mu;
  std::vector<int> events;
  HeartbeatMonitor monitor(
      HeartbeatConfig{Millis(cfg.heartbeat_interval_ms), cfg.heartbeat_misses}, ranks,
      [&](int r) { ep.send(r, Message{Tag::Heartbeat, 0, 0, {}}); },
      [&](int r) {
        std::lock_guard lock(ev_mu);
        events.push_back(r);
      });
  monitor.start();

  std::map<int, CellResult> results;
  std::set<int> failed;
  auto live = [&] {
    std::vector<int> v;
    for (int r : ranks)
      if (!failed.count(r)) v.push_back(r);
    return v;
  };
  auto broadcast = [&](Tag tag, const Bytes& payload, const std::vector<int>& to) {
    for (int r : to) {
      try {
        ep.send(r, Message{tag, 0, 0, payload});
      } catch (const Error& e) {
        log::debug("master: ", e.what());
      }
    }
  };

  while (static_cast<int>(results.size() + failed.size()) < workers) {
    std::vector<int> new_failures;
    {
      std::lock_guard lock(ev_mu);
      new_failures.swap(events);
    }
    if (auto msg = ep.recv(Millis(20))) {
      const int s = msg->sender;
      switch (msg->tag) {
        case Tag::HeartbeatAck:
          monitor.ack(s);
          break;
        case Tag::StatusReport:
          monitor.ack(s);
          try {
            if (transport::decode_state(msg->payload) == WorkerState::Failed) new_failures.push_back(s);
          } catch (const DecodeError& e) {
            log::warn("master: bad status from rank ", s, ": ", e.what());
          }
          break;
        case Tag::FinalResult:
          if (failed.count(s) || results.count(s)) break;
          try {
            results.emplace(s, decode_cell_result(msg->payload));
            monitor.remove(s);
          } catch (const DecodeError& e) {
            log::error("master: bad result from rank ", s, ": ", e.what());
            new_failures.push_back(s);
          }
          break;
        default:
          log::debug("master: ignoring ", transport::to_string(msg->tag), " from rank ", s);
      }
    }
    for (int r : new_failures) {
      if (failed.count(r) || results.count(r)) continue;
      failed.insert(r);
      monitor.remove(r);
      out.failed_ranks.push_back(r);
      if (opts.on_failure) opts.on_failure(r);
      if (cfg.failure_policy == config::FailurePolicy::Abort) {
        log::error("master: rank ", r, " failed, aborting the run");
        monitor.stop();
        broadcast(Tag::Shutdown, {}, ranks);
        out.status = RunStatus::WorkerFailure;
        out.error = "worker rank " + std::to_string(r) + " failed";
        return out;
      }
      log::warn("master: rank ", r, " failed, excluding cell ", grid::to_string(grid::rank_to_coord(g, r)));
      broadcast(Tag::PeerFailed, transport::encode_rank(r), live());
    }
  }
  monitor.stop();
  // Ranks declared failed may still be alive (e.g. stalled); they are told
  // to stop as well.
  broadcast(Tag::Shutdown, {}, ranks);

  std::vector<CellResult> cells;
  for (auto& [r, c] : results) cells.push_back(std::move(c));
  std::vector<grid::CellCoord> failed_cells;
  for (int r : failed) failed_cells.push_back(grid::rank_to_coord(g, r));
  const double wall = std::chrono::duration<double>(Clock::now() - start).count();
  out.report = finalize_report(cfg, std::move(cells), std::move(failed_cells), wall);
  return out;
}

}  // namespace cellgan::orch
