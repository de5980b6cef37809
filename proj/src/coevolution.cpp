#include "cellgan/coevolution.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cellgan/error.hpp"
#include "cellgan/log.hpp"

namespace cellgan::coevo {

using metrics::Routine;
using nn::MlpParams;

void TrainConfig::validate() const {
  if (iterations < 1) throw UsageError("iterations must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (tournament_size < 1) throw UsageError("tournament_size must be >= 1");
  if (population_per_cell != 1) throw UsageError("population_per_cell must be 1");
  if (!(learning_rate > 0.0 && learning_rate < 1.0)) throw UsageError("learning_rate must be in (0, 1)");
  if (!(mixture_sigma > 0.0)) throw UsageError("mixture_sigma must be > 0");
  if (!(lr_sigma > 0.0)) throw UsageError("lr_sigma must be > 0");
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw UsageError("mutation_prob must be in [0, 1]");
  if (skip_disc_steps < 0) throw UsageError("skip_disc_steps must be >= 0");
  if (batches_per_epoch < 1) throw UsageError("batches_per_epoch must be >= 1");
}

void Cell::absorb(const grid::CellCoord& from, MlpParams gen, MlpParams disc) {
  if (from == coord() || !hood.contains(from))
    throw UsageError("cell " + grid::to_string(coord()) + " has no neighbor " + grid::to_string(from));
  neighbor_gens.insert_or_assign(from, std::move(gen));
  neighbor_discs.insert_or_assign(from, std::move(disc));
}

void Cell::drop_neighbor(const grid::CellCoord& from) {
  neighbor_gens.erase(from);
  neighbor_discs.erase(from);
}

std::vector<grid::CellCoord> Cell::population_coords() const {
  std::vector<grid::CellCoord> out;
  for (const auto& m : hood.members)
    if (m == coord() || neighbor_gens.count(m)) out.push_back(m);
  return out;
}

void Cell::validate() const {
  if (mixture_weights.size() != hood.members.size())
    throw UsageError("mixture weights not aligned with neighborhood");
  double sum = 0.0;
  for (double w : mixture_weights) {
    if (!(w >= 0.0)) throw UsageError("negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("mixture weights do not sum to 1");
  for (const auto& [c, _] : neighbor_gens)
    if (c == coord() || !hood.contains(c)) throw UsageError("neighbor map holds a non-neighbor");
  if (neighbor_gens.size() != neighbor_discs.size()) throw UsageError("neighbor maps out of sync");
}

Cell make_cell(const grid::GridSpec& grid_spec, const grid::CellCoord& coord, const nn::MlpArch& gen_arch,
               const nn::MlpArch& disc_arch, loss::LossKind kind, const TrainConfig& cfg) {
  Cell cell;
  cell.grid = grid_spec;
  cell.hood = grid::neighborhood(grid_spec, coord);
  const std::uint64_t seed = cell_seed(cfg.seed, coord.row, coord.col);
  cell.rng = Rng(seed);
  cell.center_gen = nn::init_params(gen_arch, cell.rng.next_seed());
  cell.center_disc = nn::init_params(disc_arch, cell.rng.next_seed());
  cell.mixture_weights.assign(cell.hood.members.size(), 1.0 / static_cast<double>(cell.hood.members.size()));
  cell.hyper.learning_rate = cfg.learning_rate;
  cell.loss_kind = kind;
  cell.gen_opt = nn::AdamState(cell.center_gen, cfg.learning_rate);
  cell.disc_opt = nn::AdamState(cell.center_disc, cfg.learning_rate);
  return cell;
}

Batch sample_latent(std::size_t rows, int latent_dim, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Batch z(rows, static_cast<std::size_t>(latent_dim));
  for (float& v : z.data) v = static_cast<float>(dist(engine));
  return z;
}

namespace {

std::vector<double> disc_output(const MlpParams& disc, const Batch& x) {
  auto cache = nn::forward(disc, x);
  return std::move(cache.activations.back().data);
}

Matrix<double> column(const std::vector<double>& v) {
  Matrix<double> m(v.size(), 1);
  m.data = v;
  return m;
}

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw UsageError(std::string("fitness evaluation needs at least one ") + what);
}

}  // namespace

PopulationFitness evaluate_population(std::span<const MlpParams* const> gens,
                                      std::span<const MlpParams* const> discs, loss::LossKind kind,
                                      const Batch& real_batch, std::uint64_t latent_seed) {
  require_nonempty(gens.size(), "generator");
  require_nonempty(discs.size(), "discriminator");
  const Batch z = sample_latent(real_batch.rows, gens[0]->arch().input_dim, latent_seed);

  std::vector<Batch> fakes;
  fakes.reserve(gens.size());
  for (const auto* g : gens) fakes.push_back(nn::forward(*g, z).output_f32());

  PopulationFitness f;
  f.gen.assign(gens.size(), 0.0);
  f.disc.assign(discs.size(), 0.0);
  for (std::size_t j = 0; j < discs.size(); ++j) {
    const auto on_real = disc_output(*discs[j], real_batch);
    for (std::size_t i = 0; i < gens.size(); ++i) {
      const auto on_fake = disc_output(*discs[j], fakes[i]);
      f.gen[i] += loss::generator_loss(kind, on_fake) / static_cast<double>(discs.size());
      f.disc[j] += loss::discriminator_loss(kind, on_real, on_fake) / static_cast<double>(gens.size());
    }
  }
  return f;
}

double evaluate_generator_fitness(const MlpParams& gen, std::span<const MlpParams* const> discs,
                                  loss::LossKind kind, const Batch& real_batch, std::uint64_t latent_seed) {
  require_nonempty(discs.size(), "discriminator");
  const MlpParams* g[] = {&gen};
  return evaluate_population(g, discs, kind, real_batch, latent_seed).gen[0];
}

double evaluate_discriminator_fitness(const MlpParams& disc, std::span<const MlpParams* const> gens,
                                      loss::LossKind kind, const Batch& real_batch, std::uint64_t latent_seed) {
  require_nonempty(gens.size(), "generator");
  const MlpParams* d[] = {&disc};
  return evaluate_population(gens, d, kind, real_batch, latent_seed).disc[0];
}

std::size_t tournament_select(std::span<const double> fitness, int k, RandomSource& rng) {
  if (fitness.empty()) throw UsageError("tournament over an empty candidate list");
  if (k < 1) throw UsageError("tournament size must be >= 1");
  std::size_t best = rng.index(fitness.size());
  for (int draw = 1; draw < k; ++draw) {
    const std::size_t c = rng.index(fitness.size());
    if (fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best)) best = c;
  }
  return best;
}

Hyperparams mutate_learning_rate(const Hyperparams& hyper, const TrainConfig& cfg, RandomSource& rng) {
  if (rng.uniform() >= cfg.mutation_prob) return hyper;
  Hyperparams out = hyper;
  out.learning_rate = std::clamp(hyper.learning_rate + rng.normal(cfg.lr_sigma), kMinLearningRate, kMaxLearningRate);
  return out;
}

std::vector<double> mutate_mixture_weights(std::span<const double> weights, double sigma, RandomSource& rng) {
  std::vector<double> out(weights.begin(), weights.end());
  if (out.empty()) return out;
  double sum = 0.0;
  for (double& w : out) {
    w = std::max(0.0, w + rng.normal(sigma));
    sum += w;
  }
  if (sum <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (double& w : out) w /= sum;
  return out;
}

bool trains_discriminator(int batch_index, int skip_disc_steps) {
  if (skip_disc_steps <= 0) return true;
  return batch_index % (skip_disc_steps + 1) != skip_disc_steps;
}

namespace {

double discriminator_step(const MlpParams& gen, MlpParams& disc, nn::AdamState& opt, const Batch& real,
                          const Batch& z, loss::LossKind kind) {
  const Batch fake = nn::forward(gen, z).output_f32();
  const auto real_cache = nn::forward(disc, real);
  const auto fake_cache = nn::forward(disc, fake);
  const auto& p_real = real_cache.output().data;
  const auto& p_fake = fake_cache.output().data;
  const double value = loss::discriminator_loss(kind, p_real, p_fake);
  const auto g = loss::discriminator_loss_gradient(kind, p_real, p_fake);
  auto grads = nn::backward(disc, real_cache, column(g.real)).params;
  nn::accumulate(grads, nn::backward(disc, fake_cache, column(g.fake)).params);
  opt.step(disc, grads);
  return value;
}

double generator_step(MlpParams& gen, const MlpParams& disc, nn::AdamState& opt, const Batch& z,
                      loss::LossKind kind) {
  const auto gen_cache = nn::forward(gen, z);
  const auto disc_cache = nn::forward(disc, gen_cache.output_f32());
  const auto& p_fake = disc_cache.output().data;
  const double value = loss::generator_loss(kind, p_fake);
  const auto g = loss::generator_loss_gradient(kind, p_fake);
  const auto through_disc = nn::backward(disc, disc_cache, column(g));
  opt.step(gen, nn::backward(gen, gen_cache, through_disc.input_grad).params);
  return value;
}

struct Scored {
  std::vector<double> gen;
  std::vector<double> disc;
};

Scored score_members(const std::vector<const MlpParams*>& gens, const std::vector<const MlpParams*>& discs,
                     Cell& cell, data::DataSource& data, const TrainConfig& cfg, const EpochHooks& hooks) {
  Scored s;
  const bool need_losses = !hooks.gen_fitness || !hooks.disc_fitness;
  PopulationFitness pf;
  if (need_losses) {
    const Batch real = data.next_batch(static_cast<std::size_t>(cfg.batch_size));
    pf = evaluate_population(gens, discs, cell.loss_kind, real, cell.rng.next_seed());
  }
  if (hooks.gen_fitness) {
    for (const auto* g : gens) s.gen.push_back(hooks.gen_fitness(*g));
  } else {
    s.gen = std::move(pf.gen);
  }
  if (hooks.disc_fitness) {
    for (const auto* d : discs) s.disc.push_back(hooks.disc_fitness(*d));
  } else {
    s.disc = std::move(pf.disc);
  }
  return s;
}

std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

EpochStats train_epoch(Cell& cell, data::DataSource& data, const TrainConfig& cfg, metrics::Profiler* profiler,
                       const EpochHooks& hooks) {
  metrics::Profiler local;
  metrics::Profiler& prof = profiler ? *profiler : local;
  const metrics::ProfileReport before = prof.report();

  EpochStats stats;
  stats.epoch = cell.epoch + 1;
  const auto pop = cell.population_coords();
  stats.degraded = pop.size() == 1 && cell.hood.members.size() > 1;
  // Expected on the first epoch, before any exchange has happened.
  if (stats.degraded && stats.epoch > 1)
    log::warn("cell ", grid::to_string(cell.coord()), " epoch ", stats.epoch,
              ": no neighbor copies, training on the center only");

  auto gens_of = [&](const MlpParams& first) {
    std::vector<const MlpParams*> out{&first};
    for (std::size_t i = 1; i < pop.size(); ++i) out.push_back(&cell.neighbor_gens.at(pop[i]));
    return out;
  };
  auto discs_of = [&](const MlpParams& first) {
    std::vector<const MlpParams*> out{&first};
    for (std::size_t i = 1; i < pop.size(); ++i) out.push_back(&cell.neighbor_discs.at(pop[i]));
    return out;
  };

  // 1. selection
  MlpParams gen, disc;
  prof.section(Routine::UpdateGenomes, [&] {
    const auto gens = gens_of(cell.center_gen);
    const auto discs = discs_of(cell.center_disc);
    const auto fit = score_members(gens, discs, cell, data, cfg, hooks);
    const std::size_t gi = tournament_select(std::span<const double>(fit.gen), cfg.tournament_size, cell.rng);
    const std::size_t di = tournament_select(std::span<const double>(fit.disc), cfg.tournament_size, cell.rng);
    gen = *gens[gi];
    disc = *discs[di];
  });

  // 2. learning-rate mutation
  prof.section(Routine::Mutate, [&] {
    cell.hyper = mutate_learning_rate(cell.hyper, cfg, cell.rng);
    cell.gen_opt.lr = cell.hyper.learning_rate;
    cell.disc_opt.lr = cell.hyper.learning_rate;
  });

  // 3. gradient training of the selected pair
  if (hooks.train) {
    prof.section(Routine::Train, [&] {
      const int latent_dim = gen.arch().input_dim;
      for (int b = 0; b < cfg.batches_per_epoch; ++b) {
        const auto t0 = std::chrono::steady_clock::now();
        const Batch real = data.next_batch(static_cast<std::size_t>(cfg.batch_size));
        if (trains_discriminator(b, cfg.skip_disc_steps)) {
          const Batch z = sample_latent(real.rows, latent_dim, cell.rng.next_seed());
          stats.disc_loss += discriminator_step(gen, disc, cell.disc_opt, real, z, cell.loss_kind);
          ++stats.disc_updates;
        }
        const Batch z = sample_latent(real.rows, latent_dim, cell.rng.next_seed());
        stats.gen_loss += generator_step(gen, disc, cell.gen_opt, z, cell.loss_kind);
        ++stats.gen_updates;
        stats.max_batch_seconds = std::max(
            stats.max_batch_seconds, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
    });
    if (stats.disc_updates) stats.disc_loss /= stats.disc_updates;
    if (stats.gen_updates) stats.gen_loss /= stats.gen_updates;
  }

  // 4-5. re-evaluate and replace the centers
  prof.section(Routine::UpdateGenomes, [&] {
    // The trained pair competes with the pre-epoch center and the neighbors.
    auto gens = gens_of(cell.center_gen);
    auto discs = discs_of(cell.center_disc);
    gens.insert(gens.begin(), &gen);
    discs.insert(discs.begin(), &disc);
    const auto fit = score_members(gens, discs, cell, data, cfg, hooks);
    const std::size_t gi = argmin(fit.gen);
    const std::size_t di = argmin(fit.disc);
    cell.center_gen = gi == 0 ? std::move(gen) : MlpParams(*gens[gi]);
    cell.center_disc = di == 0 ? std::move(disc) : MlpParams(*discs[di]);
    cell.center_gen_fitness = fit.gen[gi];
    cell.center_disc_fitness = fit.disc[di];
  });
  stats.center_gen_fitness = cell.center_gen_fitness;
  stats.center_disc_fitness = cell.center_disc_fitness;

  // 6. mixture-weight mutation
  prof.section(Routine::Mutate, [&] {
    cell.mixture_weights = mutate_mixture_weights(cell.mixture_weights, cfg.mixture_sigma, cell.rng);
  });

  cell.epoch += 1;
  const auto& after = prof.report();
  stats.train_seconds = after[Routine::Train] - before[Routine::Train];
  stats.update_genomes_seconds = after[Routine::UpdateGenomes] - before[Routine::UpdateGenomes];
  stats.mutate_seconds = after[Routine::Mutate] - before[Routine::Mutate];
  return stats;
}

Ensemble ensemble_of(const Cell& cell) {
  Ensemble e;
  e.coord = cell.coord();
  double sum = 0.0;
  for (std::size_t i = 0; i < cell.hood.members.size(); ++i) {
    const auto& m = cell.hood.members[i];
    if (m == cell.coord()) {
      e.generators.push_back(cell.center_gen);
    } else if (auto it = cell.neighbor_gens.find(m); it != cell.neighbor_gens.end()) {
      e.generators.push_back(it->second);
    } else {
      continue;
    }
    e.weights.push_back(cell.mixture_weights[i]);
    sum += cell.mixture_weights[i];
  }
  if (sum <= 0.0) {
    std::fill(e.weights.begin(), e.weights.end(), 1.0 / static_cast<double>(e.weights.size()));
  } else {
    for (double& w : e.weights) w /= sum;
  }
  return e;
}

Batch sample_ensemble(const Ensemble& ensemble, std::size_t n, std::uint64_t seed) {
  if (ensemble.generators.empty()) throw UsageError("ensemble without generators");
  Rng rng(seed);
  std::discrete_distribution<std::size_t> pick(ensemble.weights.begin(), ensemble.weights.end());
  std::vector<std::size_t> counts(ensemble.generators.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[pick(rng.engine())];

  const int out_dim = ensemble.generators.front().arch().output_dim;
  Batch out(n, static_cast<std::size_t>(out_dim));
  std::size_t row = 0;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    if (counts[g] == 0) continue;
    const auto& gen = ensemble.generators[g];
    const Batch fake = nn::forward(gen, sample_latent(counts[g], gen.arch().input_dim, rng.next_seed())).output_f32();
    std::copy(fake.data.begin(), fake.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(row * out.cols));
    row += counts[g];
  }
  return out;
}

Ensemble select_best_ensemble(const std::vector<Ensemble>& candidates, const QualityMetric& metric,
                              std::size_t samples, std::uint64_t seed, std::vector<double>* scores_out) {
  if (candidates.empty()) throw UsageError("no ensembles to select from");
  std::size_t best = 0;
  std::vector<double> scores;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores.push_back(metric(sample_ensemble(candidates[i], samples, seed)));
    if (scores[i] > scores[best]) best = i;
  }
  Ensemble out = candidates[best];
  out.score = scores[best];
  if (scores_out) *scores_out = std::move(scores);
  return out;
}

}  // namespace cellgan::coevo
