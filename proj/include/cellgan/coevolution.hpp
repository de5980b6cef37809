#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cellgan/data.hpp"
#include "cellgan/grid.hpp"
#include "cellgan/losses.hpp"
#include "cellgan/nn.hpp"
#include "cellgan/profiler.hpp"
#include "cellgan/random.hpp"

namespace cellgan::coevo {

struct Hyperparams {
  double learning_rate = 2e-4;
};

/// Coevolutionary settings. Defaults follow the published parameter table.
struct TrainConfig {
  int iterations = 200;
  int batch_size = 100;
  int tournament_size = 2;
  int population_per_cell = 1;
  double learning_rate = 2e-4;
  double mixture_sigma = 0.01;
  double lr_sigma = 1e-4;
  double mutation_prob = 0.5;
  int skip_disc_steps = 1;
  /// Training batches drawn per epoch.
  int batches_per_epoch = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kMinLearningRate = 1e-8;
inline constexpr double kMaxLearningRate = 0.1;

/// One grid position: its center pair, the latest copies of the neighbor
/// centers, and the mixture weights over the neighborhood generators.
struct Cell {
  grid::GridSpec grid;
  grid::Neighborhood hood;
  nn::MlpParams center_gen;
  nn::MlpParams center_disc;
  std::map<grid::CellCoord, nn::MlpParams> neighbor_gens;
  std::map<grid::CellCoord, nn::MlpParams> neighbor_discs;
  std::vector<double> mixture_weights;  // aligned with hood.members
  Hyperparams hyper;
  loss::LossKind loss_kind = loss::LossKind::Bce;
  int epoch = 0;
  nn::AdamState gen_opt;
  nn::AdamState disc_opt;
  double center_gen_fitness = 0.0;
  double center_disc_fitness = 0.0;
  Rng rng{0};

  const grid::CellCoord& coord() const { return hood.center; }

  /// Stores the newest copy of a neighbor's center pair. Throws UsageError
  /// for coordinates outside the neighborhood (or the cell itself).
  void absorb(const grid::CellCoord& from, nn::MlpParams gen, nn::MlpParams disc);
  void drop_neighbor(const grid::CellCoord& from);
  /// Center first, then neighbors present, in neighborhood order.
  std::vector<grid::CellCoord> population_coords() const;
  /// Throws when an invariant is broken.
  void validate() const;
};

/// Fresh cell with independently initialized center networks, uniform
/// mixture weights and the configured initial learning rate.
Cell make_cell(const grid::GridSpec& grid, const grid::CellCoord& coord, const nn::MlpArch& gen_arch,
               const nn::MlpArch& disc_arch, loss::LossKind kind, const TrainConfig& cfg);

/// N(0, 1) latent vectors, deterministic in `seed`.
Batch sample_latent(std::size_t rows, int latent_dim, std::uint64_t seed);

/// Mean generator loss of `gen`'s fakes against each discriminator. Lower
/// is fitter.
double evaluate_generator_fitness(const nn::MlpParams& gen, std::span<const nn::MlpParams* const> discs,
                                  loss::LossKind kind, const Batch& real_batch, std::uint64_t latent_seed);

/// Mean discriminator loss of `disc` on the real batch and on the fakes of
/// each generator (all generators share the same latent draw).
double evaluate_discriminator_fitness(const nn::MlpParams& disc, std::span<const nn::MlpParams* const> gens,
                                      loss::LossKind kind, const Batch& real_batch, std::uint64_t latent_seed);

struct PopulationFitness {
  std::vector<double> gen;
  std::vector<double> disc;
};

/// Both fitness vectors for a sub-population in one pass; equal to calling
/// the two functions above for every member.
PopulationFitness evaluate_population(std::span<const nn::MlpParams* const> gens,
                                      std::span<const nn::MlpParams* const> discs, loss::LossKind kind,
                                      const Batch& real_batch, std::uint64_t latent_seed);

/// Draws k candidates uniformly with replacement and returns the index of
/// the lowest fitness among them; ties go to the lower index.
std::size_t tournament_select(std::span<const double> fitness, int k, RandomSource& rng);

template <class T>
const T& tournament_select(std::span<const std::pair<T, double>> candidates, int k, RandomSource& rng) {
  std::vector<double> f;
  f.reserve(candidates.size());
  for (const auto& c : candidates) f.push_back(c.second);
  return candidates[tournament_select(std::span<const double>(f), k, rng)].first;
}

/// With probability mutation_prob adds N(0, lr_sigma) to the learning rate
/// and clamps it to [kMinLearningRate, kMaxLearningRate].
Hyperparams mutate_learning_rate(const Hyperparams& hyper, const TrainConfig& cfg, RandomSource& rng);

/// Adds N(0, sigma) per entry, clamps at 0 and renormalizes; resets to
/// uniform if every entry clamps to 0.
std::vector<double> mutate_mixture_weights(std::span<const double> weights, double sigma, RandomSource& rng);

/// Whether the discriminator trains on batch `b` of an epoch: one of every
/// skip_disc_steps + 1 batches is skipped.
bool trains_discriminator(int batch_index, int skip_disc_steps);

struct EpochStats {
  int epoch = 0;
  double gen_loss = 0.0;   // mean over generator steps
  double disc_loss = 0.0;  // mean over discriminator steps
  int gen_updates = 0;
  int disc_updates = 0;
  double center_gen_fitness = 0.0;
  double center_disc_fitness = 0.0;
  bool degraded = false;  // trained without any neighbor copies
  double train_seconds = 0.0;
  double update_genomes_seconds = 0.0;
  double mutate_seconds = 0.0;
  double max_batch_seconds = 0.0;
};

/// Test seams for the epoch: fitness overrides replace the loss-based
/// evaluation and `train = false` skips the gradient steps.
struct EpochHooks {
  bool train = true;
  std::function<double(const nn::MlpParams&)> gen_fitness;
  std::function<double(const nn::MlpParams&)> disc_fitness;
};

/// One coevolutionary epoch on `cell`:
///   1. tournament-select a generator and a discriminator from the
///      sub-population (center plus neighbor copies);
///   2. mutate the learning rate;
///   3. train the selected pair with Adam over cfg.batches_per_epoch
///      batches, skipping discriminator steps per skip_disc_steps;
///   4. re-evaluate the trained pair, the old center and the neighbor copies;
///   5. make the fittest generator and discriminator the new centers;
///   6. mutate the mixture weights.
/// Routine times are charged to `profiler` when given.
EpochStats train_epoch(Cell& cell, data::DataSource& data, const TrainConfig& cfg,
                       metrics::Profiler* profiler = nullptr, const EpochHooks& hooks = {});

/// A weighted mixture of generators returned as the trained model.
struct Ensemble {
  grid::CellCoord coord;
  std::vector<nn::MlpParams> generators;
  std::vector<double> weights;  // sums to 1
  double score = 0.0;
};

/// The cell's neighborhood generators with its mixture weights, restricted
/// to members present and renormalized.
Ensemble ensemble_of(const Cell& cell);

/// Draws `n` samples, each from generator i with probability weights[i].
Batch sample_ensemble(const Ensemble& ensemble, std::size_t n, std::uint64_t seed);

using QualityMetric = std::function<double(const Batch&)>;

/// Scores each candidate on `samples` draws and returns the best one (ties
/// to the earliest, i.e. lowest rank). Candidates keep their scores in
/// `scores_out` when given.
Ensemble select_best_ensemble(const std::vector<Ensemble>& candidates, const QualityMetric& metric,
                              std::size_t samples, std::uint64_t seed,
                              std::vector<double>* scores_out = nullptr);

}  // namespace cellgan::coevo
