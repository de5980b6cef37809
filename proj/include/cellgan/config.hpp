#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cellgan/coevolution.hpp"
#include "cellgan/data.hpp"
#include "cellgan/grid.hpp"
#include "cellgan/losses.hpp"
#include "cellgan/nn.hpp"

namespace cellgan::config {

enum class LossMode { UniformBce, MustangsRoundRobin };
enum class TransportKind { Inproc, Tcp };
enum class FailurePolicy { Continue, Abort };

/// Everything a run needs. Field names double as JSON keys.
struct RunConfig {
  std::string grid = "2x2";
  int iterations = 200;
  int batch_size = 100;
  double learning_rate = 0.0002;
  int tournament_size = 2;
  int population_per_cell = 1;
  double mixture_sigma = 0.01;
  double lr_sigma = 0.0001;
  double mutation_prob = 0.5;
  int skip_disc_steps = 1;
  int batches_per_epoch = 0;  // 0: sample budget / batch size

  int latent_dim = 0;               // 0: dataset default
  std::vector<int> hidden_layers;   // empty: dataset default

  std::string dataset = "ring";  // ring | grid25 | mnist
  std::string mnist_images;
  std::string mnist_labels;

  LossMode loss_mode = LossMode::UniformBce;
  TransportKind transport = TransportKind::Inproc;
  int base_port = 47000;
  std::vector<std::string> hosts{"127.0.0.1"};
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool deterministic = false;

  int heartbeat_interval_ms = 2000;
  int heartbeat_misses = 3;
  FailurePolicy failure_policy = FailurePolicy::Continue;
  int handshake_timeout_ms = 30000;

  int eval_samples = 1000;  // ensemble samples scored at the end

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  grid::GridSpec grid_spec() const;
  data::DatasetSpec dataset_spec() const;
  coevo::TrainConfig train_config() const;
  nn::MlpArch generator_arch() const;
  nn::MlpArch discriminator_arch() const;
  loss::LossKind loss_for(const grid::CellCoord& cell) const;
  int effective_latent_dim() const;
  std::vector<int> effective_hidden_layers() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Applies the keys of `j` over `base`. Unknown keys and wrong types raise
/// ConfigError naming the key. The result is validated.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});

/// Parses a JSON document; empty or whitespace-only text yields defaults.
RunConfig parse_config(std::string_view text, RunConfig base = {});
std::string serialize_config(const RunConfig& cfg);

/// File contents first, then `overrides` (command-line flags) on top.
RunConfig load_config(std::string_view file_text, const nlohmann::json& overrides);

std::string to_string(LossMode m);
std::string to_string(TransportKind t);
std::string to_string(FailurePolicy p);

}  // namespace cellgan::config
