#include "cellgan/config.hpp"

#include <functional>
#include <map>

#include "cellgan/error.hpp"

namespace cellgan::config {

using nlohmann::json;

std::string to_string(LossMode m) { return m == LossMode::UniformBce ? "uniform-bce" : "mustangs-roundrobin"; }
std::string to_string(TransportKind t) { return t == TransportKind::Inproc ? "inproc" : "tcp"; }
std::string to_string(FailurePolicy p) { return p == FailurePolicy::Continue ? "continue" : "abort"; }

namespace {

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key, "out of range");
  return static_cast<int>(x);
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

template <class E>
E get_enum(const json& v, const std::string& key, E a, E b) {
  const auto s = get_string(v, key);
  if (s == to_string(a)) return a;
  if (s == to_string(b)) return b;
  throw ConfigError(key, "expected \"" + to_string(a) + "\" or \"" + to_string(b) + "\", got \"" + s + "\"");
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"grid", [](RunConfig& c, const json& v, const std::string& k) { c.grid = get_string(v, k); }},
      {"iterations", [](RunConfig& c, const json& v, const std::string& k) { c.iterations = get_int(v, k); }},
      {"batch_size", [](RunConfig& c, const json& v, const std::string& k) { c.batch_size = get_int(v, k); }},
      {"learning_rate", [](RunConfig& c, const json& v, const std::string& k) { c.learning_rate = get_double(v, k); }},
      {"tournament_size", [](RunConfig& c, const json& v, const std::string& k) { c.tournament_size = get_int(v, k); }},
      {"population_per_cell",
       [](RunConfig& c, const json& v, const std::string& k) { c.population_per_cell = get_int(v, k); }},
      {"mixture_sigma", [](RunConfig& c, const json& v, const std::string& k) { c.mixture_sigma = get_double(v, k); }},
      {"lr_sigma", [](RunConfig& c, const json& v, const std::string& k) { c.lr_sigma = get_double(v, k); }},
      {"mutation_prob", [](RunConfig& c, const json& v, const std::string& k) { c.mutation_prob = get_double(v, k); }},
      {"skip_disc_steps", [](RunConfig& c, const json& v, const std::string& k) { c.skip_disc_steps = get_int(v, k); }},
      {"batches_per_epoch",
       [](RunConfig& c, const json& v, const std::string& k) { c.batches_per_epoch = get_int(v, k); }},
      {"latent_dim", [](RunConfig& c, const json& v, const std::string& k) { c.latent_dim = get_int(v, k); }},
      {"hidden_layers",
       [](RunConfig& c, const json& v, const std::string& k) {
         if (!v.is_array()) throw ConfigError(k, "expected an array of integers");
         c.hidden_layers.clear();
         for (const auto& x : v) c.hidden_layers.push_back(get_int(x, k));
       }},
      {"dataset", [](RunConfig& c, const json& v, const std::string& k) { c.dataset = get_string(v, k); }},
      {"mnist_images", [](RunConfig& c, const json& v, const std::string& k) { c.mnist_images = get_string(v, k); }},
      {"mnist_labels", [](RunConfig& c, const json& v, const std::string& k) { c.mnist_labels = get_string(v, k); }},
      {"loss_mode",
       [](RunConfig& c, const json& v, const std::string& k) {
         c.loss_mode = get_enum(v, k, LossMode::UniformBce, LossMode::MustangsRoundRobin);
       }},
      {"transport",
       [](RunConfig& c, const json& v, const std::string& k) {
         c.transport = get_enum(v, k, TransportKind::Inproc, TransportKind::Tcp);
       }},
      {"base_port", [](RunConfig& c, const json& v, const std::string& k) { c.base_port = get_int(v, k); }},
      {"hosts",
       [](RunConfig& c, const json& v, const std::string& k) {
         if (!v.is_array()) throw ConfigError(k, "expected an array of host names");
         c.hosts.clear();
         for (const auto& x : v) c.hosts.push_back(get_string(x, k));
       }},
      {"seed",
       [](RunConfig& c, const json& v, const std::string& k) {
         if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
           throw ConfigError(k, "expected a non-negative integer");
         c.seed = v.get<std::uint64_t>();
       }},
      {"output_dir", [](RunConfig& c, const json& v, const std::string& k) { c.output_dir = get_string(v, k); }},
      {"deterministic", [](RunConfig& c, const json& v, const std::string& k) { c.deterministic = get_bool(v, k); }},
      {"heartbeat_interval_ms",
       [](RunConfig& c, const json& v, const std::string& k) { c.heartbeat_interval_ms = get_int(v, k); }},
      {"heartbeat_misses", [](RunConfig& c, const json& v, const std::string& k) { c.heartbeat_misses = get_int(v, k); }},
      {"failure_policy",
       [](RunConfig& c, const json& v, const std::string& k) {
         c.failure_policy = get_enum(v, k, FailurePolicy::Continue, FailurePolicy::Abort);
       }},
      {"handshake_timeout_ms",
       [](RunConfig& c, const json& v, const std::string& k) { c.handshake_timeout_ms = get_int(v, k); }},
      {"eval_samples", [](RunConfig& c, const json& v, const std::string& k) { c.eval_samples = get_int(v, k); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    grid::parse_grid(grid);
  } catch (const UsageError& e) {
    throw ConfigError("grid", e.what());
  }
  require(iterations >= 1, "iterations", "must be at least 1");
  require(batch_size >= 1, "batch_size", "must be at least 1");
  require(learning_rate >= 0.0 && learning_rate <= coevo::kMaxLearningRate, "learning_rate", "must lie in [0, 0.1]");
  require(tournament_size >= 1, "tournament_size", "must be at least 1");
  require(population_per_cell == 1, "population_per_cell", "only 1 is supported");
  require(mixture_sigma >= 0.0, "mixture_sigma", "must be non-negative");
  require(lr_sigma >= 0.0, "lr_sigma", "must be non-negative");
  require(mutation_prob >= 0.0 && mutation_prob <= 1.0, "mutation_prob", "must lie in [0, 1]");
  require(skip_disc_steps >= 0, "skip_disc_steps", "must be non-negative");
  require(batches_per_epoch >= 0, "batches_per_epoch", "must be non-negative");
  require(latent_dim >= 0, "latent_dim", "must be non-negative");
  for (int h : hidden_layers) require(h >= 1, "hidden_layers", "layer widths must be positive");
  require(dataset == "ring" || dataset == "grid25" || dataset == "mnist", "dataset",
          "expected ring, grid25 or mnist, got \"" + dataset + "\"");
  require(dataset != "mnist" || !mnist_images.empty(), "mnist_images", "required for the mnist dataset");
  require(base_port >= 1 && base_port <= 65535, "base_port", "must lie in [1, 65535]");
  require(!hosts.empty(), "hosts", "must name at least one host");
  require(heartbeat_interval_ms >= 1, "heartbeat_interval_ms", "must be positive");
  require(heartbeat_misses >= 1, "heartbeat_misses", "must be at least 1");
  require(handshake_timeout_ms >= 1, "handshake_timeout_ms", "must be positive");
  require(eval_samples >= 1, "eval_samples", "must be at least 1");
  const auto g = grid_spec();
  require(base_port + g.cells() <= 65535, "base_port", "port range exceeds 65535 for this grid");
}

grid::GridSpec RunConfig::grid_spec() const { return grid::parse_grid(grid); }

data::DatasetSpec RunConfig::dataset_spec() const {
  if (dataset == "grid25") return data::DatasetSpec::grid2d();
  if (dataset == "mnist") return data::DatasetSpec::mnist(mnist_images, mnist_labels);
  return data::DatasetSpec::ring2d();
}

coevo::TrainConfig RunConfig::train_config() const {
  coevo::TrainConfig t;
  t.iterations = iterations;
  t.batch_size = batch_size;
  t.tournament_size = tournament_size;
  t.population_per_cell = population_per_cell;
  t.learning_rate = learning_rate;
  t.mixture_sigma = mixture_sigma;
  t.lr_sigma = lr_sigma;
  t.mutation_prob = mutation_prob;
  t.skip_disc_steps = skip_disc_steps;
  t.batches_per_epoch = batches_per_epoch > 0
                            ? batches_per_epoch
                            : std::max(1, static_cast<int>(dataset_spec().sample_budget) / batch_size);
  t.seed = seed;
  return t;
}

int RunConfig::effective_latent_dim() const {
  if (latent_dim > 0) return latent_dim;
  return dataset == "mnist" ? 64 : 2;
}

std::vector<int> RunConfig::effective_hidden_layers() const {
  if (!hidden_layers.empty()) return hidden_layers;
  return dataset == "mnist" ? std::vector<int>{256, 256} : std::vector<int>{32, 32};
}

nn::MlpArch RunConfig::generator_arch() const {
  const int out = dataset_spec().dim();
  // Images live in [-1, 1]; synthetic points are unbounded.
  const auto act = dataset == "mnist" ? nn::Activation::Tanh : nn::Activation::Linear;
  return nn::MlpArch::make(effective_latent_dim(), effective_hidden_layers(), out, act);
}

nn::MlpArch RunConfig::discriminator_arch() const {
  return nn::MlpArch::make(dataset_spec().dim(), effective_hidden_layers(), 1, nn::Activation::Sigmoid);
}

loss::LossKind RunConfig::loss_for(const grid::CellCoord& cell) const {
  if (loss_mode == LossMode::UniformBce) return loss::LossKind::Bce;
  static constexpr loss::LossKind kCycle[] = {loss::LossKind::Bce, loss::LossKind::Heuristic,
                                              loss::LossKind::LeastSquares};
  const auto g = grid_spec();
  return kCycle[(cell.row * g.cols + cell.col) % 3];
}

json to_json(const RunConfig& c) {
  return json{
      {"grid", c.grid},
      {"iterations", c.iterations},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"tournament_size", c.tournament_size},
      {"population_per_cell", c.population_per_cell},
      {"mixture_sigma", c.mixture_sigma},
      {"lr_sigma", c.lr_sigma},
      {"mutation_prob", c.mutation_prob},
      {"skip_disc_steps", c.skip_disc_steps},
      {"batches_per_epoch", c.batches_per_epoch},
      {"latent_dim", c.latent_dim},
      {"hidden_layers", c.hidden_layers},
      {"dataset", c.dataset},
      {"mnist_images", c.mnist_images},
      {"mnist_labels", c.mnist_labels},
      {"loss_mode", to_string(c.loss_mode)},
      {"transport", to_string(c.transport)},
      {"base_port", c.base_port},
      {"hosts", c.hosts},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"deterministic", c.deterministic},
      {"heartbeat_interval_ms", c.heartbeat_interval_ms},
      {"heartbeat_misses", c.heartbeat_misses},
      {"failure_policy", to_string(c.failure_policy)},
      {"handshake_timeout_ms", c.handshake_timeout_ms},
      {"eval_samples", c.eval_samples},
  };
}

RunConfig from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown configuration key");
    it->second(base, value, key);
  }
  base.validate();
  return base;
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    base.validate();
    return base;
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return from_json(j, std::move(base));
}

std::string serialize_config(const RunConfig& cfg) { return to_json(cfg).dump(2); }

RunConfig load_config(std::string_view file_text, const json& overrides) {
  RunConfig base;
  if (file_text.find_first_not_of(" \t\r\n") != std::string_view::npos) {
    json j;
    try {
      j = json::parse(file_text);
    } catch (const json::parse_error& e) {
      throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
    // Flags may repair a file value, so validation waits for the merge.
    for (const auto& [key, value] : overrides.items()) j[key] = value;
    return from_json(j);
  }
  return overrides.is_null() ? parse_config("") : from_json(overrides);
}

}  // namespace cellgan::config
