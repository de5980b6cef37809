#include "doctest.h"

#include <functional>
#include <random>

#include "cellgan/config.hpp"

using namespace cellgan;
using config::RunConfig;

namespace {

std::string key_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("empty configuration yields the published defaults") {
  for (const char* text : {"", "  \n", "{}"}) {
    const auto c = config::parse_config(text);
    CHECK(c.iterations == 200);
    CHECK(c.batch_size == 100);
    CHECK(c.learning_rate == 0.0002);
    CHECK(c.tournament_size == 2);
    CHECK(c.mixture_sigma == 0.01);
    CHECK(c.lr_sigma == 0.0001);
    CHECK(c.mutation_prob == 0.5);
    CHECK(c.skip_disc_steps == 1);
    CHECK(c.grid == "2x2");
    CHECK(c.grid_spec() == grid::GridSpec{2, 2});
  }
  const auto tc = config::parse_config("").train_config();
  CHECK(tc.iterations == 200);
  CHECK(tc.batch_size == 100);
  CHECK(tc.learning_rate == 0.0002);
}

TEST_CASE("validation errors name the offending key") {
  CHECK(key_of([] { config::parse_config(R"({"grid": "3x0"})"); }) == "grid");
  CHECK(key_of([] { config::parse_config(R"({"grid": "banana"})"); }) == "grid");
  CHECK(key_of([] { config::parse_config(R"({"iterations": 0})"); }) == "iterations");
  CHECK(key_of([] { config::parse_config(R"({"batch_size": -1})"); }) == "batch_size");
  CHECK(key_of([] { config::parse_config(R"({"mutation_prob": 1.5})"); }) == "mutation_prob");
  CHECK(key_of([] { config::parse_config(R"({"dataset": "cifar"})"); }) == "dataset");
  CHECK(key_of([] { config::parse_config(R"({"dataset": "mnist"})"); }) == "mnist_images");
  CHECK(key_of([] { config::parse_config(R"({"base_port": 70000})"); }) == "base_port");
  CHECK(key_of([] { config::parse_config(R"({"heartbeat_misses": 0})"); }) == "heartbeat_misses");
  CHECK(key_of([] { config::parse_config(R"({"hidden_layers": [8, 0]})"); }) == "hidden_layers");
}

TEST_CASE("type errors and unknown keys are rejected by name") {
  CHECK(key_of([] { config::parse_config(R"({"iterations": "five"})"); }) == "iterations");
  CHECK(key_of([] { config::parse_config(R"({"iterations": 2.5})"); }) == "iterations");
  CHECK(key_of([] { config::parse_config(R"({"deterministic": 1})"); }) == "deterministic");
  CHECK(key_of([] { config::parse_config(R"({"loss_mode": "wasserstein"})"); }) == "loss_mode");
  CHECK(key_of([] { config::parse_config(R"({"transport": "mpi"})"); }) == "transport");
  CHECK(key_of([] { config::parse_config(R"({"failure_policy": "retry"})"); }) == "failure_policy");
  CHECK(key_of([] { config::parse_config(R"({"seed": -3})"); }) == "seed");
  CHECK(key_of([] { config::parse_config(R"({"itterations": 5})"); }) == "itterations");
  CHECK(key_of([] { config::parse_config("[1, 2]"); }) == "<root>");
  CHECK(key_of([] { config::parse_config("{not json"); }) == "<root>");
}

TEST_CASE("flags override file values") {
  const std::string file = R"({"iterations": 200, "grid": "3x3", "seed": 9})";
  const auto c = config::load_config(file, {{"iterations", 5}});
  CHECK(c.iterations == 5);
  CHECK(c.grid == "3x3");
  CHECK(c.seed == 9);
  CHECK(config::load_config("", {{"iterations", 5}}).iterations == 5);
  CHECK(config::load_config("", nullptr).iterations == 200);
  // A flag can repair an invalid file value.
  CHECK(config::load_config(R"({"grid": "3x0"})", {{"grid", "1x2"}}).grid == "1x2");
  CHECK(key_of([&] { config::load_config(file, {{"grid", "0x1"}}); }) == "grid");
  CHECK(key_of([&] { config::load_config(file, {{"bogus", 1}}); }) == "bogus");
}

TEST_CASE("serialize(parse(x)) is idempotent") {
  std::mt19937 rng(11);
  const std::vector<std::string> grids{"1x1", "2x2", "3x4", "6x6"};
  const std::vector<std::string> datasets{"ring", "grid25"};
  for (int trial = 0; trial < 100; ++trial) {
    RunConfig c;
    c.grid = grids[rng() % grids.size()];
    c.iterations = 1 + static_cast<int>(rng() % 1000);
    c.batch_size = 1 + static_cast<int>(rng() % 500);
    c.learning_rate = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
    c.mixture_sigma = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    c.mutation_prob = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    c.dataset = datasets[rng() % datasets.size()];
    c.hidden_layers = {1 + static_cast<int>(rng() % 64)};
    c.seed = (static_cast<std::uint64_t>(rng()) << 32) | rng();
    c.loss_mode = rng() % 2 ? config::LossMode::UniformBce : config::LossMode::MustangsRoundRobin;
    c.transport = rng() % 2 ? config::TransportKind::Inproc : config::TransportKind::Tcp;
    c.failure_policy = rng() % 2 ? config::FailurePolicy::Continue : config::FailurePolicy::Abort;
    c.deterministic = rng() % 2;
    c.hosts = {"a", "b"};
    const auto once = config::serialize_config(c);
    const auto parsed = config::parse_config(once);
    CHECK(config::serialize_config(parsed) == once);
    CHECK(parsed.seed == c.seed);
    CHECK(parsed.learning_rate == c.learning_rate);
  }
}

TEST_CASE("loss assignment") {
  RunConfig c;
  c.grid = "3x3";
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) CHECK(c.loss_for({r, col}) == loss::LossKind::Bce);
  c.loss_mode = config::LossMode::MustangsRoundRobin;
  CHECK(c.loss_for({0, 0}) == loss::LossKind::Bce);
  CHECK(c.loss_for({0, 1}) == loss::LossKind::Heuristic);
  CHECK(c.loss_for({0, 2}) == loss::LossKind::LeastSquares);
  CHECK(c.loss_for({1, 0}) == loss::LossKind::Bce);
  CHECK(c.loss_for({2, 2}) == loss::LossKind::LeastSquares);
}

TEST_CASE("derived architectures follow the dataset") {
  RunConfig c;
  const auto g = c.generator_arch();
  CHECK(g.input_dim == 2);
  CHECK(g.hidden_layers == std::vector<int>{32, 32});
  CHECK(g.output_dim == 2);
  CHECK(g.activations.back() == nn::Activation::Linear);
  const auto d = c.discriminator_arch();
  CHECK(d.input_dim == 2);
  CHECK(d.output_dim == 1);
  CHECK(d.activations.back() == nn::Activation::Sigmoid);
  CHECK(c.train_config().batches_per_epoch == 50);
  c.hidden_layers = {16};
  c.latent_dim = 4;
  CHECK(c.generator_arch().input_dim == 4);
  CHECK(c.generator_arch().hidden_layers == std::vector<int>{16});
  c.batches_per_epoch = 7;
  CHECK(c.train_config().batches_per_epoch == 7);
}
