#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace cellgan {

/// Source of the random decisions made by the evolutionary operators.
/// Tests substitute scripted sources to force particular draws.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  /// Uniform index in [0, n).
  virtual std::size_t index(std::size_t n) = 0;
  /// Uniform real in [0, 1).
  virtual double uniform() = 0;
  /// Draw from Normal(0, sigma).
  virtual double normal(double sigma) = 0;
};

class Rng final : public RandomSource {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::size_t index(std::size_t n) override {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  double uniform() override { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double sigma) override {
    if (sigma == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(engine_);
  }
  std::uint64_t next_seed() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Per-cell stream seed: run seed xor a hash of the cell coordinate, so
/// results do not depend on which worker hosts the cell.
inline std::uint64_t cell_seed(std::uint64_t seed, int row, int col) {
  const auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row)) << 32) |
                   static_cast<std::uint32_t>(col);
  return seed ^ splitmix64(key);
}

}  // namespace cellgan
