#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cellgan/idx.hpp"
#include "cellgan/matrix.hpp"
#include "cellgan/random.hpp"

namespace cellgan::data {

enum class DatasetKind { Ring2d, Grid2d, MnistIdx };

std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Ring2d;
  std::vector<std::array<double, 2>> centers;  // synthetic sets only
  double stddev = 0.05;
  /// Samples per epoch; determines how many batches one epoch draws.
  std::size_t sample_budget = 5000;
  std::string mnist_images;
  std::string mnist_labels;

  /// Eight Gaussians evenly spaced on a circle.
  static DatasetSpec ring2d(double radius = 2.0, double stddev = 0.05, int modes = 8);
  /// 5 x 5 Gaussians on {-4, -2, 0, 2, 4}^2.
  static DatasetSpec grid2d(double stddev = 0.05);
  static DatasetSpec mnist(std::string images, std::string labels = {});

  bool synthetic() const { return kind != DatasetKind::MnistIdx; }
  /// Feature width of one sample.
  int dim() const { return synthetic() ? 2 : 784; }
};

/// Deterministic draw of `n` samples. Synthetic sets pick a mode uniformly
/// and add isotropic Gaussian noise; MNIST picks rows uniformly and scales
/// pixels to [-1, 1].
Batch sample_dataset(const DatasetSpec& spec, std::size_t n, std::uint64_t seed);

/// Images as an (n x 784) batch scaled to [-1, 1].
Batch mnist_to_batch(const IdxTensor& images);

/// Infinite stream of training batches owned by one cell.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual Batch next_batch(std::size_t rows) = 0;
  virtual int dim() const = 0;
};

class SyntheticSource final : public DataSource {
 public:
  SyntheticSource(DatasetSpec spec, std::uint64_t seed);
  Batch next_batch(std::size_t rows) override;
  int dim() const override { return 2; }

 private:
  DatasetSpec spec_;
  Rng rng_;
};

/// Walks a shuffled permutation of the images, reshuffling after each pass.
class ImageSource final : public DataSource {
 public:
  ImageSource(std::shared_ptr<const Batch> images, std::uint64_t seed);
  Batch next_batch(std::size_t rows) override;
  int dim() const override { return static_cast<int>(images_->cols); }

 private:
  void reshuffle();

  std::shared_ptr<const Batch> images_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// Builds the per-cell source. MNIST images are loaded once per process and
/// shared; throws IoError when the files are missing.
std::unique_ptr<DataSource> make_source(const DatasetSpec& spec, std::uint64_t seed);

struct QualityScore {
  int modes_covered = 0;
  int total_modes = 0;
  double high_quality_ratio = 0.0;
  double tvd = 1.0;

  /// Scalar used for ranking ensembles: coverage first, then balance.
  double score() const { return modes_covered - tvd; }
};

/// Mode-collapse diagnostics for a synthetic dataset. A sample is
/// high quality when it lies within 3 std of its nearest mode; a mode is
/// covered when it owns at least (0.2 / modes) * n high-quality samples;
/// tvd is half the L1 distance between the high-quality mode histogram and
/// uniform (1 when there are no high-quality samples). Throws UsageError
/// for MNIST.
QualityScore quality(const Batch& samples, const DatasetSpec& spec);

}  // namespace cellgan::data
