#include "cellgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "cellgan/error.hpp"

namespace cellgan::data {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Ring2d:
      return "ring";
    case DatasetKind::Grid2d:
      return "grid25";
    case DatasetKind::MnistIdx:
      return "mnist";
  }
  return "?";
}

DatasetSpec DatasetSpec::ring2d(double radius, double stddev, int modes) {
  DatasetSpec s;
  s.kind = DatasetKind::Ring2d;
  s.stddev = stddev;
  for (int k = 0; k < modes; ++k) {
    const double a = 2.0 * std::numbers::pi * k / modes;
    s.centers.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return s;
}

DatasetSpec DatasetSpec::grid2d(double stddev) {
  DatasetSpec s;
  s.kind = DatasetKind::Grid2d;
  s.stddev = stddev;
  for (int x = -4; x <= 4; x += 2)
    for (int y = -4; y <= 4; y += 2) s.centers.push_back({double(x), double(y)});
  return s;
}

DatasetSpec DatasetSpec::mnist(std::string images, std::string labels) {
  DatasetSpec s;
  s.kind = DatasetKind::MnistIdx;
  s.mnist_images = std::move(images);
  s.mnist_labels = std::move(labels);
  s.sample_budget = 60000;
  return s;
}

namespace {

void fill_synthetic(const DatasetSpec& spec, Batch& out, std::size_t first, std::size_t n, Rng& rng) {
  for (std::size_t i = first; i < first + n; ++i) {
    const auto& c = spec.centers[rng.index(spec.centers.size())];
    out(i, 0) = static_cast<float>(c[0] + rng.normal(spec.stddev));
    out(i, 1) = static_cast<float>(c[1] + rng.normal(spec.stddev));
  }
}

std::shared_ptr<const Batch> load_images(const std::string& path) {
  static std::mutex mu;
  static std::map<std::string, std::weak_ptr<const Batch>> cache;
  std::lock_guard lock(mu);
  if (auto hit = cache[path].lock()) return hit;
  auto images = std::make_shared<const Batch>(mnist_to_batch(load_idx(path)));
  cache[path] = images;
  return images;
}

}  // namespace

Batch mnist_to_batch(const IdxTensor& images) {
  if (images.dims.size() != 3) throw DecodeError("MNIST images must be a 3-D IDX tensor");
  const std::size_t n = images.dims[0];
  const std::size_t width = std::size_t{images.dims[1]} * images.dims[2];
  Batch out(n, width);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<float>(images.data[i] / 127.5 - 1.0);
  return out;
}

Batch sample_dataset(const DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw UsageError("sample count must be >= 1");
  Rng rng(seed);
  if (spec.synthetic()) {
    if (spec.centers.empty()) throw UsageError("synthetic dataset without mode centers");
    Batch out(n, 2);
    fill_synthetic(spec, out, 0, n, rng);
    return out;
  }
  const auto images = load_images(spec.mnist_images);
  Batch out(n, images->cols);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = images->row(rng.index(images->rows));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

SyntheticSource::SyntheticSource(DatasetSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed) {
  if (spec_.centers.empty()) throw UsageError("synthetic dataset without mode centers");
}

Batch SyntheticSource::next_batch(std::size_t rows) {
  Batch out(rows, 2);
  fill_synthetic(spec_, out, 0, rows, rng_);
  return out;
}

ImageSource::ImageSource(std::shared_ptr<const Batch> images, std::uint64_t seed)
    : images_(std::move(images)), rng_(seed) {
  if (!images_ || images_->rows == 0) throw UsageError("image source needs at least one image");
  order_.resize(images_->rows);
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  reshuffle();
}

void ImageSource::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_.engine());
  pos_ = 0;
}

Batch ImageSource::next_batch(std::size_t rows) {
  Batch out(rows, images_->cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (pos_ == order_.size()) reshuffle();
    auto src = images_->row(order_[pos_++]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::unique_ptr<DataSource> make_source(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.synthetic()) return std::make_unique<SyntheticSource>(spec, seed);
  return std::make_unique<ImageSource>(load_images(spec.mnist_images), seed);
}

QualityScore quality(const Batch& samples, const DatasetSpec& spec) {
  if (!spec.synthetic()) throw UsageError("quality metric is only defined for synthetic mixtures");
  if (samples.cols != 2) throw DimensionError("quality expects 2-column samples");
  const std::size_t modes = spec.centers.size();
  QualityScore q;
  q.total_modes = static_cast<int>(modes);
  if (samples.rows == 0 || modes == 0) return q;

  const double radius = 3.0 * spec.stddev;
  std::vector<std::size_t> hist(modes, 0);
  std::size_t good = 0;
  for (std::size_t i = 0; i < samples.rows; ++i) {
    std::size_t best = 0;
    double best_d2 = INFINITY;
    for (std::size_t k = 0; k < modes; ++k) {
      const double dx = samples(i, 0) - spec.centers[k][0];
      const double dy = samples(i, 1) - spec.centers[k][1];
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    if (std::sqrt(best_d2) <= radius) {
      ++hist[best];
      ++good;
    }
  }

  const double own_threshold = 0.2 / static_cast<double>(modes) * static_cast<double>(samples.rows);
  for (auto h : hist)
    if (h > 0 && static_cast<double>(h) >= own_threshold) ++q.modes_covered;
  q.high_quality_ratio = static_cast<double>(good) / static_cast<double>(samples.rows);
  if (good > 0) {
    double l1 = 0.0;
    for (auto h : hist)
      l1 += std::abs(static_cast<double>(h) / static_cast<double>(good) - 1.0 / static_cast<double>(modes));
    q.tvd = std::clamp(0.5 * l1, 0.0, 1.0);
  }
  return q;
}

}  // namespace cellgan::data
