#include "cellgan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cellgan/error.hpp"

namespace cellgan::loss {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
// 1 - p clamped directly, so ln of it never drops below ln(kProbClamp).
double complement(double p) { return std::clamp(1.0 - p, kProbClamp, 1.0 - kProbClamp); }

void require_rows(std::span<const double> v, const char* what) {
  if (v.empty()) throw UsageError(std::string("empty batch for ") + what);
}

template <class F>
double mean_of(std::span<const double> v, F&& f) {
  double acc = 0.0;
  for (double p : v) acc += f(p);
  return acc / static_cast<double>(v.size());
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Bce:
      return "bce";
    case LossKind::Heuristic:
      return "heuristic";
    case LossKind::LeastSquares:
      return "least_squares";
  }
  return "?";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  if (name == "bce") return LossKind::Bce;
  if (name == "heuristic") return LossKind::Heuristic;
  if (name == "least_squares") return LossKind::LeastSquares;
  return std::nullopt;
}

double discriminator_loss(LossKind kind, std::span<const double> d_on_real,
                          std::span<const double> d_on_fake) {
  require_rows(d_on_real, "real samples");
  require_rows(d_on_fake, "fake samples");
  if (kind == LossKind::LeastSquares) {
    return mean_of(d_on_real, [](double p) { return (p - 1.0) * (p - 1.0); }) +
           mean_of(d_on_fake, [](double p) { return p * p; });
  }
  return mean_of(d_on_real, [](double p) { return -std::log(clamp_prob(p)); }) +
         mean_of(d_on_fake, [](double p) { return -std::log(complement(p)); });
}

double generator_loss(LossKind kind, std::span<const double> d_on_fake) {
  require_rows(d_on_fake, "fake samples");
  switch (kind) {
    case LossKind::Bce:
      return mean_of(d_on_fake, [](double p) { return std::log(complement(p)); }) -
             std::log(kProbClamp);
    case LossKind::Heuristic:
      return mean_of(d_on_fake, [](double p) { return -std::log(clamp_prob(p)); });
    case LossKind::LeastSquares:
      return mean_of(d_on_fake, [](double p) { return (p - 1.0) * (p - 1.0); });
  }
  return 0.0;
}

// Log-based derivatives are evaluated at the clamped probability so they
// stay finite at saturated outputs.
DiscriminatorLossGrad discriminator_loss_gradient(LossKind kind, std::span<const double> d_on_real,
                                                  std::span<const double> d_on_fake) {
  require_rows(d_on_real, "real samples");
  require_rows(d_on_fake, "fake samples");
  DiscriminatorLossGrad g;
  g.real.reserve(d_on_real.size());
  g.fake.reserve(d_on_fake.size());
  if (kind == LossKind::LeastSquares) {
    for (double p : d_on_real) g.real.push_back(2.0 * (p - 1.0));
    for (double p : d_on_fake) g.fake.push_back(2.0 * p);
  } else {
    for (double p : d_on_real) g.real.push_back(-1.0 / clamp_prob(p));
    for (double p : d_on_fake) g.fake.push_back(1.0 / complement(p));
  }
  return g;
}

std::vector<double> generator_loss_gradient(LossKind kind, std::span<const double> d_on_fake) {
  require_rows(d_on_fake, "fake samples");
  std::vector<double> g;
  g.reserve(d_on_fake.size());
  for (double p : d_on_fake) {
    switch (kind) {
      case LossKind::Bce:
        g.push_back(-1.0 / complement(p));
        break;
      case LossKind::Heuristic:
        g.push_back(-1.0 / clamp_prob(p));
        break;
      case LossKind::LeastSquares:
        g.push_back(2.0 * (p - 1.0));
        break;
    }
  }
  return g;
}

}  // namespace cellgan::loss
