#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cellgan::loss {

/// Measuring-function variants of the adversarial objective.
enum class LossKind : std::uint8_t {
  Bce,           // original minmax, phi = log
  Heuristic,     // non-saturating generator, -log D(G(z))
  LeastSquares,  // squared distance to the target labels
};

std::string to_string(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view name);

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

/// BCE: mean(-ln d_real) + mean(-ln(1 - d_fake)).
/// LEAST_SQUARES: mean((d_real - 1)^2) + mean(d_fake^2).
/// HEURISTIC only changes the generator side; the discriminator uses BCE.
double discriminator_loss(LossKind kind, std::span<const double> d_on_real,
                          std::span<const double> d_on_fake);

/// Lower is better for the generator in every variant.
///   BCE:           mean(ln(1 - d_fake)) - ln(kProbClamp), the minmax term
///                  shifted by its lower bound so the value is non-negative.
///   HEURISTIC:     mean(-ln d_fake)
///   LEAST_SQUARES: mean((d_fake - 1)^2)
double generator_loss(LossKind kind, std::span<const double> d_on_fake);

/// Per-row derivatives of the discriminator loss with respect to the
/// discriminator output. Row i holds m * dL/dp_i, i.e. the derivative of
/// that row's summand; nn::backward applies the 1/m of the mean.
struct DiscriminatorLossGrad {
  std::vector<double> real;
  std::vector<double> fake;
};
DiscriminatorLossGrad discriminator_loss_gradient(LossKind kind, std::span<const double> d_on_real,
                                                  std::span<const double> d_on_fake);

/// Per-row derivative of the generator loss with respect to D(G(z)).
std::vector<double> generator_loss_gradient(LossKind kind, std::span<const double> d_on_fake);

}  // namespace cellgan::loss
