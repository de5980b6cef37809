#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cellgan/matrix.hpp"
#include "cellgan/wire.hpp"

namespace cellgan::nn {

enum class Activation : std::uint8_t { Tanh, Sigmoid, Linear };

std::string to_string(Activation a);

/// Shape of a fully connected network. `activations` has one entry per
/// layer (hidden layers first, output layer last).
struct MlpArch {
  int input_dim = 1;
  std::vector<int> hidden_layers;
  int output_dim = 1;
  std::vector<Activation> activations;

  /// Hidden layers use `hidden`, the output layer uses `output`.
  static MlpArch make(int input_dim, std::vector<int> hidden, int output_dim,
                      Activation output, Activation hidden_act = Activation::Tanh);

  /// 64 -> 256 -> 256 -> 784, tanh throughout.
  static MlpArch default_generator();
  /// 784 -> 256 -> 256 -> 1 with a sigmoid output.
  static MlpArch default_discriminator();

  std::size_t layer_count() const { return hidden_layers.size() + 1; }
  int layer_in(std::size_t layer) const;
  int layer_out(std::size_t layer) const;
  void validate() const;

  bool operator==(const MlpArch&) const = default;
};

struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::Linear;
  std::vector<float> weights;  // out_dim x in_dim, row-major
  std::vector<float> biases;   // out_dim

  float& weight(int out, int in) { return weights[static_cast<std::size_t>(out) * in_dim + in]; }
  float weight(int out, int in) const { return weights[static_cast<std::size_t>(out) * in_dim + in]; }

  bool operator==(const DenseLayer&) const = default;
};

/// Parameters of a multilayer perceptron. Every content change draws a new
/// revision number; copies share the revision of their source, so a forward
/// cache stays valid for any copy with identical contents.
class MlpParams {
 public:
  MlpParams() = default;
  explicit MlpParams(MlpArch arch);

  const MlpArch& arch() const { return arch_; }
  std::size_t layer_count() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  /// Mutable access; bumps the revision.
  DenseLayer& mutable_layer(std::size_t i);
  std::span<const DenseLayer> layers() const { return layers_; }
  std::uint64_t revision() const { return revision_; }
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Content equality (revision is ignored).
  bool operator==(const MlpParams& other) const {
    return arch_ == other.arch_ && layers_ == other.layers_;
  }

 private:
  friend class AdamState;
  void touch();

  MlpArch arch_;
  std::vector<DenseLayer> layers_;
  std::uint64_t revision_ = 0;
};

/// Xavier-style uniform init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero.
MlpParams init_params(const MlpArch& arch, std::uint64_t seed);

/// Retained state of a forward pass. Activations are kept in double.
struct ForwardCache {
  std::uint64_t revision = 0;
  std::vector<Matrix<double>> activations;  // [0] = input, [l+1] = output of layer l

  const Matrix<double>& output() const { return activations.back(); }
  /// Output rounded to storage precision.
  Batch output_f32() const { return matrix_cast<float>(activations.back()); }
};

ForwardCache forward(const MlpParams& params, const Batch& batch);

struct LayerGradient {
  std::vector<float> weights;
  std::vector<float> biases;
};
using Gradients = std::vector<LayerGradient>;

struct BackwardResult {
  Gradients params;          // mean over the batch
  Matrix<double> input_grad;  // per-row derivative w.r.t. each input row
};

/// `output_grad` holds, per row, the derivative of that row's loss term with
/// respect to the network output (post-activation). Parameter gradients are
/// averaged over the rows.
BackwardResult backward(const MlpParams& params, const ForwardCache& cache,
                        const Matrix<double>& output_grad);

/// Gradients with the shapes of `params`, all zero.
Gradients zero_gradients(const MlpParams& params);
/// dst += src, elementwise.
void accumulate(Gradients& dst, const Gradients& src);

class AdamState {
 public:
  static constexpr double kDefaultBeta1 = 0.9;
  static constexpr double kDefaultBeta2 = 0.999;
  static constexpr double kDefaultEpsilon = 1e-8;

  AdamState() = default;
  AdamState(const MlpParams& params, double lr, double beta1 = kDefaultBeta1,
            double beta2 = kDefaultBeta2, double epsilon = kDefaultEpsilon);

  double lr = 2e-4;
  double beta1 = kDefaultBeta1;
  double beta2 = kDefaultBeta2;
  double epsilon = kDefaultEpsilon;

  std::uint64_t t() const { return t_; }
  /// Zero moments and step counter, keep hyperparameters.
  void reset();

  /// One bias-corrected Adam update in place.
  void step(MlpParams& params, const Gradients& grads);

 private:
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_w_, v_w_, m_b_, v_b_;
};

/// Free-function form of AdamState::step.
inline void adam_step(MlpParams& params, const Gradients& grads, AdamState& state) {
  state.step(params, grads);
}

/// Layer count, then per layer (out, in) dims and row-major weights
/// followed by biases. Integers big-endian, floats IEEE-754 little-endian.
Bytes serialize_params(const MlpParams& params);
/// Decodes with hidden layers tanh and a linear output layer.
MlpParams deserialize_params(std::span<const std::uint8_t> bytes);
/// Decodes and checks the shapes against `arch`, taking its activations.
MlpParams deserialize_params(std::span<const std::uint8_t> bytes, const MlpArch& arch);

}  // namespace cellgan::nn
