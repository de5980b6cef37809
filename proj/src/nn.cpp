#include "cellgan/nn.hpp"

#include <atomic>
#include <cmath>
#include <random>

#include "cellgan/error.hpp"

namespace cellgan::nn {

namespace {

std::atomic<std::uint64_t> g_revision{1};

std::uint64_t next_revision() { return g_revision.fetch_add(1, std::memory_order_relaxed); }

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Sigmoid:
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Activation::Linear:
      return x;
  }
  return x;
}

// Derivative expressed through the activation value y = f(x).
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::Tanh:
      return 1.0 - y * y;
    case Activation::Sigmoid:
      return y * (1.0 - y);
    case Activation::Linear:
      return 1.0;
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Linear:
      return "linear";
  }
  return "?";
}

MlpArch MlpArch::make(int input_dim, std::vector<int> hidden, int output_dim, Activation output,
                      Activation hidden_act) {
  MlpArch arch;
  arch.input_dim = input_dim;
  arch.output_dim = output_dim;
  arch.activations.assign(hidden.size(), hidden_act);
  arch.activations.push_back(output);
  arch.hidden_layers = std::move(hidden);
  return arch;
}

MlpArch MlpArch::default_generator() {
  return make(64, {256, 256}, 784, Activation::Tanh);
}

MlpArch MlpArch::default_discriminator() {
  return make(784, {256, 256}, 1, Activation::Sigmoid);
}

int MlpArch::layer_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_layers[layer - 1];
}

int MlpArch::layer_out(std::size_t layer) const {
  return layer + 1 == layer_count() ? output_dim : hidden_layers[layer];
}

void MlpArch::validate() const {
  if (input_dim < 1 || output_dim < 1) throw UsageError("network dimensions must be >= 1");
  for (int h : hidden_layers)
    if (h < 1) throw UsageError("hidden layer width must be >= 1");
  if (activations.size() != layer_count())
    throw UsageError("expected " + std::to_string(layer_count()) + " activations, got " +
                     std::to_string(activations.size()));
}

MlpParams::MlpParams(MlpArch arch) : arch_(std::move(arch)), revision_(next_revision()) {
  arch_.validate();
  layers_.resize(arch_.layer_count());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    layer.in_dim = arch_.layer_in(l);
    layer.out_dim = arch_.layer_out(l);
    layer.activation = arch_.activations[l];
    layer.weights.assign(static_cast<std::size_t>(layer.in_dim) * layer.out_dim, 0.0f);
    layer.biases.assign(layer.out_dim, 0.0f);
  }
}

DenseLayer& MlpParams::mutable_layer(std::size_t i) {
  touch();
  return layers_.at(i);
}

void MlpParams::touch() { revision_ = next_revision(); }

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
  return n;
}

bool MlpParams::all_finite() const {
  for (const auto& l : layers_) {
    for (float w : l.weights)
      if (!std::isfinite(w)) return false;
    for (float b : l.biases)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

MlpParams init_params(const MlpArch& arch, std::uint64_t seed) {
  MlpParams params(arch);
  std::mt19937_64 engine(seed);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto& layer = params.mutable_layer(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (float& w : layer.weights) w = static_cast<float>(dist(engine));
  }
  return params;
}

ForwardCache forward(const MlpParams& params, const Batch& batch) {
  const auto& arch = params.arch();
  if (batch.cols != static_cast<std::size_t>(arch.input_dim))
    throw DimensionError("batch has " + std::to_string(batch.cols) + " features, network expects " +
                         std::to_string(arch.input_dim));

  ForwardCache cache;
  cache.revision = params.revision();
  cache.activations.reserve(params.layer_count() + 1);
  cache.activations.push_back(matrix_cast<double>(batch));

  for (const auto& layer : params.layers()) {
    const auto& in = cache.activations.back();
    Matrix<double> out(in.rows, layer.out_dim);
    for (std::size_t r = 0; r < in.rows; ++r) {
      const double* x = in.data.data() + r * in.cols;
      double* y = out.data.data() + r * out.cols;
      for (int o = 0; o < layer.out_dim; ++o) {
        const float* w = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
        double acc = layer.biases[o];
        for (int i = 0; i < layer.in_dim; ++i) acc += static_cast<double>(w[i]) * x[i];
        y[o] = activate(layer.activation, acc);
      }
    }
    cache.activations.push_back(std::move(out));
  }
  return cache;
}

BackwardResult backward(const MlpParams& params, const ForwardCache& cache,
                        const Matrix<double>& output_grad) {
  if (cache.revision != params.revision() ||
      cache.activations.size() != params.layer_count() + 1)
    throw UsageError("forward cache does not belong to these parameters");
  const auto& out = cache.output();
  if (output_grad.rows != out.rows || output_grad.cols != out.cols)
    throw DimensionError("output gradient shape does not match network output");

  const std::size_t rows = out.rows;
  const double inv_rows = rows > 0 ? 1.0 / static_cast<double>(rows) : 0.0;

  BackwardResult result;
  result.params.resize(params.layer_count());

  // delta = dLoss/d(pre-activation) for the current layer, per row.
  Matrix<double> delta = output_grad;
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    const auto& layer = params.layer(l);
    const auto& y = cache.activations[l + 1];
    const auto& x = cache.activations[l];
    for (std::size_t i = 0; i < delta.data.size(); ++i)
      delta.data[i] *= activation_slope(layer.activation, y.data[i]);

    std::vector<double> gw(layer.weights.size(), 0.0);
    std::vector<double> gb(layer.biases.size(), 0.0);
    Matrix<double> prev(rows, layer.in_dim);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* d = delta.data.data() + r * delta.cols;
      const double* xr = x.data.data() + r * x.cols;
      double* pr = prev.data.data() + r * prev.cols;
      for (int o = 0; o < layer.out_dim; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        gb[o] += dv;
        double* gwo = gw.data() + static_cast<std::size_t>(o) * layer.in_dim;
        const float* w = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
        for (int i = 0; i < layer.in_dim; ++i) {
          gwo[i] += dv * xr[i];
          pr[i] += dv * static_cast<double>(w[i]);
        }
      }
    }

    auto& lg = result.params[l];
    lg.weights.resize(gw.size());
    lg.biases.resize(gb.size());
    for (std::size_t i = 0; i < gw.size(); ++i) lg.weights[i] = static_cast<float>(gw[i] * inv_rows);
    for (std::size_t i = 0; i < gb.size(); ++i) lg.biases[i] = static_cast<float>(gb[i] * inv_rows);
    delta = std::move(prev);
  }
  result.input_grad = std::move(delta);
  return result;
}

Gradients zero_gradients(const MlpParams& params) {
  Gradients g(params.layer_count());
  for (std::size_t l = 0; l < g.size(); ++l) {
    g[l].weights.assign(params.layer(l).weights.size(), 0.0f);
    g[l].biases.assign(params.layer(l).biases.size(), 0.0f);
  }
  return g;
}

void accumulate(Gradients& dst, const Gradients& src) {
  if (dst.size() != src.size()) throw DimensionError("gradient layer count mismatch");
  for (std::size_t l = 0; l < dst.size(); ++l) {
    if (dst[l].weights.size() != src[l].weights.size() || dst[l].biases.size() != src[l].biases.size())
      throw DimensionError("gradient shape mismatch at layer " + std::to_string(l));
    for (std::size_t i = 0; i < dst[l].weights.size(); ++i) dst[l].weights[i] += src[l].weights[i];
    for (std::size_t i = 0; i < dst[l].biases.size(); ++i) dst[l].biases[i] += src[l].biases[i];
  }
}

AdamState::AdamState(const MlpParams& params, double lr_, double beta1_, double beta2_,
                     double epsilon_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), epsilon(epsilon_) {
  for (const auto& layer : params.layers()) {
    m_w_.emplace_back(layer.weights.size(), 0.0);
    v_w_.emplace_back(layer.weights.size(), 0.0);
    m_b_.emplace_back(layer.biases.size(), 0.0);
    v_b_.emplace_back(layer.biases.size(), 0.0);
  }
}

void AdamState::reset() {
  t_ = 0;
  for (auto* moments : {&m_w_, &v_w_, &m_b_, &v_b_})
    for (auto& v : *moments) std::fill(v.begin(), v.end(), 0.0);
}

void AdamState::step(MlpParams& params, const Gradients& grads) {
  if (grads.size() != params.layer_count() || m_w_.size() != params.layer_count())
    throw DimensionError("optimizer state does not match parameter layers");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& layer = params.layer(l);
    if (grads[l].weights.size() != layer.weights.size() || grads[l].biases.size() != layer.biases.size() ||
        m_w_[l].size() != layer.weights.size() || m_b_[l].size() != layer.biases.size())
      throw DimensionError("gradient shape mismatch at layer " + std::to_string(l));
    for (float g : grads[l].weights)
      if (!std::isfinite(g)) throw NumericError("non-finite weight gradient in layer " + std::to_string(l), static_cast<int>(l));
    for (float g : grads[l].biases)
      if (!std::isfinite(g)) throw NumericError("non-finite bias gradient in layer " + std::to_string(l), static_cast<int>(l));
  }

  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  auto update = [&](std::vector<float>& p, const std::vector<float>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + epsilon));
    }
  };
  params.touch();
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto& layer = params.layers_[l];
    update(layer.weights, grads[l].weights, m_w_[l], v_w_[l]);
    update(layer.biases, grads[l].biases, m_b_[l], v_b_[l]);
  }
}

Bytes serialize_params(const MlpParams& params) {
  ByteWriter w;
  w.u32_be(static_cast<std::uint32_t>(params.layer_count()));
  for (const auto& layer : params.layers()) {
    w.u32_be(static_cast<std::uint32_t>(layer.out_dim));
    w.u32_be(static_cast<std::uint32_t>(layer.in_dim));
    for (float f : layer.weights) w.f32_le(f);
    for (float f : layer.biases) w.f32_le(f);
  }
  return w.take();
}

MlpParams deserialize_params(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw DecodeError("empty parameter payload");
  ByteReader r(bytes);
  const std::uint32_t layers = r.u32_be();
  if (layers == 0) throw DecodeError("parameter payload declares zero layers");
  // Every layer needs at least 8 header bytes plus one weight and one bias.
  if (layers > r.remaining() / 16) throw DecodeError("layer count exceeds payload size");

  struct Shape {
    std::uint32_t out, in;
    std::span<const std::uint8_t> body;
  };
  std::vector<Shape> shapes;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint32_t out = r.u32_be();
    const std::uint32_t in = r.u32_be();
    if (out == 0 || in == 0) throw DecodeError("zero dimension in layer " + std::to_string(l));
    const std::uint64_t elems = std::uint64_t{out} * in + out;
    if (elems * 4 > r.remaining())
      throw DecodeError("payload too short for layer " + std::to_string(l) + ": declares " +
                        std::to_string(elems) + " floats, " + std::to_string(r.remaining()) +
                        " bytes remain");
    if (!shapes.empty() && shapes.back().out != in)
      throw DecodeError("layer " + std::to_string(l) + " input width does not match previous output");
    shapes.push_back({out, in, r.bytes(static_cast<std::size_t>(elems * 4))});
  }
  if (!r.done()) throw DecodeError(std::to_string(r.remaining()) + " trailing bytes after parameters");

  std::vector<int> hidden;
  for (std::size_t l = 0; l + 1 < shapes.size(); ++l) hidden.push_back(static_cast<int>(shapes[l].out));
  MlpParams params(MlpArch::make(static_cast<int>(shapes.front().in), hidden,
                                 static_cast<int>(shapes.back().out), Activation::Linear));
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    auto& layer = params.mutable_layer(l);
    ByteReader body(shapes[l].body);
    for (float& f : layer.weights) f = body.f32_le();
    for (float& f : layer.biases) f = body.f32_le();
  }
  return params;
}

MlpParams deserialize_params(std::span<const std::uint8_t> bytes, const MlpArch& arch) {
  MlpParams decoded = deserialize_params(bytes);
  const auto& got = decoded.arch();
  if (got.input_dim != arch.input_dim || got.output_dim != arch.output_dim ||
      got.hidden_layers != arch.hidden_layers)
    throw DecodeError("decoded parameter shapes do not match the expected architecture");
  MlpParams params(arch);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto& layer = params.mutable_layer(l);
    layer.weights = decoded.layer(l).weights;
    layer.biases = decoded.layer(l).biases;
  }
  return params;
}

}  // namespace cellgan::nn
