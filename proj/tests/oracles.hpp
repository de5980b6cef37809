#pragma once

// Independent reference computations used to freeze expected values. Nothing
// here calls into the code paths it checks.

#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "cellgan/grid.hpp"
#include "cellgan/nn.hpp"

namespace oracle {

/// Plain double-precision MLP: per layer W (out x in), b (out), activation.
struct RefLayer {
  int in = 0, out = 0;
  std::vector<double> w, b;
  cellgan::nn::Activation act;
};
using RefNet = std::vector<RefLayer>;

inline RefNet from_params(const cellgan::nn::MlpParams& p) {
  RefNet net;
  for (const auto& l : p.layers())
    net.push_back({l.in_dim, l.out_dim, std::vector<double>(l.weights.begin(), l.weights.end()),
                   std::vector<double>(l.biases.begin(), l.biases.end()), l.activation});
  return net;
}

inline double ref_act(cellgan::nn::Activation a, double x) {
  using cellgan::nn::Activation;
  if (a == Activation::Tanh) return std::tanh(x);
  if (a == Activation::Sigmoid) return 1.0 / (1.0 + std::exp(-x));
  return x;
}

inline std::vector<double> ref_forward_row(const RefNet& net, std::vector<double> x) {
  for (const auto& l : net) {
    std::vector<double> y(l.out);
    for (int o = 0; o < l.out; ++o) {
      double s = l.b[o];
      for (int i = 0; i < l.in; ++i) s += l.w[o * l.in + i] * x[i];
      y[o] = ref_act(l.act, s);
    }
    x = std::move(y);
  }
  return x;
}

/// Mean over rows of sum_k coeff[r][k] * output[r][k]: a linear probe of the
/// output whose output-gradient is exactly `coeff`.
inline double probe_loss(const RefNet& net, const std::vector<std::vector<double>>& rows,
                         const std::vector<std::vector<double>>& coeff) {
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto y = ref_forward_row(net, rows[r]);
    for (std::size_t k = 0; k < y.size(); ++k) total += coeff[r][k] * y[k];
  }
  return total / static_cast<double>(rows.size());
}

/// Central finite differences of probe_loss w.r.t. every weight and bias,
/// in layer order, weights before biases.
inline std::vector<std::vector<double>> fd_gradients(RefNet net, const std::vector<std::vector<double>>& rows,
                                                     const std::vector<std::vector<double>>& coeff,
                                                     double h = 1e-5) {
  std::vector<std::vector<double>> out;
  for (auto& l : net) {
    std::vector<double> g;
    for (auto* vec : {&l.w, &l.b}) {
      for (double& v : *vec) {
        const double saved = v;
        v = saved + h;
        const double up = probe_loss(net, rows, coeff);
        v = saved - h;
        const double down = probe_loss(net, rows, coeff);
        v = saved;
        g.push_back((up - down) / (2 * h));
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Scalar Adam with bias correction, written out longhand.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

/// Brute-force neighborhood: every cell reachable by one step in the four
/// directions (plus itself), computed as a set by direct enumeration of
/// offsets with explicit modular arithmetic.
inline std::set<cellgan::grid::CellCoord> brute_neighborhood(int rows, int cols, cellgan::grid::CellCoord c) {
  std::set<cellgan::grid::CellCoord> s;
  const int d[5][2] = {{0, 0}, {-1, 0}, {0, 1}, {1, 0}, {0, -1}};
  for (auto& o : d) s.insert({(c.row + o[0] + rows * 4) % rows, (c.col + o[1] + cols * 4) % cols});
  return s;
}

/// Torus hop distance between two cells.
inline int torus_distance(int rows, int cols, cellgan::grid::CellCoord a, cellgan::grid::CellCoord b) {
  const int dr = std::abs(a.row - b.row), dc = std::abs(a.col - b.col);
  return std::min(dr, rows - dr) + std::min(dc, cols - dc);
}

}  // namespace oracle
