#pragma once

// Straight-line reference implementations used as test oracles. They share
// no code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fedjets/fl/experiment.hpp"
#include "fedjets/nn/net.hpp"

namespace oracle {

using fedjets::nn::Activation;
using fedjets::nn::NetSpec;

// Logits of one input row. Layer l: W [out x in] row-major, then bias[out].
inline std::vector<double> forward_row(const NetSpec& spec, const std::vector<double>& p,
                                       const std::vector<double>& x) {
  std::vector<double> a = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
    const std::size_t in = spec.layer_dims[l], out = spec.layer_dims[l + 1];
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = p[off + in * out + o];
      for (std::size_t i = 0; i < in; ++i) s += p[off + o * in + i] * a[i];
      z[o] = s;
    }
    off += in * out + out;
    if (l + 2 < spec.layer_dims.size() && spec.activations[l] == Activation::relu)
      for (auto& v : z) v = std::max(0.0, v);
    a = z;
  }
  return a;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - m);
  for (auto& v : e) v /= s;
  return e;
}

inline std::vector<double> row(const fedjets::nn::Matrix& m, std::size_t r) {
  return std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                             m.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols));
}

inline double ce_loss(const NetSpec& spec, const std::vector<double>& p, const fedjets::nn::Batch& b) {
  double total = 0.0;
  for (std::size_t r = 0; r < b.labels.size(); ++r) {
    const auto q = softmax(forward_row(spec, p, row(b.inputs, r)));
    total -= std::log(std::max(q[static_cast<std::size_t>(b.labels[r])], 1e-12));
  }
  return total / static_cast<double>(b.labels.size());
}

// Mixture loss with experts[k] weighted by gate column selected[k].
inline double mixture_loss(const NetSpec& espec, const std::vector<std::vector<double>>& experts,
                           const NetSpec& gspec, const std::vector<double>& gate,
                           const std::vector<std::size_t>& selected, const fedjets::nn::Matrix& gate_inputs,
                           const fedjets::nn::Batch& b, bool renormalize) {
  double total = 0.0;
  for (std::size_t r = 0; r < b.labels.size(); ++r) {
    const auto g = softmax(forward_row(gspec, gate, row(gate_inputs, r)));
    double norm = 0.0;
    for (auto s : selected) norm += g[s];
    std::vector<double> z(espec.layer_dims.back(), 0.0);
    for (std::size_t k = 0; k < experts.size(); ++k) {
      const double w = renormalize ? g[selected[k]] / norm : g[selected[k]];
      const auto out = forward_row(espec, experts[k], row(b.inputs, r));
      for (std::size_t c = 0; c < z.size(); ++c) z[c] += w * out[c];
    }
    const auto q = softmax(z);
    total -= std::log(std::max(q[static_cast<std::size_t>(b.labels[r])], 1e-12));
  }
  return total / static_cast<double>(b.labels.size());
}

inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Relative error with a floor so that near-zero entries compare absolutely.
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  return worst;
}

inline fedjets::nn::Batch random_batch(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed) {
  fedjets::Rng rng(seed);
  std::normal_distribution<double> nd;
  fedjets::nn::Batch b;
  b.inputs = fedjets::nn::Matrix(n, d);
  for (auto& v : b.inputs.data) v = nd(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng() % classes));
  return b;
}

// Small, fast experiment: C=4, d=4, M=2 disjoint anchors with 2 labels each;
// normals hold 3 labels so 2-label test sets stay unseen.
inline fedjets::fl::Config toy_config() {
  fedjets::fl::Config c;
  c.data.num_classes = 4;
  c.data.dim = 4;
  c.data.per_class = 60;
  c.data.test_per_class = 30;
  c.data.separation = 4.0;
  c.data.labels_per_client = 3;
  c.data.anchor_labels = 2;
  c.data.test_labels_per_client = 2;
  c.model.hidden = {8};
  c.model.common_target_acc = 0.6;
  c.model.common_batch_size = 16;
  c.federation.num_clients = 8;
  c.federation.num_experts = 2;
  c.federation.top_k = 1;
  c.federation.anchors_per_round = 2;
  c.federation.normals_per_round = 2;
  c.federation.test_clients = 2;
  c.training.rounds = 4;
  c.training.batch_size = 16;
  c.training.lr = 0.05;
  c.training.gate_lr = 0.05;
  c.eval.interval = 2;
  return c;
}

}  // namespace oracle
