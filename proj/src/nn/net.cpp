#include "fedjets/nn/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedjets/error.hpp"

namespace fedjets::nn {

namespace {

constexpr double kProbClamp = 1e-12;

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

// y = x * W^T + b for one layer, W stored [out x in] row-major.
Matrix affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias) {
  const std::size_t in = x.cols;
  const std::size_t out = bias.size();
  Matrix y(x.rows, out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = weights.data() + o * in;
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

void check_labels(std::span<const int> labels, std::size_t classes) {
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ConfigError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
}

}  // namespace

NetSpec NetSpec::mlp(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                     OutputHead head) {
  NetSpec spec;
  spec.layer_dims.push_back(input);
  for (auto h : hidden) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(output);
  spec.activations.assign(hidden.size(), Activation::relu);
  spec.head = head;
  spec.validate();
  return spec;
}

void NetSpec::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("NetSpec needs at least 2 layer dims");
  for (auto d : layer_dims)
    if (d < 1) throw ConfigError("NetSpec layer dims must be >= 1");
  if (activations.size() != layer_dims.size() - 2)
    throw ConfigError("NetSpec needs one activation per hidden layer");
}

std::size_t NetSpec::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
  return off;
}

std::size_t NetSpec::param_count() const { return layer_offset(num_layers()); }

std::uint64_t NetSpec::hash() const {
  const std::string canon = nlohmann::json(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void to_json(nlohmann::json& j, const NetSpec& spec) {
  nlohmann::json acts = nlohmann::json::array();
  for (auto a : spec.activations) acts.push_back(activation_name(a));
  j = nlohmann::json{{"layer_dims", spec.layer_dims},
                     {"activations", acts},
                     {"head", spec.head == OutputHead::softmax ? "softmax" : "logits"}};
}

void from_json(const nlohmann::json& j, NetSpec& spec) {
  try {
    spec.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    spec.activations.clear();
    for (const auto& a : j.at("activations")) spec.activations.push_back(parse_activation(a.get<std::string>()));
    const auto head = j.at("head").get<std::string>();
    if (head == "softmax")
      spec.head = OutputHead::softmax;
    else if (head == "logits")
      spec.head = OutputHead::logits;
    else
      throw ConfigError("unknown output head '" + head + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed NetSpec: ") + e.what());
  }
  spec.validate();
}

ParamVector zero_params(const NetSpec& spec) {
  return ParamVector{std::vector<double>(spec.param_count(), 0.0), spec.hash()};
}

ParamVector init_params(const NetSpec& spec, Rng& rng) {
  ParamVector p = zero_params(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_dims[l];
    const std::size_t out = spec.layer_dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-a, a);
    const std::size_t off = spec.layer_offset(l);
    for (std::size_t i = 0; i < in * out; ++i) p.values[off + i] = dist(rng);
  }
  return p;
}

void check_params(const NetSpec& spec, const ParamVector& params) {
  if (params.spec_hash != spec.hash() || params.size() != spec.param_count())
    throw ProtocolError("parameter vector does not match its NetSpec (expected " +
                        std::to_string(spec.param_count()) + " values, got " + std::to_string(params.size()) + ")");
}

std::vector<Matrix> forward_trace(const NetSpec& spec, const ParamVector& params, const Matrix& inputs,
                                  std::size_t upto_layer) {
  check_params(spec, params);
  if (inputs.cols != spec.input_dim())
    throw ConfigError("input dim " + std::to_string(inputs.cols) + " does not match network input " +
                      std::to_string(spec.input_dim()));
  if (upto_layer > spec.num_layers()) throw ConfigError("layer index beyond network depth");
  std::vector<Matrix> trace;
  trace.reserve(upto_layer + 1);
  trace.push_back(inputs);
  for (std::size_t l = 0; l < upto_layer; ++l) {
    const std::size_t in = spec.layer_dims[l];
    const std::size_t out = spec.layer_dims[l + 1];
    const std::size_t off = spec.layer_offset(l);
    std::span<const double> all(params.values);
    Matrix y = affine(trace.back(), all.subspan(off, in * out), all.subspan(off + in * out, out));
    if (l + 1 < spec.num_layers() && spec.activations[l] == Activation::relu)
      for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    trace.push_back(std::move(y));
  }
  return trace;
}

Matrix forward(const NetSpec& spec, const ParamVector& params, const Matrix& inputs) {
  auto trace = forward_trace(spec, params, inputs, spec.num_layers());
  return std::move(trace.back());
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows != labels.size()) throw ConfigError("cross_entropy: row/label count mismatch");
  check_labels(labels, probs.cols);
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows; ++r)
    total -= std::log(std::max(probs(r, static_cast<std::size_t>(labels[r])), kProbClamp));
  return total / static_cast<double>(probs.rows);
}

ParamVector backprop(const NetSpec& spec, const ParamVector& params, const std::vector<Matrix>& trace,
                     const Matrix& output_grad) {
  const std::size_t L = spec.num_layers();
  if (trace.size() != L + 1) throw ConfigError("backprop needs a full forward trace");
  ParamVector grad = zero_params(spec);
  Matrix delta = output_grad;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = spec.layer_dims[l];
    const std::size_t out = spec.layer_dims[l + 1];
    const std::size_t off = spec.layer_offset(l);
    const Matrix& a = trace[l];
    double* gw = grad.values.data() + off;
    double* gb = gw + in * out;
    for (std::size_t r = 0; r < delta.rows; ++r) {
      auto dr = delta.row(r);
      auto ar = a.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += d * ar[i];
      }
    }
    if (!all_finite(std::span<const double>(gw, in * out + out)))
      throw NumericError("non-finite gradient in layer " + std::to_string(l));
    if (l == 0) break;
    Matrix prev(delta.rows, in);
    const double* w = params.values.data() + off;
    for (std::size_t r = 0; r < delta.rows; ++r) {
      auto dr = delta.row(r);
      auto pr = prev.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        const double* wrow = w + o * in;
        for (std::size_t i = 0; i < in; ++i) pr[i] += d * wrow[i];
      }
    }
    if (spec.activations[l - 1] == Activation::relu)
      for (std::size_t k = 0; k < prev.data.size(); ++k)
        if (a.data[k] <= 0.0) prev.data[k] = 0.0;
    delta = std::move(prev);
  }
  return grad;
}

namespace {

// dL/dlogits of mean softmax cross-entropy, and the loss itself.
double softmax_ce_grad(const Matrix& logits, std::span<const int> labels, Matrix& dlogits) {
  Matrix probs = softmax_rows(logits);
  const double loss = cross_entropy(probs, labels);
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  dlogits = std::move(probs);
  for (std::size_t r = 0; r < dlogits.rows; ++r) {
    dlogits(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (auto& v : dlogits.row(r)) v *= inv_n;
  }
  return loss;
}

}  // namespace

LossGrad ce_loss_grad(const NetSpec& spec, const ParamVector& params, const Batch& batch) {
  if (batch.inputs.rows == 0 || batch.inputs.rows != batch.labels.size())
    throw ConfigError("batch must be non-empty with one label per row");
  auto trace = forward_trace(spec, params, batch.inputs, spec.num_layers());
  Matrix dlogits;
  LossGrad out;
  out.loss = softmax_ce_grad(trace.back(), batch.labels, dlogits);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  out.grad = backprop(spec, params, trace, dlogits);
  return out;
}

Matrix mixture_forward(const NetSpec& expert_spec, std::span<const ParamVector> experts,
                       const Matrix& gate_weights, const Matrix& inputs) {
  if (experts.empty()) throw ConfigError("mixture needs at least one expert");
  if (gate_weights.cols != experts.size() || gate_weights.rows != inputs.rows)
    throw ConfigError("gate weight matrix must be [n x K]");
  Matrix combined(inputs.rows, expert_spec.output_dim());
  for (std::size_t k = 0; k < experts.size(); ++k) {
    Matrix out = forward(expert_spec, experts[k], inputs);
    for (std::size_t r = 0; r < out.rows; ++r) {
      const double w = gate_weights(r, k);
      auto cr = combined.row(r);
      auto orow = out.row(r);
      for (std::size_t c = 0; c < out.cols; ++c) cr[c] += w * orow[c];
    }
  }
  return combined;
}

Matrix mixture_gate_weights(const Matrix& gate_probs, std::span<const std::size_t> selected, bool renormalize) {
  Matrix w(gate_probs.rows, selected.size());
  for (std::size_t r = 0; r < gate_probs.rows; ++r) {
    double total = 0.0;
    for (std::size_t k = 0; k < selected.size(); ++k) {
      w(r, k) = gate_probs(r, selected[k]);
      total += w(r, k);
    }
    if (renormalize)
      for (std::size_t k = 0; k < selected.size(); ++k) w(r, k) /= total;
  }
  return w;
}

MixtureLossGrad mixture_loss_grad(const MixtureProblem& p) {
  const std::size_t K = p.experts.size();
  if (K == 0) throw ConfigError("mixture needs at least one expert");
  if (p.selected.size() != K) throw ConfigError("one gate column per expert required");
  const Batch& batch = *p.batch;
  const std::size_t n = batch.inputs.rows;
  if (n == 0 || batch.labels.size() != n || p.gate_inputs->rows != n)
    throw ConfigError("mixture batch and gate inputs must have matching non-zero row counts");
  for (std::size_t a = 0; a < K; ++a) {
    if (p.selected[a] >= p.gate_spec->output_dim()) throw ConfigError("selected expert outside gate output");
    for (std::size_t b = a + 1; b < K; ++b)
      if (p.selected[a] == p.selected[b]) throw ConfigError("duplicate expert in selection");
  }

  auto gate_trace = forward_trace(*p.gate_spec, *p.gate, *p.gate_inputs, p.gate_spec->num_layers());
  const Matrix probs = softmax_rows(gate_trace.back());
  const Matrix weights = mixture_gate_weights(probs, p.selected, p.renormalize);

  std::vector<std::vector<Matrix>> traces;
  traces.reserve(K);
  const std::size_t C = p.expert_spec->output_dim();
  Matrix combined(n, C);
  for (std::size_t k = 0; k < K; ++k) {
    traces.push_back(forward_trace(*p.expert_spec, p.experts[k], batch.inputs, p.expert_spec->num_layers()));
    const Matrix& out = traces.back().back();
    for (std::size_t r = 0; r < n; ++r) {
      const double w = weights(r, k);
      for (std::size_t c = 0; c < C; ++c) combined(r, c) += w * out(r, c);
    }
  }

  MixtureLossGrad result;
  Matrix dz;
  result.loss = softmax_ce_grad(combined, batch.labels, dz);
  if (!std::isfinite(result.loss)) throw NumericError("non-finite mixture loss");

  // d loss / d weight[r,k] = <dz_r, out_k,r>
  Matrix dweights(n, K);
  for (std::size_t k = 0; k < K; ++k) {
    const Matrix& out = traces[k].back();
    Matrix dout(n, C);
    for (std::size_t r = 0; r < n; ++r) {
      const double w = weights(r, k);
      double dw = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        dout(r, c) = w * dz(r, c);
        dw += dz(r, c) * out(r, c);
      }
      dweights(r, k) = dw;
    }
    result.expert_grads.push_back(backprop(*p.expert_spec, p.experts[k], traces[k], dout));
  }

  const std::size_t M = p.gate_spec->output_dim();
  Matrix dgate_logits(n, M);
  std::vector<double> dprobs(M);
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(dprobs.begin(), dprobs.end(), 0.0);
    if (p.renormalize) {
      double total = 0.0;
      double wdot = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        total += probs(r, p.selected[k]);
        wdot += dweights(r, k) * weights(r, k);
      }
      for (std::size_t k = 0; k < K; ++k) dprobs[p.selected[k]] = (dweights(r, k) - wdot) / total;
    } else {
      for (std::size_t k = 0; k < K; ++k) dprobs[p.selected[k]] = dweights(r, k);
    }
    double dot = 0.0;
    for (std::size_t m = 0; m < M; ++m) dot += probs(r, m) * dprobs[m];
    for (std::size_t m = 0; m < M; ++m) dgate_logits(r, m) = probs(r, m) * (dprobs[m] - dot);
  }
  result.gate_grad = backprop(*p.gate_spec, *p.gate, gate_trace, dgate_logits);
  return result;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ConfigError("accuracy: size mismatch");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace fedjets::nn
