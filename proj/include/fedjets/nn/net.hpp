#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedjets/nn/matrix.hpp"
#include "fedjets/rng.hpp"

namespace fedjets::nn {

enum class Activation { relu, identity };
enum class OutputHead { logits, softmax };

/// Shape of a dense network: layer_dims = {input, hidden..., output}, one
/// activation per hidden layer. The head says how the output is read; the
/// network itself always produces pre-softmax values.
struct NetSpec {
  std::vector<std::size_t> layer_dims;
  std::vector<Activation> activations;
  OutputHead head = OutputHead::logits;

  /// ReLU MLP with the given hidden widths.
  static NetSpec mlp(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                     OutputHead head = OutputHead::logits);

  void validate() const;  // throws ConfigError
  std::size_t num_layers() const { return layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t param_count() const;
  // Offset of layer l's weight block; its bias follows the in*out weights.
  std::size_t layer_offset(std::size_t layer) const;
  std::uint64_t hash() const;

  bool operator==(const NetSpec&) const = default;
};

void to_json(nlohmann::json& j, const NetSpec& spec);
void from_json(const nlohmann::json& j, NetSpec& spec);

struct ParamVector {
  std::vector<double> values;
  std::uint64_t spec_hash = 0;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParamVector&) const = default;
};

ParamVector zero_params(const NetSpec& spec);
/// Per-layer uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
ParamVector init_params(const NetSpec& spec, Rng& rng);
/// Throws ProtocolError when the vector does not belong to `spec`.
void check_params(const NetSpec& spec, const ParamVector& params);

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
};

/// Pre-head outputs [n x out].
Matrix forward(const NetSpec& spec, const ParamVector& params, const Matrix& inputs);

/// Post-activation outputs of every layer: trace[0] is the input, trace[l] the
/// output of affine layer l (activation applied for hidden layers only).
std::vector<Matrix> forward_trace(const NetSpec& spec, const ParamVector& params, const Matrix& inputs,
                                  std::size_t upto_layer);

std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

/// Mean of -log p[label] with p clamped at 1e-12.
double cross_entropy(const Matrix& probs, std::span<const int> labels);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Gradient of the parameters given dL/d(output) for every row.
/// Throws NumericError naming the layer if a non-finite value appears.
ParamVector backprop(const NetSpec& spec, const ParamVector& params, const std::vector<Matrix>& trace,
                     const Matrix& output_grad);

/// Softmax cross-entropy on the network's logits.
LossGrad ce_loss_grad(const NetSpec& spec, const ParamVector& params, const Batch& batch);

/// Per-sample weighted sum of expert logits. gate_weights is [n x K].
Matrix mixture_forward(const NetSpec& expert_spec, std::span<const ParamVector> experts,
                       const Matrix& gate_weights, const Matrix& inputs);

/// Joint problem for a mixture of experts routed by a softmax gate.
/// `selected` names which gate outputs weight which expert (experts[k] is
/// weighted by gate column selected[k]).
struct MixtureProblem {
  const NetSpec* expert_spec = nullptr;
  std::span<const ParamVector> experts;
  const NetSpec* gate_spec = nullptr;
  const ParamVector* gate = nullptr;
  std::span<const std::size_t> selected;
  const Matrix* gate_inputs = nullptr;
  const Batch* batch = nullptr;
  bool renormalize = false;
};

struct MixtureLossGrad {
  double loss = 0.0;
  std::vector<ParamVector> expert_grads;
  ParamVector gate_grad;
};

/// Cross-entropy of the mixture logits; gradients flow into every expert and
/// into the gate.
MixtureLossGrad mixture_loss_grad(const MixtureProblem& problem);

/// Gate weights used inside the mixture: selected columns of the gate's
/// softmax, optionally renormalized over the selection.
Matrix mixture_gate_weights(const Matrix& gate_probs, std::span<const std::size_t> selected, bool renormalize);

std::vector<int> argmax_rows(const Matrix& m);
double accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace fedjets::nn
