#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "fedjets/data/dataset.hpp"
#include "fedjets/data/partition.hpp"
#include "fedjets/nn/net.hpp"

namespace fedjets::gating {

/// Frozen pretrained network used only as a feature extractor for the gate.
struct CommonExpert {
  nn::NetSpec spec;
  nn::ParamVector params;
  std::size_t embed_layer = 0;  // 0 is the raw input, num_layers() the logits

  /// embed_layer < 0 selects the penultimate layer.
  static CommonExpert make(nn::NetSpec spec, nn::ParamVector params, int embed_layer = -1);
  std::size_t embed_dim() const { return spec.layer_dims[embed_layer]; }
};

nn::Matrix embed(const CommonExpert& common, const nn::Matrix& inputs);

/// Embeddings of one shard's samples, row-aligned with shard.samples.
nn::Matrix embed_all(const CommonExpert& common, const data::ClientShard& shard, const data::LabeledDataset& ds);

/// client_id -> embeddings, computed once and then read-only.
class EmbeddingCache {
 public:
  const nn::Matrix& get_or_compute(const CommonExpert& common, const data::ClientShard& shard,
                                   const data::LabeledDataset& ds);
  const nn::Matrix& at(int client_id) const;
  bool contains(int client_id) const { return entries_.contains(client_id); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<int, nn::Matrix> entries_;
};

struct GateNet {
  nn::NetSpec spec;
  nn::ParamVector params;

  /// [embed_dim, hidden, M] with a softmax head; hidden 0 means 4 * M.
  static nn::NetSpec make_spec(std::size_t embed_dim, std::size_t num_experts, std::size_t hidden = 0);
  std::size_t num_experts() const { return spec.output_dim(); }
};

/// Per-sample softmax over the M experts, [n x M].
nn::Matrix gate_scores(const GateNet& gate, const nn::Matrix& embeddings);

struct ExpertSelection {
  int client_id = -1;
  std::vector<std::size_t> indices;      // ascending, K distinct
  std::vector<double> aggregate_scores;  // column sums of the gate scores

  bool contains(std::size_t expert) const;
};

/// K largest entries, ties to the lower index, returned ascending.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);

ExpertSelection select_topk(const GateNet& gate, const nn::Matrix& embeddings, std::size_t k, int client_id = -1);

/// Cross-entropy of the gate output against one-hot(expert), averaged.
nn::LossGrad gate_independent_loss_grad(const GateNet& gate, const nn::Matrix& embeddings, std::size_t expert);

}  // namespace fedjets::gating
