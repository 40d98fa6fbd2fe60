#include "fedjets/gating/gating.hpp"

#include <algorithm>
#include <numeric>

#include "fedjets/error.hpp"

namespace fedjets::gating {

CommonExpert CommonExpert::make(nn::NetSpec spec, nn::ParamVector params, int embed_layer) {
  spec.validate();
  nn::check_params(spec, params);
  const auto depth = static_cast<int>(spec.num_layers());
  if (embed_layer < 0) embed_layer = depth - 1;
  if (embed_layer > depth) throw ConfigError("embed_layer beyond the common expert's depth");
  return CommonExpert{std::move(spec), std::move(params), static_cast<std::size_t>(embed_layer)};
}

nn::Matrix embed(const CommonExpert& common, const nn::Matrix& inputs) {
  auto trace = nn::forward_trace(common.spec, common.params, inputs, common.embed_layer);
  return std::move(trace.back());
}

nn::Matrix embed_all(const CommonExpert& common, const data::ClientShard& shard, const data::LabeledDataset& ds) {
  return embed(common, nn::gather_rows(ds.inputs, shard.samples));
}

const nn::Matrix& EmbeddingCache::get_or_compute(const CommonExpert& common, const data::ClientShard& shard,
                                                 const data::LabeledDataset& ds) {
  auto it = entries_.find(shard.client_id);
  if (it == entries_.end()) it = entries_.emplace(shard.client_id, embed_all(common, shard, ds)).first;
  return it->second;
}

const nn::Matrix& EmbeddingCache::at(int client_id) const {
  auto it = entries_.find(client_id);
  if (it == entries_.end()) throw ConfigError("no cached embeddings for client " + std::to_string(client_id));
  return it->second;
}

nn::NetSpec GateNet::make_spec(std::size_t embed_dim, std::size_t num_experts, std::size_t hidden) {
  return nn::NetSpec::mlp(embed_dim, {hidden > 0 ? hidden : 4 * num_experts}, num_experts, nn::OutputHead::softmax);
}

nn::Matrix gate_scores(const GateNet& gate, const nn::Matrix& embeddings) {
  return nn::softmax_rows(nn::forward(gate.spec, gate.params, embeddings));
}

bool ExpertSelection::contains(std::size_t expert) const {
  return std::find(indices.begin(), indices.end(), expert) != indices.end();
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) throw ConfigError("TopK needs 1 <= K <= M");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

ExpertSelection select_topk(const GateNet& gate, const nn::Matrix& embeddings, std::size_t k, int client_id) {
  const nn::Matrix scores = gate_scores(gate, embeddings);
  ExpertSelection sel;
  sel.client_id = client_id;
  sel.aggregate_scores.assign(scores.cols, 0.0);
  for (std::size_t r = 0; r < scores.rows; ++r)
    for (std::size_t m = 0; m < scores.cols; ++m) sel.aggregate_scores[m] += scores(r, m);
  sel.indices = topk_indices(sel.aggregate_scores, k);
  return sel;
}

nn::LossGrad gate_independent_loss_grad(const GateNet& gate, const nn::Matrix& embeddings, std::size_t expert) {
  if (expert >= gate.num_experts()) throw ConfigError("anchor expert index outside [0, M)");
  nn::Batch batch{embeddings, std::vector<int>(embeddings.rows, static_cast<int>(expert))};
  return nn::ce_loss_grad(gate.spec, gate.params, batch);
}

}  // namespace fedjets::gating
