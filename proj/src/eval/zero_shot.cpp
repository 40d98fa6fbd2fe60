#include "fedjets/eval/zero_shot.hpp"

#include <numeric>

#include "fedjets/error.hpp"

namespace fedjets::eval {

namespace {

nn::Matrix client_embeddings(const gating::CommonExpert& common, const data::ClientShard& shard,
                             const data::LabeledDataset& ds, const gating::EmbeddingCache* cache) {
  if (cache != nullptr && cache->contains(shard.client_id)) return cache->at(shard.client_id);
  return gating::embed_all(common, shard, ds);
}

gating::GateNet gate_of(const fl::ServerState& state, const nn::NetSpec& gate_spec) {
  if (!state.gate) throw ConfigError("zero-shot evaluation needs a gate");
  return gating::GateNet{gate_spec, *state.gate};
}

}  // namespace

ZeroShotPrediction zero_shot_predict(const nn::NetSpec& expert_spec, std::span<const nn::ParamVector> experts,
                                     const gating::GateNet& gate, const nn::Matrix& embeddings,
                                     const nn::Matrix& inputs, std::size_t k) {
  if (experts.size() != gate.num_experts()) throw ConfigError("gate output size differs from the expert count");
  if (embeddings.rows != inputs.rows) throw ConfigError("embeddings and inputs disagree on sample count");
  ZeroShotPrediction out;
  const nn::Matrix scores = gating::gate_scores(gate, embeddings);
  out.selection.aggregate_scores.assign(scores.cols, 0.0);
  for (std::size_t r = 0; r < scores.rows; ++r)
    for (std::size_t m = 0; m < scores.cols; ++m) out.selection.aggregate_scores[m] += scores(r, m);
  out.selection.indices = gating::topk_indices(out.selection.aggregate_scores, k);

  out.chosen.resize(inputs.rows);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    std::size_t best = out.selection.indices.front();
    for (auto m : out.selection.indices)
      if (scores(r, m) > scores(r, best)) best = m;
    out.chosen[r] = best;
  }

  out.predicted.resize(inputs.rows);
  for (auto m : out.selection.indices) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < out.chosen.size(); ++r)
      if (out.chosen[r] == m) rows.push_back(r);
    if (rows.empty()) continue;
    const auto pred = nn::argmax_rows(nn::forward(expert_spec, experts[m], nn::gather_rows(inputs, rows)));
    for (std::size_t i = 0; i < rows.size(); ++i) out.predicted[rows[i]] = pred[i];
  }
  return out;
}

ZeroShotReport zero_shot_eval(const fl::ServerState& state, const nn::NetSpec& expert_spec,
                              const nn::NetSpec& gate_spec, const gating::CommonExpert& common,
                              const data::LabeledDataset& ds_test, std::span<const data::ClientShard> shards,
                              std::size_t k, const gating::EmbeddingCache* cache) {
  const auto gate = gate_of(state, gate_spec);
  ZeroShotReport report;
  for (const auto& shard : shards) {
    const nn::Matrix inputs = nn::gather_rows(ds_test.inputs, shard.samples);
    auto pred = zero_shot_predict(expert_spec, state.experts, gate, client_embeddings(common, shard, ds_test, cache),
                                  inputs, k);
    // Labels are read only here, after prediction.
    std::vector<int> labels;
    for (auto i : shard.samples) labels.push_back(ds_test.labels[i]);
    ClientZeroShot c;
    c.client_id = shard.client_id;
    c.accuracy = nn::accuracy(pred.predicted, labels);
    pred.selection.client_id = shard.client_id;
    c.selection = std::move(pred.selection);
    c.chosen = std::move(pred.chosen);
    report.clients.push_back(std::move(c));
  }
  std::sort(report.clients.begin(), report.clients.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  double total = 0.0;
  for (const auto& c : report.clients) total += c.accuracy;
  report.average_accuracy = report.clients.empty() ? 0.0 : total / static_cast<double>(report.clients.size());
  return report;
}

RoutingReport per_sample_routing_report(const fl::ServerState& state, const nn::NetSpec& expert_spec,
                                        const nn::NetSpec& gate_spec, const gating::CommonExpert& common,
                                        const data::LabeledDataset& ds_test,
                                        std::span<const data::ClientShard> shards, std::span<const int> truth,
                                        std::size_t k, const gating::EmbeddingCache* cache) {
  const auto gate = gate_of(state, gate_spec);
  RoutingReport report;
  for (const auto& shard : shards) {
    for (auto i : shard.samples) {
      const int y = ds_test.labels[i];
      if (static_cast<std::size_t>(y) >= truth.size() || truth[static_cast<std::size_t>(y)] < 0)
        throw ConfigError("label " + std::to_string(y) + " has no ground-truth expert");
    }
    const nn::Matrix inputs = nn::gather_rows(ds_test.inputs, shard.samples);
    const auto pred = zero_shot_predict(expert_spec, state.experts, gate,
                                        client_embeddings(common, shard, ds_test, cache), inputs, k);
    ClientRouting c;
    c.client_id = shard.client_id;
    for (std::size_t r = 0; r < shard.samples.size(); ++r) {
      const int expected = truth[static_cast<std::size_t>(ds_test.labels[shard.samples[r]])];
      if (pred.chosen[r] == static_cast<std::size_t>(expected))
        ++c.correct;
      else
        ++c.incorrect;
    }
    c.error_rate = static_cast<double>(c.incorrect) / static_cast<double>(shard.samples.size());
    report.clients.push_back(c);
  }
  std::sort(report.clients.begin(), report.clients.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  double total = 0.0;
  for (const auto& c : report.clients) total += c.error_rate;
  report.average_error_rate = report.clients.empty() ? 0.0 : total / static_cast<double>(report.clients.size());
  return report;
}

double model_accuracy_over_clients(const nn::NetSpec& spec, const nn::ParamVector& model,
                                   const data::LabeledDataset& ds, std::span<const data::ClientShard> shards,
                                   std::vector<double>* per_client) {
  double total = 0.0;
  for (const auto& shard : shards) {
    const auto batch = ds.batch(shard.samples);
    const double acc = nn::accuracy(nn::argmax_rows(nn::forward(spec, model, batch.inputs)), batch.labels);
    if (per_client != nullptr) per_client->push_back(acc);
    total += acc;
  }
  return shards.empty() ? 0.0 : total / static_cast<double>(shards.size());
}

std::vector<double> pooled_model_accuracy(const nn::NetSpec& spec, std::span<const nn::ParamVector> models,
                                          const data::LabeledDataset& ds, std::span<const data::ClientShard> shards) {
  std::vector<std::size_t> rows;
  for (const auto& s : shards) rows.insert(rows.end(), s.samples.begin(), s.samples.end());
  const auto batch = ds.batch(rows);
  std::vector<double> out;
  for (const auto& m : models) out.push_back(nn::accuracy(nn::argmax_rows(nn::forward(spec, m, batch.inputs)), batch.labels));
  return out;
}

}  // namespace fedjets::eval
