#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fedjets/data/dataset.hpp"
#include "fedjets/data/partition.hpp"
#include "fedjets/fl/types.hpp"
#include "fedjets/gating/gating.hpp"
#include "fedjets/nn/net.hpp"

namespace fedjets::eval {

/// Label-free prediction for one unseen client: top-K experts from the
/// aggregated gate scores, then per sample the selected expert with the
/// highest gate score.
struct ZeroShotPrediction {
  gating::ExpertSelection selection;
  std::vector<std::size_t> chosen;  // per sample, always inside selection
  std::vector<int> predicted;
};

ZeroShotPrediction zero_shot_predict(const nn::NetSpec& expert_spec, std::span<const nn::ParamVector> experts,
                                     const gating::GateNet& gate, const nn::Matrix& embeddings,
                                     const nn::Matrix& inputs, std::size_t k);

struct ClientZeroShot {
  int client_id = 0;
  double accuracy = 0.0;
  gating::ExpertSelection selection;
  std::vector<std::size_t> chosen;
};

struct ZeroShotReport {
  std::vector<ClientZeroShot> clients;  // ascending client id
  double average_accuracy = 0.0;
};

/// Embeddings come from `cache` when it holds the client, else from `common`.
ZeroShotReport zero_shot_eval(const fl::ServerState& state, const nn::NetSpec& expert_spec,
                              const nn::NetSpec& gate_spec, const gating::CommonExpert& common,
                              const data::LabeledDataset& ds_test, std::span<const data::ClientShard> shards,
                              std::size_t k, const gating::EmbeddingCache* cache = nullptr);

struct ClientRouting {
  int client_id = 0;
  std::size_t incorrect = 0;
  std::size_t correct = 0;
  double error_rate = 0.0;
};

struct RoutingReport {
  std::vector<ClientRouting> clients;
  double average_error_rate = 0.0;
};

/// A sample is routed correctly iff its chosen expert equals truth[label].
/// Labels the map does not cover (negative entries) are a ConfigError.
RoutingReport per_sample_routing_report(const fl::ServerState& state, const nn::NetSpec& expert_spec,
                                        const nn::NetSpec& gate_spec, const gating::CommonExpert& common,
                                        const data::LabeledDataset& ds_test,
                                        std::span<const data::ClientShard> shards, std::span<const int> truth,
                                        std::size_t k, const gating::EmbeddingCache* cache = nullptr);

/// Mean per-client accuracy of one model.
double model_accuracy_over_clients(const nn::NetSpec& spec, const nn::ParamVector& model,
                                   const data::LabeledDataset& ds, std::span<const data::ClientShard> shards,
                                   std::vector<double>* per_client = nullptr);

/// Accuracy of each model on the pooled samples of `shards`.
std::vector<double> pooled_model_accuracy(const nn::NetSpec& spec, std::span<const nn::ParamVector> models,
                                          const data::LabeledDataset& ds, std::span<const data::ClientShard> shards);

}  // namespace fedjets::eval
