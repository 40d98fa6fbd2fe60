#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "fedjets/data/dataset.hpp"
#include "fedjets/data/partition.hpp"
#include "fedjets/fl/config.hpp"
#include "fedjets/gating/gating.hpp"
#include "fedjets/nn/checkpoint.hpp"

namespace fedjets::fl {

struct PretrainResult {
  nn::Checkpoint checkpoint;  // meta carries accuracy, steps, epochs, seed, target
  double accuracy = 0.0;
  std::size_t steps = 0;
  double epochs = 0.0;
  bool reached = false;
};

/// Centralised SGDM on the pooled training set until held-out accuracy
/// reaches `target` (checked after every step) or `max_epochs` pass. A target
/// at or below chance needs no training.
PretrainResult pretrain_common(const nn::NetSpec& spec, const data::LabeledDataset& train,
                               const data::LabeledDataset& held_out, double target, std::size_t max_epochs,
                               double lr, double momentum, std::size_t batch_size, std::uint64_t seed);

/// Everything a run reads but never writes.
struct Experiment {
  Config config;
  data::LabeledDataset train;
  data::LabeledDataset test;
  std::vector<data::ClientShard> train_shards;  // client_id == index; anchors first
  std::vector<data::ClientShard> test_shards;   // rows of `test`
  std::vector<std::size_t> test_groups;         // scenario group of each test shard
  std::vector<std::vector<int>> normal_groups;  // scenario groups of normal client ids
  std::vector<std::vector<int>> group_labels;
  nn::NetSpec expert_spec;
  nn::NetSpec gate_spec;
  gating::CommonExpert common;
  nlohmann::json common_meta = nlohmann::json::object();
  double common_accuracy = 0.0;  // on the pooled test set
  gating::EmbeddingCache train_embeddings;
  gating::EmbeddingCache test_embeddings;
  std::optional<std::vector<int>> routing_truth;  // label -> expert for disjoint anchors

  std::size_t num_anchors() const { return config.federation.num_experts; }
  std::vector<int> normal_ids() const;
};

nn::NetSpec expert_spec_for(const Config& config);

/// Builds data, shards, the common expert (loaded, given, or pretrained) and
/// the embedding caches.
Experiment build_experiment(const Config& config, std::optional<nn::Checkpoint> common = std::nullopt);

/// Pools the per-class train/test split used by every command.
data::TrainTestSplit make_data(const Config& config);

}  // namespace fedjets::fl
