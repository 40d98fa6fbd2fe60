#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedjets/data/dataset.hpp"

namespace fedjets::data {

enum class ShardKind { anchor, normal, test };

const char* shard_kind_name(ShardKind kind);

struct ClientShard {
  int client_id = 0;
  std::vector<std::size_t> samples;  // rows of the dataset the shard was drawn from
  std::vector<std::size_t> label_histogram;
  ShardKind kind = ShardKind::normal;
  int assigned_expert = -1;  // anchors only

  std::vector<int> label_set() const;  // labels with non-zero count, ascending
  void validate(const LabeledDataset& ds) const;
};

struct QuantityStrategy {
  std::size_t labels_per_client = 4;
};

struct DirichletStrategy {
  double alpha = 0.1;
};

struct PartitionOptions {
  std::size_t samples_per_client = 0;  // 0: dataset size / num_clients
  bool with_replacement = true;
  std::vector<int> allowed_labels;     // empty: every class
  int first_client_id = 0;
};

/// Every shard holds exactly `labels_per_client` distinct labels, drawn at
/// random; samples of a label are shared across clients, unique per shard.
std::vector<ClientShard> partition_quantity(const LabeledDataset& ds, std::size_t num_clients,
                                            std::size_t labels_per_client, std::uint64_t seed,
                                            const PartitionOptions& options = {});

/// Per label, client proportions ~ Dirichlet(alpha) and that label's full
/// budget is split by largest-remainder rounding. Empty clients get their
/// proportion row redrawn (at most 100 times).
std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds, std::size_t num_clients, double alpha,
                                             std::uint64_t seed, const PartitionOptions& options = {});

/// Integer allocation of `budget` proportional to `weights`, summing exactly.
std::vector<std::size_t> allocate_counts(std::span<const double> weights, std::size_t budget);

struct AnchorOptions {
  std::size_t samples_per_label = 0;  // 0: all samples of the label
  bool disjoint = true;
  double alpha = 0.1;  // label proportions when !disjoint
  std::size_t samples_per_anchor = 0;  // used when !disjoint; 0: dataset size / M
};

/// M anchor shards, anchor q assigned expert q. Disjoint anchors draw their
/// label sets without replacement.
std::vector<ClientShard> make_anchor_shards(const LabeledDataset& ds, std::size_t num_experts,
                                            std::size_t labels_per_anchor, std::uint64_t seed,
                                            const AnchorOptions& options = {});

struct TestClientOptions {
  std::size_t labels_per_client = 2;
  std::size_t samples_per_client = 0;  // 0: mean training shard size
  std::vector<int> allowed_labels;
  int first_client_id = 0;
  std::size_t max_retries = 1000;
};

/// Test shards whose label sets never equal a training shard's label set.
std::vector<ClientShard> make_test_clients(const LabeledDataset& ds_test, std::size_t count, std::uint64_t seed,
                                           std::span<const ClientShard> training_shards,
                                           const TestClientOptions& options = {});

}  // namespace fedjets::data
