#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedjets::fl {

enum class Method { fedjets, fedavg, fedprox, avg_ensemble, fedmix };
enum class PartitionKind { quantity, dirichlet };
enum class ExpertInit { scratch, from_common };
enum class ScenarioKind { none, growing, cyclic };

const char* method_name(Method m);
Method parse_method(const std::string& s);

struct DataConfig {
  std::size_t num_classes = 10;
  std::size_t dim = 16;
  std::size_t per_class = 600;  // training samples per class
  std::size_t test_per_class = 200;
  double separation = 4.0;
  std::uint64_t seed = 1;
  PartitionKind partition = PartitionKind::quantity;
  std::size_t labels_per_client = 4;
  double alpha = 0.1;
  std::size_t samples_per_client = 0;  // 0: train size / num_clients
  bool with_replacement = true;
  std::size_t anchor_labels = 2;
  bool anchor_disjoint = true;
  std::size_t anchor_samples_per_label = 0;  // 0: the whole label pool
  std::size_t test_labels_per_client = 2;
  std::size_t test_samples_per_client = 0;  // 0: mean training shard size
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {32};  // experts, common expert and baseline models
  std::size_t gate_hidden = 0;             // 0: 4 * M
  int embed_layer = -1;                    // -1: penultimate layer of the common expert
  bool renormalize_gate = false;
  ExpertInit expert_init = ExpertInit::scratch;
  std::string common_checkpoint;  // empty: pretrain in process
  double common_target_acc = 0.73;
  std::size_t common_max_epochs = 50;
  double common_lr = 0.01;
  double common_momentum = 0.9;
  std::size_t common_batch_size = 64;
};

struct FederationConfig {
  std::size_t num_clients = 60;  // S, anchors included
  std::size_t num_experts = 5;   // M
  std::size_t top_k = 2;         // K
  std::size_t anchors_per_round = 5;
  std::size_t normals_per_round = 5;
  std::size_t test_clients = 10;  // U
  bool uniform_weighting = false;
};

struct TrainingConfig {
  Method method = Method::fedjets;
  std::size_t rounds = 300;
  std::int64_t local_iterations = -1;  // -1: one local epoch
  double lr = 0.01;
  double gate_lr = 0.001;
  double momentum = 0.9;
  double gate_momentum = 0.0;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
  double fedprox_mu = 0.01;
  std::size_t ensemble_size = 2;
  std::size_t threads = 1;  // never affects results
};

struct EvalConfig {
  std::size_t interval = 10;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::none;
  std::size_t groups = 2;
  std::size_t period = 0;  // rounds per schedule range; 0: rounds / groups
};

struct Config {
  DataConfig data;
  ModelConfig model;
  FederationConfig federation;
  TrainingConfig training;
  EvalConfig eval;
  ScenarioConfig scenario;

  void validate() const;  // throws ConfigError
};

Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& c);

/// Sets a dot path such as "training.lr=0.05". The value is parsed as JSON
/// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace fedjets::fl
