#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedjets/eval/metrics.hpp"
#include "fedjets/fl/comm.hpp"
#include "fedjets/fl/experiment.hpp"
#include "fedjets/fl/types.hpp"
#include "fedjets/rng.hpp"

namespace fedjets::fl {

/// l1 from the config; -1 there means one local epoch, ceil(n_s / batch).
std::size_t local_iterations(const TrainingConfig& training, std::size_t shard_size);

/// Minibatches of shard positions; each pass over the shard is a fresh
/// permutation and the last batch of a pass may be short.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t n, std::size_t batch_size);
  std::vector<std::size_t> next(Rng& rng);

 private:
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

/// Samples anchor ids from [0, M) and normal ids from `normal_pool`, both
/// without replacement and ascending. Selections are left empty.
RoundPlan plan_round(std::size_t t, const Config& config, Rng& rng, std::span<const int> normal_pool);

/// Fills plan.selections from the gate on cached training embeddings.
void select_experts(RoundPlan& plan, const nn::NetSpec& gate_spec, const nn::ParamVector& gate,
                    const gating::EmbeddingCache& embeddings, std::size_t k);

Rng client_rng(const Config& config, std::size_t round, int client_id);

UpdatePacket anchor_client_update(const ServerState& snapshot, const Experiment& exp, int client_id,
                                  std::size_t round);

UpdatePacket normal_client_update(const ServerState& snapshot, const Experiment& exp, int client_id,
                                  const gating::ExpertSelection& selection, std::size_t round);

/// Sample-count weighted (or uniform) average folded in ascending client id.
/// The gate averages over packets carrying one, each expert over the packets
/// that contain it; experts nobody touched keep their values.
ServerState aggregate(const ServerState& state, std::vector<UpdatePacket> packets, const nn::NetSpec& expert_spec,
                      const nn::NetSpec* gate_spec, bool uniform_weighting);

ServerState initial_state(const Experiment& exp);

struct RunResult {
  ServerState state;
  std::vector<eval::MetricsRecord> history;
  CommLedger ledger;
};

/// True after the rounds at which metrics are recorded.
bool is_eval_round(std::size_t completed, std::size_t total, std::size_t interval);

eval::MetricsRecord evaluate_fedjets(const Experiment& exp, const ServerState& state);

/// Accuracy per scenario group given per-test-client accuracies (in
/// exp.test_shards order). Empty when there is a single group.
std::vector<double> group_accuracies(const Experiment& exp, std::span<const double> client_acc);

/// FedJETs training. A null schedule makes every normal client eligible.
RunResult run_training(const Experiment& exp, const ScenarioSchedule* schedule = nullptr);

}  // namespace fedjets::fl
