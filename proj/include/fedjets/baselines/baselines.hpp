#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fedjets/fl/runtime.hpp"

namespace fedjets::baselines {

/// Local SGDM on cross-entropy from `global`. `seed` picks the client stream
/// (the training seed, or an ensemble track seed).
fl::UpdatePacket fedavg_client_update(const nn::ParamVector& global, const fl::Experiment& exp, int client_id,
                                      std::size_t round, std::uint64_t seed);

/// As fedavg plus mu * (w - global) added to every local gradient.
fl::UpdatePacket fedprox_client_update(const nn::ParamVector& global, const fl::Experiment& exp, int client_id,
                                       std::size_t round, std::uint64_t seed, double mu);

/// Argmax of the mean softmax over models.
std::vector<int> avg_ensemble_predict(const nn::NetSpec& spec, std::span<const nn::ParamVector> models,
                                      const nn::Matrix& inputs);

/// Argmax of the mean logits: the all-experts mixture with uniform gate
/// weights, used by FedMix on unseen clients that own no local gate.
std::vector<int> uniform_mixture_predict(const nn::NetSpec& spec, std::span<const nn::ParamVector> experts,
                                         const nn::Matrix& inputs);

struct FedMixState {
  fl::ServerState server;                   // M experts, no gate
  std::map<int, nn::ParamVector> local_gates;  // client side, never aggregated
};

/// Every active client trains all M experts through its own gate.
FedMixState fedmix_round(const FedMixState& state, const fl::RoundPlan& plan, const fl::Experiment& exp);

/// Seed of ensemble track k; track 0 uses the training seed itself.
std::uint64_t ensemble_track_seed(std::uint64_t seed, std::size_t track);

/// Runs a non-FedJETs method. Anchor shards act as ordinary clients.
fl::RunResult run_baseline(const fl::Experiment& exp, const fl::ScenarioSchedule* schedule = nullptr);

/// Dispatches on config.training.method.
fl::RunResult run_method(const fl::Experiment& exp, const fl::ScenarioSchedule* schedule = nullptr);

}  // namespace fedjets::baselines
