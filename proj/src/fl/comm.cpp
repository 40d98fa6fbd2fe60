#include "fedjets/fl/comm.hpp"

#include "fedjets/error.hpp"

namespace fedjets::fl {

RoundComm comm_cost(Method method, const RoundPlan& plan, const Config& config, const ModelSizes& sizes) {
  const std::uint64_t clients = plan.anchor_ids.size() + plan.normal_ids.size();
  RoundComm c;
  switch (method) {
    case Method::fedjets: {
      if (plan.selections.size() != plan.normal_ids.size())
        throw ConfigError("fedjets plan needs one expert selection per normal client");
      c.floats_down = plan.anchor_ids.size() * (sizes.gate + sizes.expert);
      for (const auto& sel : plan.selections) c.floats_down += sizes.gate + sel.indices.size() * sizes.expert;
      break;
    }
    case Method::fedmix:
      c.floats_down = clients * config.federation.num_experts * sizes.expert;
      break;
    case Method::fedavg:
    case Method::fedprox:
      c.floats_down = clients * sizes.expert;
      break;
    case Method::avg_ensemble:
      c.floats_down = clients * config.training.ensemble_size * sizes.expert;
      break;
  }
  // Every client returns exactly what it received.
  c.floats_up = c.floats_down;
  return c;
}

std::uint64_t setup_cost(Method method, const Config& config, const ModelSizes& sizes) {
  if (method == Method::fedjets || method == Method::fedmix) return config.federation.num_clients * sizes.common;
  return 0;
}

std::uint64_t expert_payload_per_client(Method method, const Config& config, const ModelSizes& sizes) {
  switch (method) {
    case Method::fedjets:
      return config.federation.top_k * sizes.expert;
    case Method::fedmix:
      return config.federation.num_experts * sizes.expert;
    case Method::fedavg:
    case Method::fedprox:
      return sizes.expert;
    case Method::avg_ensemble:
      return config.training.ensemble_size * sizes.expert;
  }
  return 0;
}

std::uint64_t CommLedger::floats_down_cum() const {
  std::uint64_t total = setup_down_;
  for (const auto& r : rounds_) total += r.floats_down;
  return total;
}

std::uint64_t CommLedger::floats_up_cum() const {
  std::uint64_t total = 0;
  for (const auto& r : rounds_) total += r.floats_up;
  return total;
}

}  // namespace fedjets::fl
