#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedjets/fl/config.hpp"
#include "fedjets/fl/types.hpp"

namespace fedjets::fl {

// Sizes in floats of each communicated network.
struct ModelSizes {
  std::uint64_t expert = 0;
  std::uint64_t gate = 0;
  std::uint64_t common = 0;
};

struct RoundComm {
  std::uint64_t floats_down = 0;
  std::uint64_t floats_up = 0;

  bool operator==(const RoundComm&) const = default;
};

/// Floats moved in one round of `method` under `plan`.
RoundComm comm_cost(Method method, const RoundPlan& plan, const Config& config, const ModelSizes& sizes);

/// One-off transfer before round 0: the common expert to every training
/// client, for the methods that embed with it.
std::uint64_t setup_cost(Method method, const Config& config, const ModelSizes& sizes);

/// Expert floats sent down to one normal client (gate excluded).
std::uint64_t expert_payload_per_client(Method method, const Config& config, const ModelSizes& sizes);

class CommLedger {
 public:
  CommLedger() = default;
  CommLedger(Method method, std::uint64_t setup_down) : method_(method), setup_down_(setup_down) {}

  void record(const RoundComm& round) { rounds_.push_back(round); }

  Method method() const { return method_; }
  std::uint64_t setup_down() const { return setup_down_; }
  const std::vector<RoundComm>& rounds() const { return rounds_; }
  std::uint64_t floats_down_cum() const;
  std::uint64_t floats_up_cum() const;

 private:
  Method method_ = Method::fedjets;
  std::uint64_t setup_down_ = 0;
  std::vector<RoundComm> rounds_;
};

}  // namespace fedjets::fl
