#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "fedjets/data/partition.hpp"
#include "fedjets/gating/gating.hpp"
#include "fedjets/nn/net.hpp"

namespace fedjets::fl {

/// Everything the server carries between rounds. Baselines keep their
/// model(s) in `experts` and leave `gate` empty.
struct ServerState {
  std::vector<nn::ParamVector> experts;
  std::optional<nn::ParamVector> gate;
  std::size_t round = 0;

  bool operator==(const ServerState&) const = default;
};

struct RoundPlan {
  std::size_t round = 0;
  std::vector<int> anchor_ids;                      // ascending
  std::vector<int> normal_ids;                      // ascending
  std::vector<gating::ExpertSelection> selections;  // parallel to normal_ids; empty for baselines
};

struct UpdatePacket {
  int client_id = 0;
  data::ShardKind kind = data::ShardKind::normal;
  std::optional<nn::ParamVector> gate;
  std::map<std::size_t, nn::ParamVector> experts;
  std::size_t sample_count = 0;
};

/// Which normal clients may be sampled in which rounds.
struct ScenarioSchedule {
  struct Range {
    std::size_t round_start = 0;  // inclusive
    std::size_t round_end = 0;    // exclusive
    std::vector<int> active;      // normal client ids, ascending
  };
  std::vector<Range> ranges;

  /// Ranges must be ascending, non-overlapping, non-empty and cover [0, rounds).
  void validate(std::size_t rounds) const;
  const std::vector<int>& active_at(std::size_t round) const;
};

}  // namespace fedjets::fl
