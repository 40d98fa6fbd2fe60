#include "fedjets/eval/scenario.hpp"

#include <algorithm>

#include "fedjets/baselines/baselines.hpp"
#include "fedjets/error.hpp"

namespace fedjets::fl {

void ScenarioSchedule::validate(std::size_t rounds) const {
  std::size_t expected = 0;
  for (const auto& r : ranges) {
    if (r.round_start != expected) throw ConfigError("schedule ranges must be contiguous and start at round 0");
    if (r.round_end <= r.round_start) throw ConfigError("schedule range is empty");
    if (r.active.empty())
      throw ConfigError("schedule range starting at round " + std::to_string(r.round_start) + " has no active clients");
    expected = r.round_end;
  }
  if (expected != rounds) throw ConfigError("schedule does not cover every round");
}

const std::vector<int>& ScenarioSchedule::active_at(std::size_t round) const {
  for (const auto& r : ranges)
    if (round >= r.round_start && round < r.round_end) return r.active;
  throw ConfigError("no schedule range covers round " + std::to_string(round));
}

}  // namespace fedjets::fl

namespace fedjets::eval {

fl::ScenarioSchedule make_schedule(const fl::Config& config, std::span<const std::vector<int>> normal_groups) {
  const auto& sc = config.scenario;
  const std::size_t rounds = config.training.rounds;
  const std::size_t groups = normal_groups.size();
  if (groups == 0) throw ConfigError("scenario needs at least one client group");
  fl::ScenarioSchedule schedule;
  if (rounds == 0) return schedule;
  const std::size_t period = std::max<std::size_t>(1, sc.period > 0 ? sc.period : rounds / groups);

  if (sc.kind == fl::ScenarioKind::none) {
    std::vector<int> all;
    for (const auto& g : normal_groups) all.insert(all.end(), g.begin(), g.end());
    std::sort(all.begin(), all.end());
    schedule.ranges.push_back({0, rounds, std::move(all)});
  } else if (sc.kind == fl::ScenarioKind::growing) {
    std::vector<int> active;
    for (std::size_t g = 0; g < groups && g * period < rounds; ++g) {
      active.insert(active.end(), normal_groups[g].begin(), normal_groups[g].end());
      std::sort(active.begin(), active.end());
      const std::size_t end = g + 1 == groups ? rounds : std::min(rounds, (g + 1) * period);
      schedule.ranges.push_back({g * period, end, active});
    }
    schedule.ranges.back().round_end = rounds;
  } else {
    for (std::size_t start = 0, r = 0; start < rounds; start += period, ++r) {
      std::vector<int> active = normal_groups[r % groups];
      std::sort(active.begin(), active.end());
      schedule.ranges.push_back({start, std::min(rounds, start + period), std::move(active)});
    }
  }
  schedule.validate(rounds);
  return schedule;
}

fl::RunResult run_scenario(const fl::Experiment& exp, const fl::ScenarioSchedule& schedule) {
  return baselines::run_method(exp, &schedule);
}

}  // namespace fedjets::eval
