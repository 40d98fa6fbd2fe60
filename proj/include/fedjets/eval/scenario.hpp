#pragma once

#include <span>
#include <vector>

#include "fedjets/fl/runtime.hpp"

namespace fedjets::eval {

/// growing: range g activates groups 0..g; cyclic: range r activates group
/// r mod groups. Ranges last `period` rounds (0: rounds / groups) and the
/// final growing range runs to the end.
fl::ScenarioSchedule make_schedule(const fl::Config& config, std::span<const std::vector<int>> normal_groups);

/// Runs the configured method with normals drawn from the active set only.
fl::RunResult run_scenario(const fl::Experiment& exp, const fl::ScenarioSchedule& schedule);

}  // namespace fedjets::eval
