#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedjets/fl/comm.hpp"

namespace fedjets::eval {

/// One evaluation point. `round` counts completed rounds.
struct MetricsRecord {
  std::size_t round = 0;
  std::string method;
  std::uint64_t seed = 0;
  double global_acc = 0.0;
  std::vector<double> per_expert_acc;
  std::optional<double> routing_acc;
  std::uint64_t floats_down_cum = 0;
  std::uint64_t floats_up_cum = 0;
  std::vector<double> group_acc;  // per scenario group; empty without a scenario

  bool operator==(const MetricsRecord&) const = default;
};

nlohmann::json metrics_to_json(const MetricsRecord& r);
/// Throws ConfigError on missing or mistyped fields.
MetricsRecord metrics_from_json(const nlohmann::json& j);

std::string metrics_jsonl(const std::vector<MetricsRecord>& records);
std::string metrics_csv(const std::vector<MetricsRecord>& records);
std::string comm_csv(const fl::CommLedger& ledger, std::uint64_t seed);

/// Errors name the file and the 1-based line.
std::vector<MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace fedjets::eval
