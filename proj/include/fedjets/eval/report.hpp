#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedjets/eval/metrics.hpp"

namespace fedjets::eval {

struct ReportRow {
  std::string file;
  std::string method;
  std::uint64_t seed = 0;
  double best_last_k = 0.0;  // best global_acc over the last k evaluations
  std::size_t evaluations = 0;
  std::uint64_t floats_down_cum = 0;
  std::uint64_t floats_up_cum = 0;
};

/// Records must come from one run; an empty run is a ConfigError.
ReportRow summarize_run(const std::vector<MetricsRecord>& records, std::size_t k, const std::string& file);

std::vector<ReportRow> build_report(const std::vector<std::filesystem::path>& files, std::size_t k = 10);

std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace fedjets::eval
