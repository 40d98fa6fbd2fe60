#include "fedjets/eval/report.hpp"

#include <algorithm>
#include <sstream>

#include "fedjets/error.hpp"

namespace fedjets::eval {

ReportRow summarize_run(const std::vector<MetricsRecord>& records, std::size_t k, const std::string& file) {
  if (records.empty()) throw ConfigError(file + ": no metrics records");
  if (k == 0) throw ConfigError("report window must be positive");
  ReportRow row;
  row.file = file;
  row.method = records.front().method;
  row.seed = records.front().seed;
  for (const auto& r : records)
    if (r.method != row.method || r.seed != row.seed) throw ConfigError(file + ": records mix runs");
  row.evaluations = records.size();
  const std::size_t first = records.size() > k ? records.size() - k : 0;
  row.best_last_k = records[first].global_acc;
  for (std::size_t i = first; i < records.size(); ++i) row.best_last_k = std::max(row.best_last_k, records[i].global_acc);
  row.floats_down_cum = records.back().floats_down_cum;
  row.floats_up_cum = records.back().floats_up_cum;
  return row;
}

std::vector<ReportRow> build_report(const std::vector<std::filesystem::path>& files, std::size_t k) {
  if (files.empty()) throw ConfigError("report needs at least one metrics file");
  std::vector<ReportRow> rows;
  for (const auto& f : files) rows.push_back(summarize_run(read_metrics_jsonl(f), k, f.string()));
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "file,method,seed,evaluations,best_last_k_acc,floats_down_cum,floats_up_cum\n";
  for (const auto& r : rows)
    os << r.file << ',' << r.method << ',' << r.seed << ',' << r.evaluations << ',' << r.best_last_k << ','
       << r.floats_down_cum << ',' << r.floats_up_cum << "\n";
  return os.str();
}

}  // namespace fedjets::eval
