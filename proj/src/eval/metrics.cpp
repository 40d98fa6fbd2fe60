#include "fedjets/eval/metrics.hpp"

#include <fstream>
#include <sstream>

#include "fedjets/error.hpp"

namespace fedjets::eval {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

nlohmann::json metrics_to_json(const MetricsRecord& r) {
  nlohmann::json j;
  j["round"] = r.round;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["global_acc"] = r.global_acc;
  j["per_expert_acc"] = r.per_expert_acc;
  j["routing_acc"] = r.routing_acc ? nlohmann::json(*r.routing_acc) : nlohmann::json(nullptr);
  j["floats_down_cum"] = r.floats_down_cum;
  j["floats_up_cum"] = r.floats_up_cum;
  if (!r.group_acc.empty()) j["group_acc"] = r.group_acc;
  return j;
}

MetricsRecord metrics_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("metrics record is not an object");
  static const char* required[] = {"round",          "method",     "seed",           "global_acc",
                                   "per_expert_acc", "routing_acc", "floats_down_cum", "floats_up_cum"};
  for (const char* key : required)
    if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    MetricsRecord r;
    r.round = j.at("round").get<std::size_t>();
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.global_acc = j.at("global_acc").get<double>();
    r.per_expert_acc = j.at("per_expert_acc").get<std::vector<double>>();
    if (!j.at("routing_acc").is_null()) r.routing_acc = j.at("routing_acc").get<double>();
    r.floats_down_cum = j.at("floats_down_cum").get<std::uint64_t>();
    r.floats_up_cum = j.at("floats_up_cum").get<std::uint64_t>();
    if (j.contains("group_acc")) r.group_acc = j.at("group_acc").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad field type: ") + e.what());
  }
}

std::string metrics_jsonl(const std::vector<MetricsRecord>& records) {
  std::string out;
  for (const auto& r : records) out += metrics_to_json(r).dump() + "\n";
  return out;
}

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream os;
  os << "# seed=" << (records.empty() ? 0 : records.front().seed) << "\n";
  std::size_t experts = 0, groups = 0;
  for (const auto& r : records) {
    experts = std::max(experts, r.per_expert_acc.size());
    groups = std::max(groups, r.group_acc.size());
  }
  os << "round,method,global_acc,routing_acc,floats_down_cum,floats_up_cum";
  for (std::size_t i = 0; i < experts; ++i) os << ",expert_" << i << "_acc";
  for (std::size_t g = 0; g < groups; ++g) os << ",group_" << g << "_acc";
  os << "\n";
  for (const auto& r : records) {
    os << r.round << ',' << r.method << ',' << fmt(r.global_acc) << ','
       << (r.routing_acc ? fmt(*r.routing_acc) : std::string()) << ',' << r.floats_down_cum << ','
       << r.floats_up_cum;
    for (std::size_t i = 0; i < experts; ++i)
      os << ',' << (i < r.per_expert_acc.size() ? fmt(r.per_expert_acc[i]) : std::string());
    for (std::size_t g = 0; g < groups; ++g) os << ',' << (g < r.group_acc.size() ? fmt(r.group_acc[g]) : std::string());
    os << "\n";
  }
  return os.str();
}

std::string comm_csv(const fl::CommLedger& ledger, std::uint64_t seed) {
  std::ostringstream os;
  os << "# seed=" << seed << "\n";
  os << "round,method,floats_down,floats_up,floats_down_cum,floats_up_cum\n";
  std::uint64_t down = ledger.setup_down(), up = 0;
  os << "setup," << fl::method_name(ledger.method()) << ',' << ledger.setup_down() << ",0," << down << ",0\n";
  for (std::size_t t = 0; t < ledger.rounds().size(); ++t) {
    const auto& r = ledger.rounds()[t];
    down += r.floats_down;
    up += r.floats_up;
    os << t << ',' << fl::method_name(ledger.method()) << ',' << r.floats_down << ',' << r.floats_up << ',' << down
       << ',' << up << "\n";
  }
  return os.str();
}

std::vector<MetricsRecord> read_metrics_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(metrics_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fedjets::eval
