// fedjets command-line driver. Exit codes: 0 ok, 2 config, 3 numeric, 4 I/O.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedjets/baselines/baselines.hpp"
#include "fedjets/error.hpp"
#include "fedjets/eval/metrics.hpp"
#include "fedjets/eval/report.hpp"
#include "fedjets/eval/scenario.hpp"
#include "fedjets/eval/zero_shot.hpp"
#include "fedjets/fl/experiment.hpp"
#include "fedjets/fl/runtime.hpp"
#include "fedjets/fl/state_io.hpp"

namespace fs = std::filesystem;
using namespace fedjets;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  long long seed = -1;
  long long threads = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out) {
  cmd->add_option("--config", f.config, "JSON config")->required();
  auto* out = cmd->add_option("--out", f.out, "output path");
  if (needs_out) out->required();
  cmd->add_option("--set", f.overrides, "dot.path=value override")->take_all();
  cmd->add_option("--seed", f.seed, "training seed");
  cmd->add_option("--threads", f.threads, "worker cap; never changes results");
}

fl::Config resolve_config(const CommonFlags& f) {
  auto overrides = f.overrides;
  if (f.seed >= 0) overrides.push_back("training.seed=" + std::to_string(f.seed));
  if (f.threads >= 0) overrides.push_back("training.threads=" + std::to_string(f.threads));
  auto c = fl::load_config(f.config, overrides);
  c.validate();
  return c;
}

int cmd_pretrain(const CommonFlags& f, double target, long long epochs) {
  auto c = resolve_config(f);
  if (target >= 0.0) c.model.common_target_acc = target;
  if (epochs >= 0) c.model.common_max_epochs = static_cast<std::size_t>(epochs);
  const auto split = fl::make_data(c);
  const auto spec = fl::expert_spec_for(c);
  const auto& m = c.model;
  const auto res = fl::pretrain_common(spec, split.train, split.test, m.common_target_acc, m.common_max_epochs,
                                       m.common_lr, m.common_momentum, m.common_batch_size, c.data.seed);
  std::cout << "seed=" << c.data.seed << " accuracy=" << res.accuracy << " epochs=" << res.epochs
            << " steps=" << res.steps << "\n";
  if (!res.reached) {
    std::cerr << "target accuracy " << m.common_target_acc << " not reached; achieved " << res.accuracy << "\n";
    return kExitNumeric;
  }
  nn::save_checkpoint(f.out, res.checkpoint);
  return 0;
}

int cmd_partition(const CommonFlags& f) {
  const auto c = resolve_config(f);
  const auto exp = fl::build_experiment(c);
  std::ostringstream os;
  os << "# seed=" << c.data.seed << "\nclient_id,kind,label,count\n";
  auto dump = [&](const std::vector<data::ClientShard>& shards) {
    for (const auto& s : shards)
      for (std::size_t y = 0; y < s.label_histogram.size(); ++y)
        if (s.label_histogram[y] > 0)
          os << s.client_id << ',' << data::shard_kind_name(s.kind) << ',' << y << ',' << s.label_histogram[y] << "\n";
  };
  dump(exp.train_shards);
  dump(exp.test_shards);
  if (f.out.empty())
    std::cout << os.str();
  else
    eval::write_text_file(f.out, os.str());
  return 0;
}

int cmd_run(const CommonFlags& f) {
  const auto c = resolve_config(f);
  const fs::path dir = f.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  eval::write_text_file(dir / "config.echo.json", fl::config_to_json(c).dump(2) + "\n");

  const auto exp = fl::build_experiment(c);
  fl::RunResult res;
  if (c.scenario.kind != fl::ScenarioKind::none) {
    res = eval::run_scenario(exp, eval::make_schedule(c, exp.normal_groups));
  } else {
    res = baselines::run_method(exp);
  }
  eval::write_text_file(dir / "metrics.jsonl", eval::metrics_jsonl(res.history));
  eval::write_text_file(dir / "metrics.csv", eval::metrics_csv(res.history));
  eval::write_text_file(dir / "comm.csv", eval::comm_csv(res.ledger, c.training.seed));
  fl::SavedState saved;
  saved.state = res.state;
  saved.expert_spec = exp.expert_spec;
  if (res.state.gate) saved.gate_spec = exp.gate_spec;
  saved.method = fl::method_name(c.training.method);
  saved.seed = c.training.seed;
  fl::save_state(dir / "state.ckpt", saved);
  if (!res.history.empty()) {
    const auto& last = res.history.back();
    std::cout << "method=" << last.method << " seed=" << last.seed << " round=" << last.round
              << " global_acc=" << last.global_acc;
    if (last.routing_acc) std::cout << " routing_acc=" << *last.routing_acc;
    std::cout << " common_acc=" << exp.common_accuracy << "\n";
  }
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& state_path, const std::string& report_path,
             const std::string& routing_csv) {
  const auto c = resolve_config(f);
  const auto exp = fl::build_experiment(c);
  const auto saved = fl::load_state(state_path);
  if (!saved.state.gate) throw ConfigError("eval needs a state with a gate; baselines report through run");
  if (!(saved.expert_spec == exp.expert_spec) || !(*saved.gate_spec == exp.gate_spec))
    throw ConfigError("state networks do not match the config");
  const std::size_t k = c.federation.top_k;
  const auto zs = eval::zero_shot_eval(saved.state, exp.expert_spec, exp.gate_spec, exp.common, exp.test,
                                       exp.test_shards, k, &exp.test_embeddings);
  nlohmann::json out;
  out["seed"] = saved.seed;
  out["round"] = saved.state.round;
  out["average_accuracy"] = zs.average_accuracy;
  out["clients"] = nlohmann::json::array();
  for (const auto& cl : zs.clients)
    out["clients"].push_back({{"client_id", cl.client_id},
                              {"accuracy", cl.accuracy},
                              {"selection", cl.selection.indices},
                              {"chosen", cl.chosen}});
  std::cout << "zero_shot_acc=" << zs.average_accuracy;
  if (exp.routing_truth) {
    const auto rr = eval::per_sample_routing_report(saved.state, exp.expert_spec, exp.gate_spec, exp.common, exp.test,
                                                    exp.test_shards, *exp.routing_truth, k, &exp.test_embeddings);
    out["routing"]["average_error_rate"] = rr.average_error_rate;
    std::ostringstream csv;
    csv << "# seed=" << saved.seed << "\nclient,incorrect,correct,error_rate\n";
    for (const auto& cr : rr.clients) {
      out["routing"]["clients"].push_back({{"client_id", cr.client_id},
                                           {"incorrect", cr.incorrect},
                                           {"correct", cr.correct},
                                           {"error_rate", cr.error_rate}});
      csv << cr.client_id << ',' << cr.incorrect << ',' << cr.correct << ',' << cr.error_rate << "\n";
    }
    csv << "average,,," << rr.average_error_rate << "\n";
    if (!routing_csv.empty()) eval::write_text_file(routing_csv, csv.str());
    std::cout << " routing_error=" << rr.average_error_rate;
  }
  std::cout << "\n";
  eval::write_text_file(report_path, out.dump(2) + "\n");
  return 0;
}

int cmd_report(const std::vector<std::string>& files, std::size_t k, const std::string& out) {
  std::vector<fs::path> paths(files.begin(), files.end());
  const auto csv = eval::report_csv(eval::build_report(paths, k));
  if (out.empty())
    std::cout << csv;
  else
    eval::write_text_file(out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated mixture of experts with anchor clients"};
  app.require_subcommand(1);

  CommonFlags pre_flags, part_flags, run_flags, eval_flags;
  double target = -1.0;
  long long epochs = -1;
  auto* pre = app.add_subcommand("pretrain", "train the common expert centrally");
  add_common(pre, pre_flags, true);
  pre->add_option("--target-acc", target, "held-out accuracy to stop at");
  pre->add_option("--epochs", epochs, "epoch cap");

  bool inspect = false;
  auto* part = app.add_subcommand("partition", "print per-client label histograms");
  add_common(part, part_flags, false);
  part->add_flag("--inspect", inspect, "emit the histogram CSV");

  auto* run = app.add_subcommand("run", "train with the configured method");
  add_common(run, run_flags, true);

  std::string state_path, report_path, routing_csv;
  auto* ev = app.add_subcommand("eval", "zero-shot evaluation of a saved state");
  add_common(ev, eval_flags, false);
  ev->add_option("--state", state_path, "state.ckpt")->required();
  ev->add_option("--report", report_path, "JSON report path")->required();
  ev->add_option("--routing-csv", routing_csv, "per-client routing table");

  std::vector<std::string> files;
  std::size_t k = 10;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "best-of-last-k table across runs");
  rep->add_option("files", files, "metrics.jsonl files")->required();
  rep->add_option("--last", k, "evaluations considered");
  rep->add_option("--out", report_out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*pre) return cmd_pretrain(pre_flags, target, epochs);
    if (*part) return cmd_partition(part_flags);
    if (*run) return cmd_run(run_flags);
    if (*ev) return cmd_eval(eval_flags, state_path, report_path, routing_csv);
    if (*rep) return cmd_report(files, k, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
