#include "fedjets/fl/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "fedjets/error.hpp"

namespace fedjets::fl {

namespace {

using nlohmann::json;

// Reads known keys of one section and rejects the rest.
class SectionReader {
 public:
  SectionReader(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      section_ = root.at(name_);
      if (!section_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    } else {
      section_ = json::object();
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!section_.contains(key)) return;
    const auto& v = section_.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError("config field " + name_ + "." + key + " must be an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned())
        throw ConfigError("config field " + name_ + "." + key + " must be non-negative");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config field " + name_ + "." + key + ": " + e.what());
    }
  }

  template <typename E>
  void read_enum(const char* key, E& out, E (*parse)(const std::string&)) {
    std::string text;
    known_.insert(key);
    if (!section_.contains(key)) return;
    read(key, text);
    out = parse(text);
  }

  void finish() const {
    for (const auto& item : section_.items())
      if (!known_.contains(item.key())) throw ConfigError("unknown config key " + name_ + "." + item.key());
  }

 private:
  std::string name_;
  json section_;
  std::set<std::string> known_;
};

PartitionKind parse_partition(const std::string& s) {
  if (s == "quantity") return PartitionKind::quantity;
  if (s == "dirichlet") return PartitionKind::dirichlet;
  throw ConfigError("unknown partition '" + s + "'");
}

const char* partition_name(PartitionKind k) { return k == PartitionKind::quantity ? "quantity" : "dirichlet"; }

ExpertInit parse_expert_init(const std::string& s) {
  if (s == "scratch") return ExpertInit::scratch;
  if (s == "from_common") return ExpertInit::from_common;
  throw ConfigError("unknown expert_init '" + s + "'");
}

const char* expert_init_name(ExpertInit e) { return e == ExpertInit::scratch ? "scratch" : "from_common"; }

ScenarioKind parse_scenario(const std::string& s) {
  if (s == "none") return ScenarioKind::none;
  if (s == "growing") return ScenarioKind::growing;
  if (s == "cyclic") return ScenarioKind::cyclic;
  throw ConfigError("unknown scenario kind '" + s + "'");
}

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::none:
      return "none";
    case ScenarioKind::growing:
      return "growing";
    case ScenarioKind::cyclic:
      return "cyclic";
  }
  return "none";
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::fedjets:
      return "fedjets";
    case Method::fedavg:
      return "fedavg";
    case Method::fedprox:
      return "fedprox";
    case Method::avg_ensemble:
      return "avg_ensemble";
    case Method::fedmix:
      return "fedmix";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::fedjets, Method::fedavg, Method::fedprox, Method::avg_ensemble, Method::fedmix})
    if (s == method_name(m)) return m;
  throw ConfigError("unknown method '" + s + "'");
}

void Config::validate() const {
  const auto& d = data;
  require(d.num_classes >= 2 && d.dim >= 2 && d.per_class >= 2, "data needs num_classes, dim, per_class >= 2");
  require(d.test_per_class >= 1, "data.test_per_class must be >= 1");
  require(d.separation >= 0.0, "data.separation must be >= 0");
  require(d.labels_per_client >= 1 && d.labels_per_client <= d.num_classes,
          "data.labels_per_client must lie in [1, num_classes]");
  require(d.alpha > 0.0, "data.alpha must be > 0");
  require(d.test_labels_per_client >= 1 && d.test_labels_per_client <= d.num_classes,
          "data.test_labels_per_client must lie in [1, num_classes]");
  require(d.anchor_labels >= 1, "data.anchor_labels must be >= 1");

  const auto& f = federation;
  require(f.num_experts >= 1, "federation.num_experts must be >= 1");
  require(f.top_k >= 1 && f.top_k <= f.num_experts, "federation.top_k must lie in [1, num_experts]");
  require(f.num_clients > f.num_experts, "federation.num_clients must exceed num_experts (anchors are clients)");
  require(f.anchors_per_round <= f.num_experts, "federation.anchors_per_round must be <= num_experts");
  require(f.normals_per_round <= f.num_clients - f.num_experts,
          "federation.normals_per_round must be <= num_clients - num_experts");
  require(f.anchors_per_round + f.normals_per_round >= 1, "at least one client must be active per round");
  require(f.test_clients >= 1, "federation.test_clients must be >= 1");
  if (d.anchor_disjoint)
    require(f.num_experts * d.anchor_labels <= d.num_classes,
            "disjoint anchors need num_experts * anchor_labels <= num_classes");

  const auto& t = training;
  require(t.lr > 0.0 && t.gate_lr > 0.0, "learning rates must be > 0");
  require(t.momentum >= 0.0 && t.momentum < 1.0, "training.momentum must lie in [0, 1)");
  require(t.gate_momentum >= 0.0 && t.gate_momentum < 1.0, "training.gate_momentum must lie in [0, 1)");
  require(t.batch_size >= 1, "training.batch_size must be >= 1");
  require(t.local_iterations >= -1, "training.local_iterations must be >= -1");
  require(t.fedprox_mu >= 0.0, "training.fedprox_mu must be >= 0");
  require(t.ensemble_size >= 2, "training.ensemble_size must be >= 2");
  require(t.threads >= 1, "training.threads must be >= 1");

  for (auto h : model.hidden) require(h >= 1, "model.hidden widths must be >= 1");
  require(model.common_target_acc >= 0.0 && model.common_target_acc <= 1.0,
          "model.common_target_acc must lie in [0, 1]");
  require(model.common_lr > 0.0 && model.common_batch_size >= 1, "common expert pretraining needs lr > 0, batch >= 1");
  require(model.common_momentum >= 0.0 && model.common_momentum < 1.0, "model.common_momentum must lie in [0, 1)");
  const int depth = static_cast<int>(model.hidden.size()) + 1;
  require(model.embed_layer >= -1 && model.embed_layer <= depth, "model.embed_layer out of range");

  require(eval.interval >= 1, "eval.interval must be >= 1");
  if (scenario.kind != ScenarioKind::none) {
    require(scenario.groups >= 1 && scenario.groups <= d.num_classes, "scenario.groups must lie in [1, num_classes]");
    require(f.num_clients - f.num_experts >= scenario.groups, "every scenario group needs a normal client");
  }
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections = {"data", "model", "federation", "training", "eval", "scenario"};
  for (const auto& item : j.items())
    if (!kSections.contains(item.key())) throw ConfigError("unknown config section '" + item.key() + "'");

  Config c;
  {
    SectionReader r(j, "data");
    auto& d = c.data;
    r.read("num_classes", d.num_classes);
    r.read("dim", d.dim);
    r.read("per_class", d.per_class);
    r.read("test_per_class", d.test_per_class);
    r.read("separation", d.separation);
    r.read("seed", d.seed);
    r.read_enum("partition", d.partition, parse_partition);
    r.read("labels_per_client", d.labels_per_client);
    r.read("alpha", d.alpha);
    r.read("samples_per_client", d.samples_per_client);
    r.read("with_replacement", d.with_replacement);
    r.read("anchor_labels", d.anchor_labels);
    r.read("anchor_disjoint", d.anchor_disjoint);
    r.read("anchor_samples_per_label", d.anchor_samples_per_label);
    r.read("test_labels_per_client", d.test_labels_per_client);
    r.read("test_samples_per_client", d.test_samples_per_client);
    r.finish();
  }
  {
    SectionReader r(j, "model");
    auto& m = c.model;
    r.read("hidden", m.hidden);
    r.read("gate_hidden", m.gate_hidden);
    r.read("embed_layer", m.embed_layer);
    r.read("renormalize_gate", m.renormalize_gate);
    r.read_enum("expert_init", m.expert_init, parse_expert_init);
    r.read("common_checkpoint", m.common_checkpoint);
    r.read("common_target_acc", m.common_target_acc);
    r.read("common_max_epochs", m.common_max_epochs);
    r.read("common_lr", m.common_lr);
    r.read("common_momentum", m.common_momentum);
    r.read("common_batch_size", m.common_batch_size);
    r.finish();
  }
  {
    SectionReader r(j, "federation");
    auto& f = c.federation;
    r.read("num_clients", f.num_clients);
    r.read("num_experts", f.num_experts);
    r.read("top_k", f.top_k);
    r.read("anchors_per_round", f.anchors_per_round);
    r.read("normals_per_round", f.normals_per_round);
    r.read("test_clients", f.test_clients);
    r.read("uniform_weighting", f.uniform_weighting);
    r.finish();
  }
  {
    SectionReader r(j, "training");
    auto& t = c.training;
    r.read_enum("method", t.method, parse_method);
    r.read("rounds", t.rounds);
    r.read("local_iterations", t.local_iterations);
    r.read("lr", t.lr);
    r.read("gate_lr", t.gate_lr);
    r.read("momentum", t.momentum);
    r.read("gate_momentum", t.gate_momentum);
    r.read("batch_size", t.batch_size);
    r.read("seed", t.seed);
    r.read("fedprox_mu", t.fedprox_mu);
    r.read("ensemble_size", t.ensemble_size);
    r.read("threads", t.threads);
    r.finish();
  }
  {
    SectionReader r(j, "eval");
    r.read("interval", c.eval.interval);
    r.finish();
  }
  {
    SectionReader r(j, "scenario");
    r.read_enum("kind", c.scenario.kind, parse_scenario);
    r.read("groups", c.scenario.groups);
    r.read("period", c.scenario.period);
    r.finish();
  }
  c.validate();
  return c;
}

json config_to_json(const Config& c) {
  const auto& d = c.data;
  const auto& m = c.model;
  const auto& f = c.federation;
  const auto& t = c.training;
  return json{
      {"data",
       {{"num_classes", d.num_classes},
        {"dim", d.dim},
        {"per_class", d.per_class},
        {"test_per_class", d.test_per_class},
        {"separation", d.separation},
        {"seed", d.seed},
        {"partition", partition_name(d.partition)},
        {"labels_per_client", d.labels_per_client},
        {"alpha", d.alpha},
        {"samples_per_client", d.samples_per_client},
        {"with_replacement", d.with_replacement},
        {"anchor_labels", d.anchor_labels},
        {"anchor_disjoint", d.anchor_disjoint},
        {"anchor_samples_per_label", d.anchor_samples_per_label},
        {"test_labels_per_client", d.test_labels_per_client},
        {"test_samples_per_client", d.test_samples_per_client}}},
      {"model",
       {{"hidden", m.hidden},
        {"gate_hidden", m.gate_hidden},
        {"embed_layer", m.embed_layer},
        {"renormalize_gate", m.renormalize_gate},
        {"expert_init", expert_init_name(m.expert_init)},
        {"common_checkpoint", m.common_checkpoint},
        {"common_target_acc", m.common_target_acc},
        {"common_max_epochs", m.common_max_epochs},
        {"common_lr", m.common_lr},
        {"common_momentum", m.common_momentum},
        {"common_batch_size", m.common_batch_size}}},
      {"federation",
       {{"num_clients", f.num_clients},
        {"num_experts", f.num_experts},
        {"top_k", f.top_k},
        {"anchors_per_round", f.anchors_per_round},
        {"normals_per_round", f.normals_per_round},
        {"test_clients", f.test_clients},
        {"uniform_weighting", f.uniform_weighting}}},
      {"training",
       {{"method", method_name(t.method)},
        {"rounds", t.rounds},
        {"local_iterations", t.local_iterations},
        {"lr", t.lr},
        {"gate_lr", t.gate_lr},
        {"momentum", t.momentum},
        {"gate_momentum", t.gate_momentum},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"fedprox_mu", t.fedprox_mu},
        {"ensemble_size", t.ensemble_size},
        {"threads", t.threads}}},
      {"eval", {{"interval", c.eval.interval}}},
      {"scenario",
       {{"kind", scenario_name(c.scenario.kind)}, {"groups", c.scenario.groups}, {"period", c.scenario.period}}}};
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace fedjets::fl
