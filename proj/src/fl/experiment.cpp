#include "fedjets/fl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedjets/error.hpp"
#include "fedjets/nn/optim.hpp"
#include "fedjets/rng.hpp"

namespace fedjets::fl {

namespace {

double evaluate(const nn::NetSpec& spec, const nn::ParamVector& params, const data::LabeledDataset& ds) {
  return nn::accuracy(nn::argmax_rows(nn::forward(spec, params, ds.inputs)), ds.labels);
}

// Contiguous label blocks, one per scenario group.
std::vector<std::vector<int>> split_labels(std::size_t num_classes, std::size_t groups) {
  std::vector<std::vector<int>> out(groups);
  for (std::size_t c = 0; c < num_classes; ++c) out[c * groups / num_classes].push_back(static_cast<int>(c));
  return out;
}

}  // namespace

PretrainResult pretrain_common(const nn::NetSpec& spec, const data::LabeledDataset& train,
                               const data::LabeledDataset& held_out, double target, std::size_t max_epochs,
                               double lr, double momentum, std::size_t batch_size, std::uint64_t seed) {
  Rng rng = make_rng({seed, stream::kPretrain});
  PretrainResult result;
  nn::ParamVector params = nn::init_params(spec, rng);
  auto opt = nn::OptimizerState::for_params(params, lr, momentum);
  const double chance = 1.0 / static_cast<double>(spec.output_dim());
  result.accuracy = evaluate(spec, params, held_out);
  result.reached = target <= chance || result.accuracy >= target;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = (train.size() + batch_size - 1) / batch_size;
  for (std::size_t epoch = 0; epoch < max_epochs && !result.reached; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < steps_per_epoch && !result.reached; ++b) {
      const std::size_t lo = b * batch_size;
      const std::size_t hi = std::min(lo + batch_size, order.size());
      auto batch = train.batch(std::span<const std::size_t>(order).subspan(lo, hi - lo));
      auto lg = nn::ce_loss_grad(spec, params, batch);
      nn::sgdm_step(params, lg.grad, opt);
      ++result.steps;
      result.accuracy = evaluate(spec, params, held_out);
      result.reached = result.accuracy >= target;
    }
  }
  result.epochs = static_cast<double>(result.steps) / static_cast<double>(steps_per_epoch);
  result.checkpoint.spec = spec;
  result.checkpoint.params = std::move(params);
  result.checkpoint.meta = {{"accuracy", result.accuracy}, {"steps", result.steps}, {"epochs", result.epochs},
                            {"seed", seed},                {"target", target},      {"reached", result.reached}};
  return result;
}

std::vector<int> Experiment::normal_ids() const {
  std::vector<int> ids;
  for (const auto& s : train_shards)
    if (s.kind == data::ShardKind::normal) ids.push_back(s.client_id);
  return ids;
}

nn::NetSpec expert_spec_for(const Config& config) {
  return nn::NetSpec::mlp(config.data.dim, config.model.hidden, config.data.num_classes);
}

data::TrainTestSplit make_data(const Config& config) {
  const auto& d = config.data;
  auto pooled = data::synth_dataset(d.num_classes, d.dim, d.per_class + d.test_per_class, d.separation, d.seed);
  return data::split_per_class(pooled, d.test_per_class);
}

Experiment build_experiment(const Config& config, std::optional<nn::Checkpoint> common) {
  config.validate();
  Experiment exp;
  exp.config = config;
  const auto& d = config.data;
  const auto& f = config.federation;
  auto split = make_data(config);
  exp.train = std::move(split.train);
  exp.test = std::move(split.test);
  exp.expert_spec = expert_spec_for(config);

  // Anchors are clients 0..M-1, normals M..S-1, test clients S..S+U-1.
  data::AnchorOptions aopt;
  aopt.disjoint = d.anchor_disjoint;
  aopt.alpha = d.alpha;
  aopt.samples_per_label = d.anchor_samples_per_label;
  exp.train_shards = data::make_anchor_shards(exp.train, f.num_experts, d.anchor_labels, d.seed, aopt);

  const std::size_t num_normals = f.num_clients - f.num_experts;
  const std::size_t groups = config.scenario.kind == ScenarioKind::none ? 1 : config.scenario.groups;
  exp.group_labels = groups == 1 ? std::vector<std::vector<int>>{{}} : split_labels(d.num_classes, groups);
  int next_id = static_cast<int>(f.num_experts);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t count = num_normals / groups + (g < num_normals % groups ? 1 : 0);
    data::PartitionOptions popt;
    popt.with_replacement = d.with_replacement;
    popt.first_client_id = next_id;
    popt.allowed_labels = exp.group_labels[g];
    popt.samples_per_client = d.samples_per_client > 0 ? d.samples_per_client : exp.train.size() / f.num_clients;
    const std::uint64_t seed = derive_seed({d.seed, g});
    std::vector<data::ClientShard> shards;
    if (d.partition == PartitionKind::quantity) {
      const std::size_t available = popt.allowed_labels.empty() ? d.num_classes : popt.allowed_labels.size();
      shards = data::partition_quantity(exp.train, count, std::min(d.labels_per_client, available), seed, popt);
    } else {
      popt.samples_per_client = 0;
      shards = data::partition_dirichlet(exp.train, count, d.alpha, seed, popt);
    }
    std::vector<int> ids;
    for (auto& s : shards) {
      ids.push_back(s.client_id);
      exp.train_shards.push_back(std::move(s));
    }
    exp.normal_groups.push_back(std::move(ids));
    next_id += static_cast<int>(count);
  }

  next_id = static_cast<int>(f.num_clients);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t count = f.test_clients / groups + (g < f.test_clients % groups ? 1 : 0);
    if (count == 0) continue;
    data::TestClientOptions topt;
    topt.labels_per_client = d.test_labels_per_client;
    topt.samples_per_client = d.test_samples_per_client;
    topt.allowed_labels = exp.group_labels[g];
    topt.first_client_id = next_id;
    if (!topt.allowed_labels.empty())
      topt.labels_per_client = std::min(topt.labels_per_client, topt.allowed_labels.size());
    auto shards = data::make_test_clients(exp.test, count, derive_seed({d.seed, g}), exp.train_shards, topt);
    for (auto& s : shards) {
      exp.test_shards.push_back(std::move(s));
      exp.test_groups.push_back(g);
    }
    next_id += static_cast<int>(count);
  }

  if (!common) {
    const auto& m = config.model;
    if (!m.common_checkpoint.empty()) {
      common = nn::load_checkpoint(m.common_checkpoint);
    } else {
      common = pretrain_common(exp.expert_spec, exp.train, exp.test, m.common_target_acc, m.common_max_epochs,
                               m.common_lr, m.common_momentum, m.common_batch_size, d.seed)
                   .checkpoint;
      // Same float32 rounding as a saved and reloaded checkpoint.
      common = nn::decode_checkpoint(nn::encode_checkpoint(*common));
    }
  }
  if (common->spec.input_dim() != d.dim) throw ConfigError("common expert input dim does not match the data");
  exp.common_meta = common->meta;
  exp.common = gating::CommonExpert::make(common->spec, common->params, config.model.embed_layer);
  exp.common_accuracy = evaluate(exp.common.spec, exp.common.params, exp.test);
  if (config.model.expert_init == ExpertInit::from_common && !(exp.common.spec == exp.expert_spec))
    throw ConfigError("expert_init=from_common needs the common expert to share the expert architecture");

  exp.gate_spec = gating::GateNet::make_spec(exp.common.embed_dim(), f.num_experts, config.model.gate_hidden);
  for (const auto& s : exp.train_shards) exp.train_embeddings.get_or_compute(exp.common, s, exp.train);
  for (const auto& s : exp.test_shards) exp.test_embeddings.get_or_compute(exp.common, s, exp.test);

  if (d.anchor_disjoint) {
    std::vector<int> truth(d.num_classes, -1);
    for (std::size_t q = 0; q < f.num_experts; ++q)
      for (int y : exp.train_shards[q].label_set()) truth[static_cast<std::size_t>(y)] = static_cast<int>(q);
    exp.routing_truth = std::move(truth);
  }
  return exp;
}

}  // namespace fedjets::fl
