#include "fedjets/baselines/baselines.hpp"

#include <cmath>
#include <numeric>

#include "fedjets/error.hpp"
#include "fedjets/eval/zero_shot.hpp"
#include "fedjets/fl/parallel.hpp"
#include "fedjets/nn/optim.hpp"

namespace fedjets::baselines {

namespace {

using fl::Experiment;
using fl::Method;
using fl::UpdatePacket;

const data::ClientShard& shard_of(const Experiment& exp, int client_id) {
  if (client_id < 0 || static_cast<std::size_t>(client_id) >= exp.train_shards.size())
    throw ConfigError("unknown training client " + std::to_string(client_id));
  return exp.train_shards[static_cast<std::size_t>(client_id)];
}

std::vector<std::size_t> sample_rows(const data::ClientShard& shard, std::span<const std::size_t> positions) {
  std::vector<std::size_t> rows;
  for (auto p : positions) rows.push_back(shard.samples[p]);
  return rows;
}

Rng rng_for(std::uint64_t seed, std::size_t round, int client_id) {
  return make_rng({seed, stream::kClient, round, static_cast<std::uint64_t>(client_id)});
}

UpdatePacket local_sgd(const nn::ParamVector& global, const Experiment& exp, int client_id, std::size_t round,
                       std::uint64_t seed, double mu) {
  const auto& shard = shard_of(exp, client_id);
  const auto& tc = exp.config.training;
  nn::ParamVector w = global;
  auto opt = nn::OptimizerState::for_params(w, tc.lr, tc.momentum);
  Rng rng = rng_for(seed, round, client_id);
  fl::MinibatchSampler sampler(shard.samples.size(), tc.batch_size);
  const std::size_t iters = fl::local_iterations(tc, shard.samples.size());
  for (std::size_t it = 0; it < iters; ++it) {
    const auto batch = exp.train.batch(sample_rows(shard, sampler.next(rng)));
    auto lg = nn::ce_loss_grad(exp.expert_spec, w, batch);
    if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss");
    if (mu != 0.0)
      for (std::size_t i = 0; i < w.values.size(); ++i) lg.grad.values[i] += mu * (w.values[i] - global.values[i]);
    nn::sgdm_step(w, lg.grad, opt);
  }
  UpdatePacket p;
  p.client_id = client_id;
  p.kind = shard.kind;
  p.experts.emplace(0, std::move(w));
  p.sample_count = shard.samples.size();
  return p;
}

}  // namespace

fl::UpdatePacket fedavg_client_update(const nn::ParamVector& global, const Experiment& exp, int client_id,
                                      std::size_t round, std::uint64_t seed) {
  return local_sgd(global, exp, client_id, round, seed, 0.0);
}

fl::UpdatePacket fedprox_client_update(const nn::ParamVector& global, const Experiment& exp, int client_id,
                                       std::size_t round, std::uint64_t seed, double mu) {
  if (mu < 0.0) throw ConfigError("fedprox mu must be non-negative");
  return local_sgd(global, exp, client_id, round, seed, mu);
}

std::vector<int> avg_ensemble_predict(const nn::NetSpec& spec, std::span<const nn::ParamVector> models,
                                      const nn::Matrix& inputs) {
  if (models.empty()) throw ConfigError("ensemble needs at least one model");
  nn::Matrix mean(inputs.rows, spec.output_dim());
  for (const auto& m : models) {
    const auto probs = nn::softmax_rows(nn::forward(spec, m, inputs));
    for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += probs.data[i];
  }
  // Dividing by the model count does not move the argmax.
  return nn::argmax_rows(mean);
}

std::vector<int> uniform_mixture_predict(const nn::NetSpec& spec, std::span<const nn::ParamVector> experts,
                                         const nn::Matrix& inputs) {
  if (experts.empty()) throw ConfigError("mixture needs at least one expert");
  nn::Matrix sum(inputs.rows, spec.output_dim());
  for (const auto& e : experts) {
    const auto out = nn::forward(spec, e, inputs);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += out.data[i];
  }
  return nn::argmax_rows(sum);
}

namespace {

std::pair<UpdatePacket, nn::ParamVector> fedmix_client_update(const FedMixState& state, const Experiment& exp,
                                                               int client_id, std::size_t round) {
  const auto& shard = shard_of(exp, client_id);
  const auto& c = exp.config;
  const auto& tc = c.training;
  const std::size_t M = state.server.experts.size();

  nn::ParamVector gate;
  if (auto it = state.local_gates.find(client_id); it != state.local_gates.end()) {
    gate = it->second;
  } else {
    Rng grng = make_rng({tc.seed, stream::kLocalGate, static_cast<std::uint64_t>(client_id)});
    gate = nn::init_params(exp.gate_spec, grng);
  }
  std::vector<nn::ParamVector> experts = state.server.experts;
  std::vector<nn::OptimizerState> opts;
  for (const auto& e : experts) opts.push_back(nn::OptimizerState::for_params(e, tc.lr, tc.momentum));
  auto gate_opt = nn::OptimizerState::for_params(gate, tc.gate_lr, tc.gate_momentum);
  std::vector<std::size_t> selected(M);
  std::iota(selected.begin(), selected.end(), std::size_t{0});
  const nn::Matrix& emb = exp.train_embeddings.at(client_id);

  Rng rng = rng_for(tc.seed, round, client_id);
  fl::MinibatchSampler sampler(shard.samples.size(), tc.batch_size);
  const std::size_t iters = fl::local_iterations(tc, shard.samples.size());
  for (std::size_t it = 0; it < iters; ++it) {
    const auto pos = sampler.next(rng);
    const auto batch = exp.train.batch(sample_rows(shard, pos));
    const auto gate_inputs = nn::gather_rows(emb, pos);
    nn::MixtureProblem prob;
    prob.expert_spec = &exp.expert_spec;
    prob.experts = experts;
    prob.gate_spec = &exp.gate_spec;
    prob.gate = &gate;
    prob.selected = selected;
    prob.gate_inputs = &gate_inputs;
    prob.batch = &batch;
    auto lg = nn::mixture_loss_grad(prob);
    if (!std::isfinite(lg.loss)) throw NumericError("non-finite mixture loss");
    for (std::size_t k = 0; k < M; ++k) nn::sgdm_step(experts[k], lg.expert_grads[k], opts[k]);
    nn::sgdm_step(gate, lg.gate_grad, gate_opt);
  }
  UpdatePacket p;
  p.client_id = client_id;
  p.kind = shard.kind;
  for (std::size_t k = 0; k < M; ++k) p.experts.emplace(k, std::move(experts[k]));
  p.sample_count = shard.samples.size();
  return {std::move(p), std::move(gate)};
}

std::vector<int> plan_clients(const fl::RoundPlan& plan) {
  std::vector<int> ids = plan.anchor_ids;
  ids.insert(ids.end(), plan.normal_ids.begin(), plan.normal_ids.end());
  return ids;
}

template <typename Fn>
auto with_context(std::size_t round, int id, Fn fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError("round " + std::to_string(round) + ", client " + std::to_string(id) + ": " + e.what());
  }
}

}  // namespace

FedMixState fedmix_round(const FedMixState& state, const fl::RoundPlan& plan, const Experiment& exp) {
  const auto ids = plan_clients(plan);
  auto results = fl::parallel_map<std::pair<UpdatePacket, nn::ParamVector>>(
      ids.size(), exp.config.training.threads, [&](std::size_t i) {
        return with_context(plan.round, ids[i], [&] { return fedmix_client_update(state, exp, ids[i], plan.round); });
      });
  FedMixState next;
  next.local_gates = state.local_gates;
  std::vector<UpdatePacket> packets;
  for (auto& [packet, gate] : results) {
    next.local_gates[packet.client_id] = std::move(gate);
    packets.push_back(std::move(packet));
  }
  next.server = fl::aggregate(state.server, std::move(packets), exp.expert_spec, nullptr,
                              exp.config.federation.uniform_weighting);
  return next;
}

std::uint64_t ensemble_track_seed(std::uint64_t seed, std::size_t track) {
  return track == 0 ? seed : derive_seed({seed, stream::kEnsemble, track});
}

namespace {

double client_accuracy(const std::vector<int>& predicted, const data::LabeledDataset& ds,
                       const data::ClientShard& shard) {
  std::vector<int> labels;
  for (auto i : shard.samples) labels.push_back(ds.labels[i]);
  return nn::accuracy(predicted, labels);
}

eval::MetricsRecord evaluate_baseline(const Experiment& exp, const fl::ServerState& state) {
  const auto& c = exp.config;
  eval::MetricsRecord r;
  r.round = state.round;
  r.method = fl::method_name(c.training.method);
  r.seed = c.training.seed;
  std::vector<double> acc;
  for (const auto& shard : exp.test_shards) {
    const nn::Matrix inputs = nn::gather_rows(exp.test.inputs, shard.samples);
    std::vector<int> pred;
    switch (c.training.method) {
      case Method::fedavg:
      case Method::fedprox:
        pred = nn::argmax_rows(nn::forward(exp.expert_spec, state.experts.front(), inputs));
        break;
      case Method::avg_ensemble:
        pred = avg_ensemble_predict(exp.expert_spec, state.experts, inputs);
        break;
      case Method::fedmix:
        pred = uniform_mixture_predict(exp.expert_spec, state.experts, inputs);
        break;
      case Method::fedjets:
        throw ConfigError("fedjets is not a baseline");
    }
    acc.push_back(client_accuracy(pred, exp.test, shard));
  }
  r.global_acc = acc.empty() ? 0.0 : std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  r.per_expert_acc = eval::pooled_model_accuracy(exp.expert_spec, state.experts, exp.test, exp.test_shards);
  r.group_acc = fl::group_accuracies(exp, acc);
  return r;
}

}  // namespace

fl::RunResult run_baseline(const Experiment& exp, const fl::ScenarioSchedule* schedule) {
  const auto& c = exp.config;
  const Method method = c.training.method;
  if (method == Method::fedjets) throw ConfigError("fedjets is not a baseline");
  const fl::ModelSizes sizes{exp.expert_spec.param_count(), exp.gate_spec.param_count(),
                             exp.common.spec.param_count()};
  if (method != Method::fedmix && !(exp.common.spec == exp.expert_spec))
    throw ConfigError("baselines start from the common expert and need its architecture");

  fl::RunResult res;
  res.ledger = fl::CommLedger(method, fl::setup_cost(method, c, sizes));
  FedMixState mix;
  switch (method) {
    case Method::fedavg:
    case Method::fedprox:
      res.state.experts = {exp.common.params};
      break;
    case Method::avg_ensemble:
      res.state.experts.assign(c.training.ensemble_size, exp.common.params);
      break;
    case Method::fedmix: {
      auto init = fl::initial_state(exp);
      mix.server.experts = std::move(init.experts);
      break;
    }
    case Method::fedjets:
      break;
  }
  if (method == Method::fedmix) res.state = mix.server;
  if (schedule != nullptr) schedule->validate(c.training.rounds);
  const auto all_normals = exp.normal_ids();

  Rng plan_rng = make_rng({c.training.seed, stream::kPlan});
  for (std::size_t t = 0; t < c.training.rounds; ++t) {
    const auto& pool = schedule != nullptr ? schedule->active_at(t) : all_normals;
    const fl::RoundPlan plan = fl::plan_round(t, c, plan_rng, pool);
    if (method == Method::fedmix) {
      mix = fedmix_round(mix, plan, exp);
      res.state = mix.server;
    } else {
      const auto ids = plan_clients(plan);
      const fl::ServerState snapshot = res.state;
      fl::ServerState next = snapshot;
      next.round = snapshot.round + 1;
      for (std::size_t track = 0; track < snapshot.experts.size(); ++track) {
        const std::uint64_t seed = ensemble_track_seed(c.training.seed, track);
        auto packets = fl::parallel_map<UpdatePacket>(ids.size(), c.training.threads, [&](std::size_t i) {
          return with_context(t, ids[i], [&] {
            if (method == Method::fedprox)
              return fedprox_client_update(snapshot.experts[track], exp, ids[i], t, seed, c.training.fedprox_mu);
            return fedavg_client_update(snapshot.experts[track], exp, ids[i], t, seed);
          });
        });
        fl::ServerState single;
        single.experts = {snapshot.experts[track]};
        next.experts[track] = fl::aggregate(single, std::move(packets), exp.expert_spec, nullptr,
                                            c.federation.uniform_weighting)
                                  .experts.front();
      }
      res.state = std::move(next);
    }
    res.ledger.record(fl::comm_cost(method, plan, c, sizes));

    if (fl::is_eval_round(t + 1, c.training.rounds, c.eval.interval)) {
      auto rec = evaluate_baseline(exp, res.state);
      rec.floats_down_cum = res.ledger.floats_down_cum();
      rec.floats_up_cum = res.ledger.floats_up_cum();
      res.history.push_back(std::move(rec));
    }
  }
  return res;
}

fl::RunResult run_method(const Experiment& exp, const fl::ScenarioSchedule* schedule) {
  if (exp.config.training.method == Method::fedjets) return fl::run_training(exp, schedule);
  return run_baseline(exp, schedule);
}

}  // namespace fedjets::baselines
