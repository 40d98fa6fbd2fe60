#include "fedjets/fl/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedjets/error.hpp"
#include "fedjets/eval/zero_shot.hpp"
#include "fedjets/fl/parallel.hpp"
#include "fedjets/nn/optim.hpp"

namespace fedjets::fl {

std::size_t local_iterations(const TrainingConfig& training, std::size_t shard_size) {
  if (training.local_iterations >= 0) return static_cast<std::size_t>(training.local_iterations);
  return (shard_size + training.batch_size - 1) / training.batch_size;
}

MinibatchSampler::MinibatchSampler(std::size_t n, std::size_t batch_size)
    : batch_size_(batch_size), order_(n), cursor_(n) {
  if (n == 0 || batch_size == 0) throw ConfigError("minibatch sampler needs samples and a positive batch size");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> MinibatchSampler::next(Rng& rng) {
  if (cursor_ >= order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<std::size_t> rows(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return rows;
}

RoundPlan plan_round(std::size_t t, const Config& config, Rng& rng, std::span<const int> normal_pool) {
  const auto& f = config.federation;
  RoundPlan plan;
  plan.round = t;
  std::vector<int> anchors(f.num_experts);
  std::iota(anchors.begin(), anchors.end(), 0);
  std::sample(anchors.begin(), anchors.end(), std::back_inserter(plan.anchor_ids), f.anchors_per_round, rng);
  if (f.normals_per_round > 0) {
    if (normal_pool.empty()) throw ConfigError("round " + std::to_string(t) + " has no eligible normal clients");
    std::vector<int> pool(normal_pool.begin(), normal_pool.end());
    std::sort(pool.begin(), pool.end());
    std::sample(pool.begin(), pool.end(), std::back_inserter(plan.normal_ids), f.normals_per_round, rng);
  }
  return plan;
}

void select_experts(RoundPlan& plan, const nn::NetSpec& gate_spec, const nn::ParamVector& gate,
                    const gating::EmbeddingCache& embeddings, std::size_t k) {
  const gating::GateNet net{gate_spec, gate};
  plan.selections.clear();
  for (int id : plan.normal_ids) plan.selections.push_back(gating::select_topk(net, embeddings.at(id), k, id));
}

Rng client_rng(const Config& config, std::size_t round, int client_id) {
  return make_rng({config.training.seed, stream::kClient, round, static_cast<std::uint64_t>(client_id)});
}

namespace {

void check_loss(double loss, const char* what) {
  if (!std::isfinite(loss)) throw NumericError(std::string("non-finite ") + what + " loss");
}

const data::ClientShard& shard_of(const Experiment& exp, int client_id) {
  if (client_id < 0 || static_cast<std::size_t>(client_id) >= exp.train_shards.size())
    throw ConfigError("unknown training client " + std::to_string(client_id));
  return exp.train_shards[static_cast<std::size_t>(client_id)];
}

std::vector<std::size_t> sample_rows(const data::ClientShard& shard, std::span<const std::size_t> positions) {
  std::vector<std::size_t> rows;
  rows.reserve(positions.size());
  for (auto p : positions) rows.push_back(shard.samples[p]);
  return rows;
}

}  // namespace

UpdatePacket anchor_client_update(const ServerState& snapshot, const Experiment& exp, int client_id,
                                  std::size_t round) {
  const auto& shard = shard_of(exp, client_id);
  if (shard.kind != data::ShardKind::anchor || shard.assigned_expert < 0)
    throw ConfigError("client " + std::to_string(client_id) + " is not an anchor");
  if (!snapshot.gate) throw ConfigError("anchor update needs a gate");
  const auto q = static_cast<std::size_t>(shard.assigned_expert);
  const auto& tc = exp.config.training;

  nn::ParamVector expert = snapshot.experts.at(q);
  gating::GateNet gate{exp.gate_spec, *snapshot.gate};
  auto expert_opt = nn::OptimizerState::for_params(expert, tc.lr, tc.momentum);
  auto gate_opt = nn::OptimizerState::for_params(gate.params, tc.gate_lr, tc.gate_momentum);
  const nn::Matrix& emb = exp.train_embeddings.at(client_id);

  Rng rng = client_rng(exp.config, round, client_id);
  MinibatchSampler sampler(shard.samples.size(), tc.batch_size);
  const std::size_t iters = local_iterations(tc, shard.samples.size());
  for (std::size_t it = 0; it < iters; ++it) {
    const auto pos = sampler.next(rng);
    const auto batch = exp.train.batch(sample_rows(shard, pos));
    auto ce = nn::ce_loss_grad(exp.expert_spec, expert, batch);
    check_loss(ce.loss, "expert");
    auto gl = gating::gate_independent_loss_grad(gate, nn::gather_rows(emb, pos), q);
    check_loss(gl.loss, "gate");
    nn::sgdm_step(expert, ce.grad, expert_opt);
    nn::sgdm_step(gate.params, gl.grad, gate_opt);
  }

  UpdatePacket p;
  p.client_id = client_id;
  p.kind = data::ShardKind::anchor;
  p.gate = std::move(gate.params);
  p.experts.emplace(q, std::move(expert));
  p.sample_count = shard.samples.size();
  return p;
}

UpdatePacket normal_client_update(const ServerState& snapshot, const Experiment& exp, int client_id,
                                  const gating::ExpertSelection& selection, std::size_t round) {
  const auto& shard = shard_of(exp, client_id);
  if (!snapshot.gate) throw ConfigError("normal update needs a gate");
  if (selection.indices.size() != exp.config.federation.top_k)
    throw ConfigError("selection size differs from top_k");
  const auto& tc = exp.config.training;

  std::vector<nn::ParamVector> experts;
  std::vector<nn::OptimizerState> opts;
  for (auto i : selection.indices) {
    experts.push_back(snapshot.experts.at(i));
    opts.push_back(nn::OptimizerState::for_params(experts.back(), tc.lr, tc.momentum));
  }
  nn::ParamVector gate = *snapshot.gate;
  auto gate_opt = nn::OptimizerState::for_params(gate, tc.gate_lr, tc.gate_momentum);
  const nn::Matrix& emb = exp.train_embeddings.at(client_id);

  Rng rng = client_rng(exp.config, round, client_id);
  MinibatchSampler sampler(shard.samples.size(), tc.batch_size);
  const std::size_t iters = local_iterations(tc, shard.samples.size());
  for (std::size_t it = 0; it < iters; ++it) {
    const auto pos = sampler.next(rng);
    const auto batch = exp.train.batch(sample_rows(shard, pos));
    const auto gate_inputs = nn::gather_rows(emb, pos);
    nn::MixtureProblem prob;
    prob.expert_spec = &exp.expert_spec;
    prob.experts = experts;
    prob.gate_spec = &exp.gate_spec;
    prob.gate = &gate;
    prob.selected = selection.indices;
    prob.gate_inputs = &gate_inputs;
    prob.batch = &batch;
    prob.renormalize = exp.config.model.renormalize_gate;
    auto lg = nn::mixture_loss_grad(prob);
    check_loss(lg.loss, "mixture");
    for (std::size_t k = 0; k < experts.size(); ++k) nn::sgdm_step(experts[k], lg.expert_grads[k], opts[k]);
    nn::sgdm_step(gate, lg.gate_grad, gate_opt);
  }

  UpdatePacket p;
  p.client_id = client_id;
  p.kind = data::ShardKind::normal;
  p.gate = std::move(gate);
  for (std::size_t k = 0; k < experts.size(); ++k) p.experts.emplace(selection.indices[k], std::move(experts[k]));
  p.sample_count = shard.samples.size();
  return p;
}

namespace {

// Weighted mean of `vectors` with weights w normalized to sum 1.
nn::ParamVector weighted_mean(const std::vector<const nn::ParamVector*>& vectors, const std::vector<double>& raw) {
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  if (!(total > 0.0)) throw ProtocolError("aggregation weights sum to zero");
  nn::ParamVector out;
  out.spec_hash = vectors.front()->spec_hash;
  out.values.assign(vectors.front()->size(), 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const double w = raw[k] / total;
    const auto& v = vectors[k]->values;
    for (std::size_t i = 0; i < v.size(); ++i) out.values[i] += w * v[i];
  }
  return out;
}

}  // namespace

ServerState aggregate(const ServerState& state, std::vector<UpdatePacket> packets, const nn::NetSpec& expert_spec,
                      const nn::NetSpec* gate_spec, bool uniform_weighting) {
  std::stable_sort(packets.begin(), packets.end(),
                   [](const UpdatePacket& a, const UpdatePacket& b) { return a.client_id < b.client_id; });
  auto weight = [&](const UpdatePacket& p) { return uniform_weighting ? 1.0 : static_cast<double>(p.sample_count); };

  ServerState next = state;
  next.round = state.round + 1;

  std::vector<const nn::ParamVector*> gates;
  std::vector<double> gate_w;
  for (const auto& p : packets) {
    if (!p.gate) continue;
    if (gate_spec == nullptr) throw ProtocolError("packet carries a gate but the server has none");
    nn::check_params(*gate_spec, *p.gate);
    gates.push_back(&*p.gate);
    gate_w.push_back(weight(p));
  }
  if (!gates.empty()) next.gate = weighted_mean(gates, gate_w);

  for (const auto& p : packets)
    for (const auto& [i, v] : p.experts) {
      if (i >= state.experts.size()) throw ProtocolError("packet names expert " + std::to_string(i) + " out of range");
      nn::check_params(expert_spec, v);
    }
  for (std::size_t i = 0; i < state.experts.size(); ++i) {
    std::vector<const nn::ParamVector*> vs;
    std::vector<double> ws;
    for (const auto& p : packets) {
      auto it = p.experts.find(i);
      if (it == p.experts.end()) continue;
      vs.push_back(&it->second);
      ws.push_back(weight(p));
    }
    if (!vs.empty()) next.experts[i] = weighted_mean(vs, ws);
  }
  return next;
}

ServerState initial_state(const Experiment& exp) {
  const auto& c = exp.config;
  ServerState s;
  for (std::size_t i = 0; i < c.federation.num_experts; ++i) {
    if (c.model.expert_init == ExpertInit::from_common) {
      s.experts.push_back(exp.common.params);
    } else {
      Rng rng = make_rng({c.training.seed, stream::kExpertInit, i});
      s.experts.push_back(nn::init_params(exp.expert_spec, rng));
    }
  }
  Rng rng = make_rng({c.training.seed, stream::kGateInit});
  s.gate = nn::init_params(exp.gate_spec, rng);
  return s;
}

bool is_eval_round(std::size_t completed, std::size_t total, std::size_t interval) {
  if (completed == 0) return false;
  return completed == total || (interval > 0 && completed % interval == 0);
}

std::vector<double> group_accuracies(const Experiment& exp, std::span<const double> client_acc) {
  const std::size_t groups = exp.normal_groups.size();
  if (groups <= 1) return {};
  std::vector<double> sum(groups, 0.0), count(groups, 0.0);
  for (std::size_t i = 0; i < client_acc.size(); ++i) {
    sum[exp.test_groups[i]] += client_acc[i];
    count[exp.test_groups[i]] += 1.0;
  }
  for (std::size_t g = 0; g < groups; ++g) sum[g] = count[g] > 0 ? sum[g] / count[g] : 0.0;
  return sum;
}

eval::MetricsRecord evaluate_fedjets(const Experiment& exp, const ServerState& state) {
  const auto& c = exp.config;
  eval::MetricsRecord r;
  r.round = state.round;
  r.method = method_name(Method::fedjets);
  r.seed = c.training.seed;
  const auto zs = eval::zero_shot_eval(state, exp.expert_spec, exp.gate_spec, exp.common, exp.test, exp.test_shards,
                                       c.federation.top_k, &exp.test_embeddings);
  r.global_acc = zs.average_accuracy;
  r.per_expert_acc = eval::pooled_model_accuracy(exp.expert_spec, state.experts, exp.test, exp.test_shards);
  if (exp.routing_truth) {
    const auto rr = eval::per_sample_routing_report(state, exp.expert_spec, exp.gate_spec, exp.common, exp.test,
                                                    exp.test_shards, *exp.routing_truth, c.federation.top_k,
                                                    &exp.test_embeddings);
    r.routing_acc = 1.0 - rr.average_error_rate;
  }
  // zs.clients is in ascending id order, which is exp.test_shards order.
  std::vector<double> acc;
  for (const auto& cl : zs.clients) acc.push_back(cl.accuracy);
  r.group_acc = group_accuracies(exp, acc);
  return r;
}

RunResult run_training(const Experiment& exp, const ScenarioSchedule* schedule) {
  const auto& c = exp.config;
  const ModelSizes sizes{exp.expert_spec.param_count(), exp.gate_spec.param_count(), exp.common.spec.param_count()};
  RunResult res;
  res.state = initial_state(exp);
  res.ledger = CommLedger(Method::fedjets, setup_cost(Method::fedjets, c, sizes));
  if (schedule != nullptr) schedule->validate(c.training.rounds);
  const auto all_normals = exp.normal_ids();

  Rng plan_rng = make_rng({c.training.seed, stream::kPlan});
  for (std::size_t t = 0; t < c.training.rounds; ++t) {
    const auto& pool = schedule != nullptr ? schedule->active_at(t) : all_normals;
    RoundPlan plan = plan_round(t, c, plan_rng, pool);
    select_experts(plan, exp.gate_spec, *res.state.gate, exp.train_embeddings, c.federation.top_k);

    const std::size_t n_a = plan.anchor_ids.size();
    const ServerState& snapshot = res.state;
    auto packets = parallel_map<UpdatePacket>(n_a + plan.normal_ids.size(), c.training.threads, [&](std::size_t i) {
      const int id = i < n_a ? plan.anchor_ids[i] : plan.normal_ids[i - n_a];
      try {
        if (i < n_a) return anchor_client_update(snapshot, exp, id, t);
        return normal_client_update(snapshot, exp, id, plan.selections[i - n_a], t);
      } catch (const NumericError& e) {
        throw NumericError("round " + std::to_string(t) + ", client " + std::to_string(id) + ": " + e.what());
      }
    });
    res.state = aggregate(res.state, std::move(packets), exp.expert_spec, &exp.gate_spec,
                          c.federation.uniform_weighting);
    res.ledger.record(comm_cost(Method::fedjets, plan, c, sizes));

    if (is_eval_round(t + 1, c.training.rounds, c.eval.interval)) {
      auto rec = evaluate_fedjets(exp, res.state);
      rec.floats_down_cum = res.ledger.floats_down_cum();
      rec.floats_up_cum = res.ledger.floats_up_cum();
      res.history.push_back(std::move(rec));
    }
  }
  return res;
}

}  // namespace fedjets::fl
