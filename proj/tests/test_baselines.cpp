#include <doctest.h>

#include <cmath>

#include "fedjets/baselines/baselines.hpp"
#include "fedjets/error.hpp"
#include "fedjets/nn/optim.hpp"
#include "oracle.hpp"

using namespace fedjets;

namespace {

fl::Experiment toy_with(const std::function<void(fl::Config&)>& edit) {
  auto c = oracle::toy_config();
  edit(c);
  return fl::build_experiment(c);
}

std::vector<double> accs(const std::vector<eval::MetricsRecord>& h) {
  std::vector<double> out;
  for (const auto& r : h) out.push_back(r.global_acc);
  return out;
}

}  // namespace

TEST_CASE("fedavg client update replays centralized sgdm") {
  const auto exp = toy_with([](fl::Config& c) { c.training.local_iterations = 3; });
  const int id = 4;
  const auto p = baselines::fedavg_client_update(exp.common.params, exp, id, 2, exp.config.training.seed);
  const auto& shard = exp.train_shards[static_cast<std::size_t>(id)];
  const auto& tc = exp.config.training;
  Rng rng = make_rng({tc.seed, stream::kClient, 2, static_cast<std::uint64_t>(id)});
  fl::MinibatchSampler sampler(shard.samples.size(), tc.batch_size);
  auto w = exp.common.params;
  auto opt = nn::OptimizerState::for_params(w, tc.lr, tc.momentum);
  for (int it = 0; it < 3; ++it) {
    std::vector<std::size_t> rows;
    for (auto pos : sampler.next(rng)) rows.push_back(shard.samples[pos]);
    nn::sgdm_step(w, nn::ce_loss_grad(exp.expert_spec, w, exp.train.batch(rows)).grad, opt);
  }
  CHECK(p.experts.at(0) == w);
}

TEST_CASE("fedprox with mu zero is fedavg and huge mu pins the global model") {
  const auto exp = toy_with([](fl::Config& c) { c.training.local_iterations = 4; });
  const auto& g = exp.common.params;
  const auto a = baselines::fedavg_client_update(g, exp, 3, 0, 1);
  const auto b = baselines::fedprox_client_update(g, exp, 3, 0, 1, 0.0);
  CHECK(a.experts.at(0) == b.experts.at(0));

  auto pinned = toy_with([](fl::Config& c) {
    c.training.local_iterations = 4;
    c.training.momentum = 0.0;
    c.training.lr = 1e-7;
  });
  const auto p = baselines::fedprox_client_update(g, pinned, 3, 0, 1, 1e6);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(p.experts.at(0).values[i] - g.values[i]) < 1e-3);
  CHECK_THROWS_AS(baselines::fedprox_client_update(g, exp, 3, 0, 1, -1.0), ConfigError);
}

TEST_CASE("fedprox proximal term matches differences of the augmented objective") {
  const auto exp = toy_with([](fl::Config& c) {
    c.training.local_iterations = 1;
    c.training.momentum = 0.0;
    c.training.lr = 1e-3;
  });
  // Start away from the anchor point so the proximal term is non-zero.
  auto start = exp.common.params;
  nn::ParamVector global = start;
  for (std::size_t i = 0; i < global.size(); ++i) global.values[i] += 0.01 * static_cast<double>(i % 7);
  const double mu = 0.5;
  const int id = 5;
  const auto& shard = exp.train_shards[static_cast<std::size_t>(id)];
  Rng rng = make_rng({exp.config.training.seed, stream::kClient, 0, static_cast<std::uint64_t>(id)});
  fl::MinibatchSampler sampler(shard.samples.size(), exp.config.training.batch_size);
  std::vector<std::size_t> rows;
  for (auto pos : sampler.next(rng)) rows.push_back(shard.samples[pos]);
  const auto batch = exp.train.batch(rows);
  auto objective = [&](const std::vector<double>& w) {
    double prox = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) prox += (w[i] - global.values[i]) * (w[i] - global.values[i]);
    return oracle::ce_loss(exp.expert_spec, w, batch) + 0.5 * mu * prox;
  };
  // One plain SGD step from `global`: the prox gradient vanishes there, so
  // step from global and compare against the oracle gradient at global.
  const auto fd = oracle::central_diff(objective, global.values);
  const auto p = baselines::fedprox_client_update(global, exp, id, 0, exp.config.training.seed, mu);
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(p.experts.at(0).values[i] == doctest::Approx(global.values[i] - 1e-3 * fd[i]).epsilon(1e-6));

  // Two steps exercise the proximal term itself.
  auto two = exp;
  two.config.training.local_iterations = 2;
  const auto q = baselines::fedprox_client_update(global, two, id, 0, exp.config.training.seed, mu);
  std::vector<std::size_t> rows2;
  for (auto pos : sampler.next(rng)) rows2.push_back(shard.samples[pos]);
  const auto batch2 = exp.train.batch(rows2);
  std::vector<double> w1(global.size());
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = global.values[i] - 1e-3 * fd[i];
  auto objective2 = [&](const std::vector<double>& w) {
    double prox = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) prox += (w[i] - global.values[i]) * (w[i] - global.values[i]);
    return oracle::ce_loss(exp.expert_spec, w, batch2) + 0.5 * mu * prox;
  };
  const auto fd2 = oracle::central_diff(objective2, w1);
  for (std::size_t i = 0; i < fd2.size(); ++i)
    CHECK(q.experts.at(0).values[i] == doctest::Approx(w1[i] - 1e-3 * fd2[i]).epsilon(1e-6));
}

TEST_CASE("ensemble prediction averages probabilities") {
  const auto spec = nn::NetSpec::mlp(1, {}, 3);
  // Logits equal the biases (weights zero) for every input.
  auto model = [&](double a, double b, double c) {
    auto p = nn::zero_params(spec);
    p.values[3] = a;
    p.values[4] = b;
    p.values[5] = c;
    return p;
  };
  nn::Matrix x(1, 1);
  // Confident for class 0, confident for class 1, and an abstaining uniform model.
  const std::vector<nn::ParamVector> ms = {model(5, 0, 0), model(0, 4, 0), model(0, 0, 0)};
  const auto p0 = oracle::softmax({5, 0, 0}), p1 = oracle::softmax({0, 4, 0});
  std::vector<double> mean(3);
  for (std::size_t c = 0; c < 3; ++c) mean[c] = (p0[c] + p1[c] + 1.0 / 3) / 3;
  const int expected = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  CHECK(baselines::avg_ensemble_predict(spec, ms, x) == std::vector<int>{expected});
  const std::vector<nn::ParamVector> rev = {ms[2], ms[1], ms[0]};
  CHECK(baselines::avg_ensemble_predict(spec, rev, x) == std::vector<int>{expected});

  Rng rng(3);
  const auto big = nn::NetSpec::mlp(4, {5}, 3);
  const auto m = nn::init_params(big, rng);
  const auto xs = oracle::random_batch(50, 4, 3, 1).inputs;
  const std::vector<nn::ParamVector> same = {m, m};
  CHECK(baselines::avg_ensemble_predict(big, same, xs) == nn::argmax_rows(nn::forward(big, m, xs)));
}

TEST_CASE("fedprox with mu zero runs bit-identical to fedavg") {
  const auto a = toy_with([](fl::Config& c) { c.training.method = fl::Method::fedavg; });
  const auto b = toy_with([](fl::Config& c) {
    c.training.method = fl::Method::fedprox;
    c.training.fedprox_mu = 0.0;
  });
  const auto ra = baselines::run_method(a);
  const auto rb = baselines::run_method(b);
  CHECK(ra.state == rb.state);
  CHECK(accs(ra.history) == accs(rb.history));
}

TEST_CASE("fedmix with one expert follows the fedavg trajectory") {
  auto setup = [](fl::Method m) {
    return toy_with([m](fl::Config& c) {
      c.training.method = m;
      c.federation.num_experts = 1;
      c.federation.top_k = 1;
      c.federation.anchors_per_round = 1;
      c.data.anchor_labels = 2;
      c.model.expert_init = fl::ExpertInit::from_common;
    });
  };
  const auto ra = baselines::run_method(setup(fl::Method::fedavg));
  const auto rb = baselines::run_method(setup(fl::Method::fedmix));
  CHECK(ra.state.experts == rb.state.experts);
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].global_acc == rb.history[i].global_acc);
    CHECK(ra.history[i].per_expert_acc == rb.history[i].per_expert_acc);
  }
}

TEST_CASE("fedmix keeps local gates on the clients and sends every expert") {
  const auto exp = toy_with([](fl::Config& c) { c.training.method = fl::Method::fedmix; });
  baselines::FedMixState s;
  s.server = fl::initial_state(exp);
  s.server.gate.reset();
  Rng rng = make_rng({1, stream::kPlan});
  const auto plan = fl::plan_round(0, exp.config, rng, exp.normal_ids());
  const auto next = baselines::fedmix_round(s, plan, exp);
  CHECK(next.local_gates.size() == plan.anchor_ids.size() + plan.normal_ids.size());
  CHECK_FALSE(next.server.gate.has_value());
  for (std::size_t i = 0; i < s.server.experts.size(); ++i) CHECK_FALSE(next.server.experts[i] == s.server.experts[i]);
  const auto again = baselines::fedmix_round(next, plan, exp);
  for (const auto& [id, g] : again.local_gates) CHECK_FALSE(g == next.local_gates.at(id));
}

TEST_CASE("two-expert fedmix client matches a hand-stepped mixture replay") {
  const auto exp = toy_with([](fl::Config& c) {
    c.training.method = fl::Method::fedmix;
    c.training.local_iterations = 2;
    c.federation.anchors_per_round = 0;
    c.federation.normals_per_round = 1;
  });
  baselines::FedMixState s;
  s.server = fl::initial_state(exp);
  s.server.gate.reset();
  fl::RoundPlan plan;
  const int id = exp.normal_ids().front();
  plan.normal_ids = {id};
  const auto next = baselines::fedmix_round(s, plan, exp);

  const auto& tc = exp.config.training;
  const auto& shard = exp.train_shards[static_cast<std::size_t>(id)];
  Rng grng = make_rng({tc.seed, stream::kLocalGate, static_cast<std::uint64_t>(id)});
  auto gate = nn::init_params(exp.gate_spec, grng).values;
  auto e0 = s.server.experts[0].values, e1 = s.server.experts[1].values;
  std::vector<double> v0(e0.size()), v1(e1.size()), vg(gate.size());
  Rng rng = make_rng({tc.seed, stream::kClient, 0, static_cast<std::uint64_t>(id)});
  fl::MinibatchSampler sampler(shard.samples.size(), tc.batch_size);
  const std::vector<std::size_t> sel = {0, 1};
  for (int it = 0; it < 2; ++it) {
    const auto pos = sampler.next(rng);
    std::vector<std::size_t> rows;
    for (auto p : pos) rows.push_back(shard.samples[p]);
    const auto batch = exp.train.batch(rows);
    const auto gin = nn::gather_rows(exp.train_embeddings.at(id), pos);
    auto f = [&](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& g) {
      return oracle::mixture_loss(exp.expert_spec, {a, b}, exp.gate_spec, g, sel, gin, batch, false);
    };
    const auto g0 = oracle::central_diff([&](const auto& x) { return f(x, e1, gate); }, e0);
    const auto g1 = oracle::central_diff([&](const auto& x) { return f(e0, x, gate); }, e1);
    const auto gg = oracle::central_diff([&](const auto& x) { return f(e0, e1, x); }, gate);
    for (std::size_t i = 0; i < e0.size(); ++i) e0[i] -= tc.lr * (v0[i] = tc.momentum * v0[i] + g0[i]);
    for (std::size_t i = 0; i < e1.size(); ++i) e1[i] -= tc.lr * (v1[i] = tc.momentum * v1[i] + g1[i]);
    for (std::size_t i = 0; i < gate.size(); ++i) gate[i] -= tc.gate_lr * (vg[i] = tc.gate_momentum * vg[i] + gg[i]);
  }
  CHECK(oracle::max_rel_err(next.server.experts[0].values, e0, 1e-2) < 1e-5);
  CHECK(oracle::max_rel_err(next.server.experts[1].values, e1, 1e-2) < 1e-5);
  CHECK(oracle::max_rel_err(next.local_gates.at(id).values, gate, 1e-2) < 1e-5);
}

TEST_CASE("baselines log comm per their dispatch rule") {
  const auto exp = toy_with([](fl::Config& c) { c.training.method = fl::Method::avg_ensemble; });
  const auto res = baselines::run_method(exp);
  CHECK(res.state.experts.size() == 2);
  const auto e = exp.expert_spec.param_count();
  for (const auto& r : res.ledger.rounds()) CHECK(r.floats_down == 4 * 2 * e);
  CHECK(res.ledger.setup_down() == 0);
  CHECK(baselines::ensemble_track_seed(7, 0) == 7);
  CHECK(baselines::ensemble_track_seed(7, 1) != 7);
}
