// Acceptance gate: one PASS/FAIL line per criterion; exits non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "fedjets/baselines/baselines.hpp"
#include "fedjets/eval/metrics.hpp"
#include "fedjets/eval/scenario.hpp"
#include "fedjets/eval/zero_shot.hpp"
#include "fedjets/fl/comm.hpp"
#include "fedjets/fl/runtime.hpp"
#include "fedjets/nn/checkpoint.hpp"
#include "oracle.hpp"

using namespace fedjets;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fl::Config synth10() { return fl::load_config(FEDJETS_SYNTH10); }

fl::RunResult run(const fl::Config& c) {
  const auto exp = fl::build_experiment(c);
  return baselines::run_method(exp);
}

double routing_of(const fl::RunResult& r) { return r.history.back().routing_acc.value_or(0.0); }

nn::NetSpec random_spec(Rng& rng, std::size_t in, std::size_t out, std::size_t max_params) {
  for (;;) {
    std::vector<std::size_t> hidden;
    const std::size_t depth = rng() % 3;
    for (std::size_t i = 0; i < depth; ++i) hidden.push_back(2 + rng() % 7);
    auto spec = nn::NetSpec::mlp(in, hidden, out);
    if (spec.param_count() <= max_params) return spec;
  }
}

nn::ParamVector off_kink_params(const nn::NetSpec& spec, Rng& rng) {
  auto p = nn::init_params(spec, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : p.values) v += u(rng);
  return p;
}

void criterion_1() {
  double worst_ce = 0.0, worst_mix = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t in = 2 + rng() % 5, out = 2 + rng() % 4;
    const auto spec = random_spec(rng, in, out, 500);
    const auto p = off_kink_params(spec, rng);
    const auto batch = oracle::random_batch(6, in, out, 1000 + seed);
    const auto lg = nn::ce_loss_grad(spec, p, batch);
    const auto fd = oracle::central_diff([&](const auto& v) { return oracle::ce_loss(spec, v, batch); }, p.values);
    worst_ce = std::max(worst_ce, oracle::max_rel_err(lg.grad.values, fd));

    // Two experts of this architecture routed by a random softmax gate.
    const std::size_t gin_dim = 2 + rng() % 3, m = 3;
    const auto gspec = nn::NetSpec::mlp(gin_dim, {4}, m, nn::OutputHead::softmax);
    std::vector<nn::ParamVector> experts = {off_kink_params(spec, rng), off_kink_params(spec, rng)};
    const auto gate = off_kink_params(gspec, rng);
    const std::vector<std::size_t> selected = {rng() % m == 0 ? 1u : 0u, 2};
    const auto gin = oracle::random_batch(6, gin_dim, 1, 2000 + seed).inputs;
    const bool renorm = seed % 2 == 0;
    nn::MixtureProblem prob{&spec, experts, &gspec, &gate, selected, &gin, &batch, renorm};
    const auto mg = nn::mixture_loss_grad(prob);
    auto loss = [&](const std::vector<double>& e0, const std::vector<double>& e1, const std::vector<double>& g) {
      return oracle::mixture_loss(spec, {e0, e1}, gspec, g, selected, gin, batch, renorm);
    };
    const auto fd0 = oracle::central_diff([&](const auto& v) { return loss(v, experts[1].values, gate.values); },
                                          experts[0].values);
    const auto fd1 = oracle::central_diff([&](const auto& v) { return loss(experts[0].values, v, gate.values); },
                                          experts[1].values);
    const auto fdg = oracle::central_diff([&](const auto& v) { return loss(experts[0].values, experts[1].values, v); },
                                          gate.values);
    worst_mix = std::max({worst_mix, oracle::max_rel_err(mg.expert_grads[0].values, fd0),
                          oracle::max_rel_err(mg.expert_grads[1].values, fd1),
                          oracle::max_rel_err(mg.gate_grad.values, fdg)});
  }
  verdict(1, worst_ce < 1e-4 && worst_mix < 1e-4,
          fmt("max rel err cross-entropy %.3g, mixture %.3g (tolerance 1e-4, 20 nets)", worst_ce, worst_mix));
}

void criterion_4() {
  // Exact 0.4 ratio at synth-10 sizes, counted from a planned round.
  const auto c = synth10();
  const auto exp = fl::build_experiment(c);
  const fl::ModelSizes sizes{exp.expert_spec.param_count(), exp.gate_spec.param_count(),
                             exp.common.spec.param_count()};
  Rng rng = make_rng({c.training.seed, stream::kPlan});
  auto plan = fl::plan_round(0, c, rng, exp.normal_ids());
  const auto state = fl::initial_state(exp);
  fl::select_experts(plan, exp.gate_spec, *state.gate, exp.train_embeddings, c.federation.top_k);
  bool ratio_ok = !plan.selections.empty();
  for (const auto& sel : plan.selections) {
    const std::uint64_t fj = sel.indices.size() * sizes.expert;
    const std::uint64_t fm = c.federation.num_experts * sizes.expert;
    ratio_ok = ratio_ok && fj * 5 == fm * 2;
  }
  ratio_ok = ratio_ok && fl::expert_payload_per_client(fl::Method::fedjets, c, sizes) * 5 ==
                             fl::expert_payload_per_client(fl::Method::fedmix, c, sizes) * 2;

  // 3-round toy ledgers against totals from the layer sizes.
  auto t = oracle::toy_config();
  t.training.rounds = 3;
  const std::uint64_t e = 4 * 8 + 8 + 8 * 4 + 4;  // 4-8-4 expert and common expert
  const std::uint64_t g = 8 * 8 + 8 + 8 * 2 + 2;  // 8-8-2 gate on the 8-wide embedding
  const std::uint64_t s = 8, na = 2, nc = 2, m = 2, k = 1, rounds = 3;
  struct Case {
    fl::Method method;
    std::uint64_t down, up;
  };
  const std::uint64_t fj_round = na * (e + g) + nc * (g + k * e);
  const std::uint64_t fm_round = (na + nc) * m * e;
  const std::uint64_t fa_round = (na + nc) * e;
  const Case cases[] = {{fl::Method::fedjets, s * e + rounds * fj_round, rounds * fj_round},
                        {fl::Method::fedmix, s * e + rounds * fm_round, rounds * fm_round},
                        {fl::Method::fedavg, rounds * fa_round, rounds * fa_round}};
  bool ledger_ok = true;
  std::string detail;
  for (const auto& cs : cases) {
    t.training.method = cs.method;
    const auto r = run(t);
    const auto& last = r.history.back();
    const bool ok = r.ledger.rounds().size() == rounds && r.ledger.floats_down_cum() == cs.down &&
                    r.ledger.floats_up_cum() == cs.up && last.floats_down_cum == cs.down &&
                    last.floats_up_cum == cs.up;
    ledger_ok = ledger_ok && ok;
    detail += std::string(" ") + fl::method_name(cs.method) + " " + std::to_string(r.ledger.floats_down_cum()) + "/" +
              std::to_string(cs.down);
  }
  verdict(4, ratio_ok && ledger_ok,
          "per-normal-client expert payload fedjets:fedmix = " +
              std::to_string(fl::expert_payload_per_client(fl::Method::fedjets, c, sizes)) + ":" +
              std::to_string(fl::expert_payload_per_client(fl::Method::fedmix, c, sizes)) +
              "; 3-round downlink ledger vs hand total:" + detail);
}

void criterion_5() {
  auto c = synth10();
  c.training.rounds = 30;
  c.training.method = fl::Method::fedavg;
  const auto fedavg = run(c);
  c.training.method = fl::Method::fedprox;
  c.training.fedprox_mu = 0.0;
  const auto fedprox = run(c);
  bool prox_ok = fedprox.state == fedavg.state && fedprox.history.size() == fedavg.history.size();
  for (std::size_t i = 0; prox_ok && i < fedavg.history.size(); ++i)
    prox_ok = fedprox.history[i].global_acc == fedavg.history[i].global_acc;

  auto one = synth10();
  one.training.rounds = 30;
  one.federation.num_experts = 1;
  one.federation.top_k = 1;
  one.federation.anchors_per_round = 1;
  one.model.expert_init = fl::ExpertInit::from_common;
  one.training.method = fl::Method::fedavg;
  const auto a = run(one);
  one.training.method = fl::Method::fedmix;
  const auto b = run(one);
  bool mix_ok = a.history.size() == b.history.size() && !a.history.empty();
  for (std::size_t i = 0; mix_ok && i < a.history.size(); ++i)
    mix_ok = a.history[i].global_acc == b.history[i].global_acc &&
             a.history[i].per_expert_acc == b.history[i].per_expert_acc;

  const auto exp = fl::build_experiment(synth10());
  const auto& model = exp.common.params;
  const std::vector<nn::ParamVector> twins = {model, model};
  const double single =
      nn::accuracy(nn::argmax_rows(nn::forward(exp.common.spec, model, exp.test.inputs)), exp.test.labels);
  const double ens = nn::accuracy(baselines::avg_ensemble_predict(exp.common.spec, twins, exp.test.inputs),
                                  exp.test.labels);
  verdict(5, prox_ok && mix_ok && single == ens,
          std::string("fedprox(mu=0)==fedavg ") + (prox_ok ? "yes" : "no") + ", fedmix(M=1) trajectory==fedavg " +
              (mix_ok ? "yes" : "no") + fmt(", identical-model ensemble %.4f vs single %.4f", ens, single));
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  std::printf("synth-10 config: %s\n", FEDJETS_SYNTH10);

  criterion_1();

  // Main FedJETs run: criteria 2, 3, 6 and 8 share it.
  const auto base = synth10();
  const auto main_exp = fl::build_experiment(base);
  const auto main_run = baselines::run_method(main_exp);
  const double routing_err = 1.0 - routing_of(main_run);
  verdict(2, routing_err < 0.05,
          fmt("final routing error %.4f (threshold 0.05; chance 0.80); zero-shot accuracy %.4f", routing_err,
              main_run.history.back().global_acc));

  auto fa = base;
  fa.training.method = fl::Method::fedavg;
  const auto fedavg = run(fa);
  const double fj_acc = main_run.history.back().global_acc, fa_acc = fedavg.history.back().global_acc;
  verdict(3, fj_acc - fa_acc >= 0.10,
          fmt("fedjets %.4f vs fedavg %.4f, gap %.4f (needs >= 0.10); common expert %.4f", fj_acc, fa_acc,
              fj_acc - fa_acc, main_exp.common_accuracy));

  criterion_4();
  criterion_5();

  double with_anchors = 0.0, without = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto c = base;
    c.training.seed = seed;
    const double ra = seed == 1 ? routing_of(main_run) : routing_of(run(c));
    c.federation.anchors_per_round = 0;
    c.federation.normals_per_round = 10;
    const double rn = routing_of(run(c));
    with_anchors += ra / 3;
    without += rn / 3;
    per_seed += fmt(" [seed %.0f: %.4f vs %.4f]", static_cast<double>(seed), rn, ra);
  }
  verdict(6, without <= with_anchors,
          fmt("mean routing accuracy N_a=0 %.4f <= N_a=5 %.4f", without, with_anchors) + per_seed);

  auto chance = base;
  chance.model.common_target_acc = 0.1;
  const auto chance_exp = fl::build_experiment(chance);
  const double chance_common =
      eval::model_accuracy_over_clients(chance_exp.common.spec, chance_exp.common.params, chance_exp.test,
                                        chance_exp.test_shards);
  const double chance_fj = baselines::run_method(chance_exp).history.back().global_acc;
  auto good = base;
  good.model.common_target_acc = 0.9;
  const auto good_exp = fl::build_experiment(good);
  const double good_common = eval::model_accuracy_over_clients(good_exp.common.spec, good_exp.common.params,
                                                               good_exp.test, good_exp.test_shards);
  const double good_fj = baselines::run_method(good_exp).history.back().global_acc;
  const bool good_reached = good_exp.common_accuracy >= 0.9;
  verdict(7, chance_fj <= chance_common + 0.05 && good_reached && good_fj > good_common,
          fmt("chance common %.4f -> fedjets %.4f (must be <= common + 0.05); ", chance_common, chance_fj) +
              fmt("strong common %.4f (pooled %.4f) -> fedjets %.4f (must exceed)", good_common,
                  good_exp.common_accuracy, good_fj));

  const auto dir = fs::temp_directory_path() / "fedjets_acceptance";
  fs::create_directories(dir);
  eval::write_text_file(dir / "a.jsonl", eval::metrics_jsonl(main_run.history));
  const auto again = run(base);
  eval::write_text_file(dir / "b.jsonl", eval::metrics_jsonl(again.history));
  const auto ba = nn::read_file_bytes(dir / "a.jsonl"), bb = nn::read_file_bytes(dir / "b.jsonl");
  verdict(8, !ba.empty() && ba == bb,
          std::to_string(ba.size()) + " and " + std::to_string(bb.size()) + " bytes, " +
              (ba == bb ? "identical" : "different"));

  auto grow = base;
  grow.scenario.kind = fl::ScenarioKind::growing;
  grow.scenario.groups = 2;
  const auto grow_exp = fl::build_experiment(grow);
  const auto sched = eval::make_schedule(grow, grow_exp.normal_groups);
  const auto grow_run = eval::run_scenario(grow_exp, sched);
  const auto& last = grow_run.history.back();
  const double chance_level = 1.0 / static_cast<double>(grow.data.num_classes);
  const bool after = sched.ranges.size() == 2 && last.round > sched.ranges[1].round_start;
  const double g1 = last.group_acc.empty() ? 0.0 : last.group_acc[0];
  verdict(9, after && g1 >= 2 * chance_level,
          fmt("group-1 accuracy %.4f at round %.0f after group 2 joined at round %.0f (needs >= %.2f)", g1,
              static_cast<double>(last.round), sched.ranges.size() == 2 ? double(sched.ranges[1].round_start) : -1.0,
              2 * chance_level));

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of 9 criteria failed; %.1f s\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
