#include <benchmark/benchmark.h>

#include "sgrl/autodiff.hpp"
#include "sgrl/env.hpp"
#include "sgrl/nets.hpp"
#include "sgrl/rng.hpp"
#include "sgrl/trainer.hpp"

namespace {

sgrl::ad::Tensor random_tensor(sgrl::Rng& rng, int r, int c) {
  sgrl::ad::Tensor t(r, c);
  for (auto& v : t.v) v = rng.normal();
  return t;
}

void BM_TapeMatmulBackward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  sgrl::Rng rng(1);
  sgrl::ad::Tensor a = random_tensor(rng, n, n);
  sgrl::ad::Tensor b = random_tensor(rng, n, n);
  for (auto _ : state) {
    sgrl::ad::Tape tape;
    auto x = tape.input(a);
    auto w = tape.input(b);
    auto loss = tape.sum(tape.matmul(x, w));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(w).v[0]);
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_TapeMatmulBackward)->Arg(32)->Arg(64)->Arg(256);

sgrl::env::Environment make_env(const std::string& task, bool use_graph) {
  sgrl::env::EnvConfig ec;
  ec.task = sgrl::env::TaskSpec::by_name(task);
  ec.use_graph = use_graph;
  ec.master_seed = 3;
  return sgrl::env::Environment(ec);
}

void BM_EnvStep(benchmark::State& state) {
  auto e = make_env(state.range(0) ? "po_pick" : "pick_cube", true);
  e.reset();
  sgrl::Rng rng(5);
  for (auto _ : state) {
    if (!e.episode_active()) e.reset();
    auto res = e.step(sgrl::env::random_action(rng));
    benchmark::DoNotOptimize(res.reward);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvStep)->Arg(0)->Arg(1);

void BM_EnvResetPO(benchmark::State& state) {
  auto e = make_env("po_pick", true);
  for (auto _ : state) {
    auto obs = e.reset();
    benchmark::DoNotOptimize(obs.image[0]);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvResetPO);

void BM_Render(benchmark::State& state) {
  auto e = make_env("pick_place", true);
  e.reset();
  for (auto _ : state) {
    auto img = e.render();
    benchmark::DoNotOptimize(img[0]);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Render);

void BM_GraphExport(benchmark::State& state) {
  auto e = make_env("po_pick_place", true);
  e.reset();
  const auto& g = e.graph();
  sgrl::kg::NoiseParams noise = sgrl::kg::NoiseParams::high();
  sgrl::Rng rng(11);
  for (auto _ : state) {
    auto feats = g.export_features(e.task().goal_class, noise, &rng);
    benchmark::DoNotOptimize(feats.nodes.size());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GraphExport);

void BM_GraphRefresh(benchmark::State& state) {
  auto e = make_env("po_pick_place", true);
  e.reset();
  sgrl::kg::SceneGraph g = e.graph();
  for (auto _ : state) {
    g.full_rebuild(e.camera());
    benchmark::DoNotOptimize(g.edges().size());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GraphRefresh);

void BM_PolicyForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  sgrl::nn::Hyper hp;
  auto enc = sgrl::nn::EncoderSet::init(hp, 9);
  auto e = make_env("po_pick", true);
  auto obs = e.reset();

  sgrl::nn::ObsBatch ob;
  sgrl::ad::Tensor images(batch, hp.image_dim());
  sgrl::ad::Tensor proprio(batch, hp.proprio_dim);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < hp.image_dim(); ++j) images.at(b, j) = obs.image[j];
    for (int j = 0; j < hp.proprio_dim; ++j) proprio.at(b, j) = obs.proprio[j];
    ob.graphs.push_back(&obs.graph);
    ob.task_ids.push_back(obs.task_id);
  }
  ob.images = images;
  ob.proprio = proprio;

  for (auto _ : state) {
    sgrl::ad::Tape tape;
    auto p = sgrl::nn::bind(tape, enc);
    auto out = sgrl::nn::forward_policy(tape, p, ob);
    benchmark::DoNotOptimize(out.mu.at(0, 0));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_PolicyForward)->Arg(1)->Arg(64);

void BM_TrainIteration(benchmark::State& state) {
  sgrl::train::TrainerConfig cfg;
  cfg.tasks = {"po_pick"};
  cfg.n_envs = 16;
  cfg.rollout = 8;
  cfg.epochs = 1;
  cfg.minibatch = 64;
  cfg.seed = 4;
  sgrl::train::Trainer trainer(cfg);
  for (auto _ : state) {
    auto stats = trainer.iterate();
    benchmark::DoNotOptimize(stats.update.policy_loss);
  }
  state.SetItemsProcessed(state.iterations() * cfg.n_envs * cfg.rollout);
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
