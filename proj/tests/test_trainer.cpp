#include "doctest.h"
#include "sgrl/trainer.hpp"

#include <cmath>

using namespace sgrl;
using namespace sgrl::train;

namespace {

TrainerConfig small_cfg(bool use_graph = true) {
  TrainerConfig cfg;
  cfg.tasks = {"pick_cube"};
  cfg.use_graph = use_graph;
  cfg.n_envs = 4;
  cfg.rollout = 8;
  cfg.epochs = 2;
  cfg.minibatch = 16;
  cfg.seed = 3;
  return cfg;
}

std::vector<env::EnvConfig> env_cfgs(const TrainerConfig& cfg) {
  std::vector<env::EnvConfig> out;
  for (int i = 0; i < cfg.n_envs; ++i) {
    env::EnvConfig ec;
    ec.task = env::TaskSpec::by_name(cfg.tasks[i % cfg.tasks.size()]);
    ec.use_graph = cfg.use_graph;
    ec.master_seed = cfg.seed;
    ec.env_index = i;
    out.push_back(ec);
  }
  return out;
}

nn::EncoderSet make_policy(const TrainerConfig& cfg) {
  nn::Hyper hp;
  hp.use_graph = cfg.use_graph;
  return nn::EncoderSet::init(hp, cfg.seed);
}

TrajectoryBatch collect_once(const TrainerConfig& cfg, const nn::EncoderSet& enc,
                             bool deterministic = false) {
  env::VectorEnv envs(env_cfgs(cfg));
  std::vector<env::Observation> obs = envs.reset();
  Rng rng(derive_seed(cfg.seed, stream::kCollect));
  return collect(enc, envs, obs, cfg.rollout, rng, deterministic);
}

bool params_equal(const nn::EncoderSet& a, const nn::EncoderSet& b) {
  if (a.params.size() != b.params.size()) return false;
  for (const auto& [name, t] : a.params) {
    auto it = b.params.find(name);
    if (it == b.params.end() || it->second.v != t.v) return false;
  }
  return true;
}

nn::GraphFeatures tiny_graph() {
  nn::GraphFeatures g;
  nn::GraphFeatures::Node table;
  table.class_id = 0;
  table.extents = {1.2, 0.8, 0.5};
  nn::GraphFeatures::Node cube;
  cube.class_id = 1;
  cube.center = {0.1, -0.05, 0.54};
  cube.extents = {0.08, 0.08, 0.08};
  cube.flags = {1, 0, 0, 1};
  nn::GraphFeatures::Node wall;
  wall.class_id = 2;
  wall.center = {0.0, 0.08, 0.6};
  wall.extents = {0.28, 0.04, 0.2};
  wall.flags = {0, 0, 1, 0};
  g.nodes = {table, cube, wall};
  g.edges = {{1, 0, 0}, {0, 1, 1}, {1, 2, 3}, {2, 1, 2}, {1, 2, 4}};
  g.goal_index = 1;
  return g;
}

}  // namespace

TEST_CASE("gae handles single step episodes") {
  TrajectoryBatch b;
  b.n_envs = 1;
  b.rollout = 1;
  b.data.resize(1);
  b.data[0].reward = 1.0;
  b.data[0].value = 0.0;
  b.data[0].terminated = true;
  b.bootstrap_values = {5.0};  // masked by done
  gae(b, 0.99, 0.95);
  CHECK(b.advantages[0] == 1.0);
  CHECK(b.returns[0] == 1.0);
}

TEST_CASE("gae with lambda zero reduces to one step td") {
  Rng rng(4);
  TrajectoryBatch b;
  b.n_envs = 2;
  b.rollout = 6;
  b.data.resize(12);
  for (Transition& tr : b.data) {
    tr.reward = rng.uniform(-1, 1);
    tr.value = rng.uniform(-1, 1);
  }
  b.at(2, 0).terminated = true;
  b.at(4, 1).truncated = true;
  b.bootstrap_values = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  gae(b, 0.9, 0.0);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 6; ++t) {
      const Transition& tr = b.at(t, i);
      double next_v = t + 1 < 6 ? b.at(t + 1, i).value : b.bootstrap_values[i];
      double not_done = tr.done() ? 0.0 : 1.0;
      double delta = tr.reward + 0.9 * next_v * not_done - tr.value;
      CHECK(b.advantages[t * 2 + i] == doctest::Approx(delta).epsilon(1e-12));
      CHECK(b.returns[t * 2 + i] == doctest::Approx(delta + tr.value).epsilon(1e-12));
    }
  }
}

TEST_CASE("gae with lambda one matches discounted reward sums") {
  Rng rng(9);
  TrajectoryBatch b;
  b.n_envs = 1;
  b.rollout = 10;
  b.data.resize(10);
  for (Transition& tr : b.data) {
    tr.reward = rng.uniform(-1, 1);
    tr.value = 0.0;
  }
  b.bootstrap_values = {0.0};
  double gamma = 0.97;
  gae(b, gamma, 1.0);
  for (int t = 0; t < 10; ++t) {
    double mc = 0.0;
    double g = 1.0;
    for (int k = t; k < 10; ++k) {
      mc += g * b.data[k].reward;
      g *= gamma;
    }
    CHECK(b.advantages[t] == doctest::Approx(mc).epsilon(1e-12));
  }
}

TEST_CASE("gae of zero rewards with consistent values is zero") {
  TrajectoryBatch b;
  b.n_envs = 1;
  b.rollout = 5;
  b.data.resize(5);
  double vboot = 2.0;
  double gamma = 0.99;
  for (int t = 0; t < 5; ++t) b.data[t].value = std::pow(gamma, 5 - t) * vboot;
  b.bootstrap_values = {vboot};
  gae(b, gamma, 0.95);
  for (int t = 0; t < 5; ++t) {
    CHECK(std::abs(b.advantages[t]) < 1e-12);
    CHECK(b.returns[t] == doctest::Approx(b.data[t].value).epsilon(1e-12));
  }
}

TEST_CASE("collect fills a full window and stores pre clip samples") {
  TrainerConfig cfg = small_cfg();
  cfg.n_envs = 64;
  cfg.rollout = 24;
  nn::EncoderSet enc = make_policy(cfg);
  TrajectoryBatch b = collect_once(cfg, enc);
  CHECK(b.size() == 1536);
  CHECK(b.data.size() == 1536);
  CHECK(b.bootstrap_values.size() == 64);

  double max_abs_action = 0.0;
  bool any_done = false;
  for (const Transition& tr : b.data) {
    CHECK(tr.image.size() == 768);
    CHECK(tr.has_graph);
    CHECK(std::isfinite(tr.logprob));
    CHECK(std::isfinite(tr.reward));
    for (double a : tr.action) max_abs_action = std::max(max_abs_action, std::abs(a));
    any_done = any_done || tr.done();
  }
  CHECK(max_abs_action > 0.3);  // Gaussian draws spread well beyond the initial mean
  CHECK(any_done);              // horizon 24 guarantees at least one boundary

  // Stored log-probs match the policy recomputed on the stored observation.
  ad::Tape tape;
  nn::BoundParams p = nn::bind(tape, enc);
  std::vector<int> idx = {0, 700, 1535};
  b.advantages.assign(b.data.size(), 0.0);
  b.returns.assign(b.data.size(), 0.0);
  nn::ObsBatch ob;
  ob.images = ad::Tensor(3, 768);
  ob.proprio = ad::Tensor(3, 8);
  for (int i = 0; i < 3; ++i) {
    const Transition& tr = b.data[idx[i]];
    for (int k = 0; k < 768; ++k) ob.images.at(i, k) = tr.image[k];
    for (int k = 0; k < 8; ++k) ob.proprio.at(i, k) = tr.proprio[k];
    ob.task_ids.push_back(tr.task_id);
    ob.graphs.push_back(&tr.graph);
  }
  nn::PolicyOut out = nn::forward_policy(tape, p, ob);
  for (int i = 0; i < 3; ++i) {
    const Transition& tr = b.data[idx[i]];
    double logp = 0.0;
    for (int d = 0; d < 4; ++d) {
      double mu = out.mu.at(i, d);
      double ls = out.log_sigma.at(i, d);
      double z = (tr.action[d] - mu) / std::exp(ls);
      logp += -0.5 * z * z - ls - 0.9189385332046727;
    }
    CHECK(tr.logprob == doctest::Approx(logp).epsilon(1e-9));
  }
}

TEST_CASE("deterministic collection repeats bit for bit") {
  TrainerConfig cfg = small_cfg();
  nn::EncoderSet enc = make_policy(cfg);
  TrajectoryBatch a = collect_once(cfg, enc, true);
  TrajectoryBatch b = collect_once(cfg, enc, true);
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i].action == b.data[i].action);
    CHECK(a.data[i].logprob == b.data[i].logprob);
    CHECK(a.data[i].reward == b.data[i].reward);
    CHECK(a.data[i].value == b.data[i].value);
    CHECK(a.data[i].image == b.data[i].image);
  }
  CHECK(a.bootstrap_values == b.bootstrap_values);
}

TEST_CASE("collect rejects regime mismatches") {
  TrainerConfig cfg = small_cfg();
  nn::EncoderSet kg_policy = make_policy(cfg);

  TrainerConfig cam = cfg;
  cam.use_graph = false;
  env::VectorEnv cam_envs(env_cfgs(cam));
  std::vector<env::Observation> obs = cam_envs.reset();
  Rng rng(1);
  CHECK_THROWS_AS(collect(kg_policy, cam_envs, obs, 4, rng), InvalidArgument);
}

TEST_CASE("update normalizes advantages and moves phi") {
  TrainerConfig cfg = small_cfg();
  nn::EncoderSet enc = make_policy(cfg);
  nn::EncoderSet before = enc;
  TrajectoryBatch b = collect_once(cfg, enc);
  gae(b, cfg.gamma, cfg.gae_lambda);

  opt::Adam adam(cfg.lr);
  Rng shuffle(derive_seed(cfg.seed, stream::kShuffle));
  UpdateStats stats = update(enc, adam, b, cfg, shuffle);

  double mean = 0.0;
  for (double a : b.advantages) mean += a;
  mean /= b.advantages.size();
  double sq = 0.0;
  for (double a : b.advantages) sq += (a - mean) * (a - mean);
  double stddev = std::sqrt(sq / b.advantages.size());
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(stddev - 1.0) < 1e-6);

  CHECK(stats.grad_norm > 0.0);
  CHECK(stats.grad_norm_phi > 0.0);
  CHECK(stats.clip_frac >= 0.0);
  CHECK(stats.clip_frac <= 1.0);
  // Diagonal Gaussian near the initial head offset.
  double h0 = 4.0 * (0.5 + 0.5 * std::log(2.0 * M_PI) + nn::kLogSigmaInit);
  CHECK(stats.entropy > h0 - 3.0);
  CHECK(stats.entropy < h0 + 3.0);

  double dphi = 0.0;
  for (const auto& [name, t] : enc.params) {
    if (!nn::EncoderSet::is_phi(name)) continue;
    const ad::Tensor& old = before.params.at(name);
    for (std::size_t i = 0; i < t.v.size(); ++i) dphi += (t.v[i] - old.v[i]) * (t.v[i] - old.v[i]);
  }
  CHECK(std::sqrt(dphi) > 0.0);
}

TEST_CASE("zero advantages with zero aux weights are a no-op") {
  TrainerConfig cfg = small_cfg();
  cfg.beta_v = 0.0;
  cfg.beta_h = 0.0;
  nn::EncoderSet enc = make_policy(cfg);
  nn::EncoderSet before = enc;
  TrajectoryBatch b = collect_once(cfg, enc);
  b.advantages.assign(b.data.size(), 0.0);
  b.returns.assign(b.data.size(), 0.0);

  opt::Adam adam(cfg.lr);
  Rng shuffle(1);
  UpdateStats stats = update(enc, adam, b, cfg, shuffle);
  CHECK(params_equal(enc, before));
  CHECK(stats.grad_norm == 0.0);
  CHECK(stats.policy_loss == 0.0);
}

TEST_CASE("clipped surrogate never beats the unclipped objective") {
  TrainerConfig cfg = small_cfg();
  nn::EncoderSet enc = make_policy(cfg);
  TrajectoryBatch b = collect_once(cfg, enc);
  gae(b, cfg.gamma, cfg.gae_lambda);

  // Push parameters away from the collection policy so ratios leave 1.
  nn::EncoderSet moved = enc;
  Rng noise(77);
  for (auto& [name, t] : moved.params)
    for (double& x : t.v) x += noise.normal(0.0, 0.05);

  std::vector<int> idx(b.size());
  for (int i = 0; i < b.size(); ++i) idx[i] = i;

  ad::Tape tape;
  nn::BoundParams p = nn::bind(tape, moved);
  LossParts parts;
  control_loss(tape, p, b, idx, cfg, &parts);
  CHECK(parts.clip_frac > 0.0);

  // Recompute both surrogates directly.
  nn::ObsBatch ob;
  int B = b.size();
  ob.images = ad::Tensor(B, 768);
  ob.proprio = ad::Tensor(B, 8);
  for (int i = 0; i < B; ++i) {
    const Transition& tr = b.data[i];
    for (int k = 0; k < 768; ++k) ob.images.at(i, k) = tr.image[k];
    for (int k = 0; k < 8; ++k) ob.proprio.at(i, k) = tr.proprio[k];
    ob.task_ids.push_back(tr.task_id);
    ob.graphs.push_back(&tr.graph);
  }
  ad::Tape t2;
  nn::BoundParams p2 = nn::bind(t2, moved);
  nn::PolicyOut out = nn::forward_policy(t2, p2, ob);
  double clipped_sum = 0.0;
  double raw_sum = 0.0;
  for (int i = 0; i < B; ++i) {
    double logp = 0.0;
    for (int d = 0; d < 4; ++d) {
      double mu = out.mu.at(i, d);
      double ls = out.log_sigma.at(i, d);
      double z = (b.data[i].action[d] - mu) / std::exp(ls);
      logp += -0.5 * z * z - ls - 0.9189385332046727;
    }
    double ratio = std::exp(logp - b.data[i].logprob);
    double adv = b.advantages[i];
    double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    clipped_sum += std::min(ratio * adv, clipped_ratio * adv);
    raw_sum += ratio * adv;
  }
  CHECK(clipped_sum <= raw_sum + 1e-12);
  CHECK(parts.policy == doctest::Approx(-clipped_sum / B).epsilon(1e-9));
}

TEST_CASE("value head regresses fixed returns monotonically") {
  TrainerConfig cfg = small_cfg();
  cfg.epochs = 1;
  cfg.minibatch = 32;  // whole batch in one minibatch
  cfg.beta_v = 1.0;
  cfg.beta_h = 0.0;
  nn::EncoderSet enc = make_policy(cfg);
  TrajectoryBatch b = collect_once(cfg, enc);
  gae(b, cfg.gamma, cfg.gae_lambda);
  b.advantages.assign(b.data.size(), 0.0);  // isolate the value term
  for (std::size_t i = 0; i < b.returns.size(); ++i)
    b.returns[i] = 10.0 + 0.03 * static_cast<double>(i);  // targets far from the init

  // Small steps keep gradient descent in the monotone regime.
  opt::Adam adam(3e-5);
  Rng shuffle(5);
  double prev = 1e100;
  for (int step = 0; step < 100; ++step) {
    UpdateStats s = update(enc, adam, b, cfg, shuffle);
    CHECK(s.value_loss < prev);
    prev = s.value_loss;
  }
}

TEST_CASE("training iterations are deterministic") {
  TrainerConfig cfg = small_cfg();
  Trainer a(cfg);
  Trainer b(cfg);
  for (int i = 0; i < 3; ++i) {
    IterStats sa = a.iterate();
    IterStats sb = b.iterate();
    CHECK(sa.global_step == sb.global_step);
    CHECK(sa.update.policy_loss == sb.update.policy_loss);
    CHECK(sa.update.value_loss == sb.update.value_loss);
    CHECK(sa.update.entropy == sb.update.entropy);
    CHECK(sa.update.grad_norm == sb.update.grad_norm);
    CHECK(sa.update.grad_norm_phi == sb.update.grad_norm_phi);
    CHECK(sa.update.clip_frac == sb.update.clip_frac);
  }
  CHECK(params_equal(a.encoder(), b.encoder()));
  CHECK(a.global_step() == 3 * cfg.n_envs * cfg.rollout);
}

TEST_CASE("camera only training has no phi gradients") {
  TrainerConfig cfg = small_cfg(false);
  Trainer t(cfg);
  IterStats s = t.iterate();
  CHECK(s.update.grad_norm > 0.0);
  CHECK(s.update.grad_norm_phi == 0.0);
  for (const auto& [name, p] : t.encoder().params) CHECK_FALSE(nn::EncoderSet::is_phi(name));
}

TEST_CASE("loss gradient wrt phi matches finite differences") {
  nn::Hyper hp;
  hp.image_hw = 4;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 11);

  Rng rng(13);
  TrainerConfig cfg = small_cfg();
  TrajectoryBatch b;
  b.n_envs = 4;
  b.rollout = 1;
  b.data.resize(4);
  for (Transition& tr : b.data) {
    tr.image.resize(hp.image_dim());
    for (double& x : tr.image) x = rng.uniform(0, 1);
    for (int k = 0; k < 8; ++k) tr.proprio[k] = rng.uniform(-1, 1);
    tr.task_id = static_cast<int>(rng.uniform_int(0, 4));
    tr.has_graph = true;
    tr.graph = tiny_graph();
    tr.graph.nodes[1].center[0] += rng.uniform(-0.05, 0.05);
    for (int d = 0; d < 4; ++d) tr.action[d] = rng.uniform(-1.5, 1.5);
    tr.logprob = rng.uniform(-6, -2);
  }
  b.advantages = {0.7, -1.2, 0.4, 1.5};
  b.returns = {0.5, -0.3, 1.1, 0.2};
  b.bootstrap_values = {0, 0, 0, 0};

  std::vector<int> idx = {0, 1, 2, 3};
  auto loss_value = [&](const nn::EncoderSet& e) {
    ad::Tape tape;
    nn::BoundParams p = nn::bind(tape, e);
    return control_loss(tape, p, b, idx, cfg).scalar();
  };

  ad::Tape tape;
  nn::BoundParams p = nn::bind(tape, enc);
  ad::Tensor loss = control_loss(tape, p, b, idx, cfg);
  tape.backward(loss);

  Rng pick(17);
  const double h = 1e-5;
  for (const std::string& name :
       {std::string("gnn.emb"), std::string("gnn.w_self"), std::string("gnn.w_rel3"),
        std::string("gnn.w_out"), std::string("gnn.w_in"), std::string("fuse.w_k")}) {
    REQUIRE(tape.has_grad(p[name]));
    ad::Tensor g = tape.grad(p[name]);
    for (int probe = 0; probe < 4; ++probe) {
      int k = static_cast<int>(pick.uniform_int(0, static_cast<int>(g.v.size()) - 1));
      nn::EncoderSet plus = enc;
      nn::EncoderSet minus = enc;
      plus.params.at(name).v[k] += h;
      minus.params.at(name).v[k] -= h;
      double fd = (loss_value(plus) - loss_value(minus)) / (2 * h);
      double denom = std::max(1.0, std::abs(fd));
      INFO(name, " entry ", k, " fd ", fd, " ad ", g.v[k]);
      CHECK(std::abs(g.v[k] - fd) / denom <= 1e-4);
    }
  }
}

TEST_CASE("evaluation is deterministic and honest about fresh policies") {
  TrainerConfig cfg = small_cfg();
  nn::EncoderSet enc = make_policy(cfg);
  EvalResult a = evaluate(enc, "pick_cube", kg::NoiseParams::clean(), 8, cfg.seed);
  EvalResult b = evaluate(enc, "pick_cube", kg::NoiseParams::clean(), 8, cfg.seed);
  CHECK(a.mean_return == b.mean_return);
  CHECK(a.success_rate == b.success_rate);
  CHECK(a.success_rate <= 0.25);  // untrained policy should not solve the task
  CHECK(std::isfinite(a.mean_return));
}

TEST_CASE("trainer config validation rejects bad values") {
  TrainerConfig cfg = small_cfg();
  cfg.clip_eps = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_cfg();
  cfg.tasks = {};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_cfg();
  cfg.tasks = {"nope"};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_cfg();
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_cfg();
  cfg.noise = "fuzzy";
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
