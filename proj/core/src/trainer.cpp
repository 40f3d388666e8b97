#include "sgrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sgrl::train {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

void fisher_yates(std::vector<int>& v, Rng& rng) {
  for (int k = static_cast<int>(v.size()) - 1; k > 0; --k) {
    int j = static_cast<int>(rng.uniform_int(0, k));
    std::swap(v[k], v[j]);
  }
}

nn::ObsBatch batch_from_observations(const std::vector<env::Observation>& obs,
                                     const nn::Hyper& hp) {
  int n = static_cast<int>(obs.size());
  nn::ObsBatch ob;
  ob.images = ad::Tensor(n, hp.image_dim());
  ob.proprio = ad::Tensor(n, hp.proprio_dim);
  for (int i = 0; i < n; ++i) {
    check_arg(static_cast<int>(obs[i].image.size()) == hp.image_dim(),
              "collect: image size mismatch");
    for (int k = 0; k < hp.image_dim(); ++k) ob.images.at(i, k) = obs[i].image[k];
    for (int k = 0; k < hp.proprio_dim; ++k) ob.proprio.at(i, k) = obs[i].proprio[k];
    ob.task_ids.push_back(obs[i].task_id);
    if (hp.use_graph) {
      check_arg(obs[i].has_graph, "collect: regime mismatch, observation has no graph");
      ob.graphs.push_back(&obs[i].graph);
    }
  }
  return ob;
}

nn::ObsBatch batch_from_transitions(const TrajectoryBatch& batch, std::span<const int> idx,
                                    const nn::Hyper& hp) {
  int n = static_cast<int>(idx.size());
  nn::ObsBatch ob;
  ob.images = ad::Tensor(n, hp.image_dim());
  ob.proprio = ad::Tensor(n, hp.proprio_dim);
  for (int i = 0; i < n; ++i) {
    const Transition& tr = batch.data[idx[i]];
    for (int k = 0; k < hp.image_dim(); ++k) ob.images.at(i, k) = tr.image[k];
    for (int k = 0; k < hp.proprio_dim; ++k) ob.proprio.at(i, k) = tr.proprio[k];
    ob.task_ids.push_back(tr.task_id);
    if (hp.use_graph) {
      check_arg(tr.has_graph, "update: transition is missing graph features");
      ob.graphs.push_back(&tr.graph);
    }
  }
  return ob;
}

}  // namespace

void TrainerConfig::validate() const {
  check_arg(!tasks.empty(), "trainer: task list is empty");
  for (const std::string& t : tasks) env::TaskSpec::by_name(t);
  kg::NoiseParams::named(noise);
  check_arg(n_envs >= 1, "trainer: n_envs must be >= 1");
  check_arg(rollout >= 1, "trainer: rollout must be >= 1");
  check_arg(epochs >= 1, "trainer: epochs must be >= 1");
  check_arg(minibatch >= 1, "trainer: minibatch must be >= 1");
  check_arg(clip_eps > 0.0 && clip_eps < 1.0, "trainer: clip_eps must be in (0,1)");
  check_arg(gamma > 0.0 && gamma < 1.0, "trainer: gamma must be in (0,1)");
  check_arg(gae_lambda >= 0.0 && gae_lambda <= 1.0, "trainer: gae lambda must be in [0,1]");
  check_arg(beta_v >= 0.0 && beta_h >= 0.0, "trainer: loss weights must be >= 0");
  check_arg(lr > 0.0, "trainer: learning rate must be positive");
  check_arg(grad_clip > 0.0, "trainer: grad clip must be positive");
  check_arg(total_steps >= 0, "trainer: total_steps must be >= 0");
  check_arg(eval_every >= 1, "trainer: eval_every must be >= 1");
  check_arg(eval_episodes >= 1, "trainer: eval_episodes must be >= 1");
}

TrajectoryBatch collect(const nn::EncoderSet& enc, env::VectorEnv& envs,
                        std::vector<env::Observation>& obs, int rollout, Rng& rng,
                        bool deterministic) {
  check_arg(rollout >= 1, "collect: rollout must be >= 1");
  int n = envs.size();
  check_arg(static_cast<int>(obs.size()) == n, "collect: observation vector out of sync");
  for (int i = 0; i < n; ++i)
    check_arg(envs.env(i).config().use_graph == enc.hp.use_graph,
              "collect: policy regime does not match environment regime");

  const int A = enc.hp.action_dim;
  TrajectoryBatch batch;
  batch.n_envs = n;
  batch.rollout = rollout;
  batch.data.resize(static_cast<std::size_t>(n) * rollout);
  batch.bootstrap_values.resize(n);

  for (int t = 0; t < rollout; ++t) {
    ad::Tape tape;
    nn::BoundParams p = nn::bind(tape, enc);
    nn::ObsBatch ob = batch_from_observations(obs, enc.hp);
    nn::PolicyOut out = nn::forward_policy(tape, p, ob);

    std::vector<env::ActionCommand> actions(n);
    for (int i = 0; i < n; ++i) {
      Transition& tr = batch.at(t, i);
      tr.image = obs[i].image;
      tr.proprio = obs[i].proprio;
      tr.task_id = obs[i].task_id;
      tr.has_graph = obs[i].has_graph;
      if (tr.has_graph) tr.graph = obs[i].graph;
      tr.value = out.value.at(i, 0);
      double logp = 0.0;
      for (int d = 0; d < A; ++d) {
        double mu = out.mu.at(i, d);
        double ls = deterministic ? std::log(1e-6) : out.log_sigma.at(i, d);
        double sigma = std::exp(ls);
        double x = mu + sigma * rng.normal();
        tr.action[d] = x;
        double z = (x - mu) / sigma;
        logp += -0.5 * z * z - ls - kHalfLog2Pi;
      }
      tr.logprob = logp;
      actions[i].delta = {tr.action[0], tr.action[1], tr.action[2]};
      actions[i].grip = tr.action[3];
    }

    std::vector<env::StepResult> results = envs.step(actions);
    for (int i = 0; i < n; ++i) {
      Transition& tr = batch.at(t, i);
      tr.reward = results[i].reward;
      tr.terminated = results[i].terminated;
      tr.truncated = results[i].truncated;
      obs[i] = std::move(results[i].obs);
    }
  }

  ad::Tape tape;
  nn::BoundParams p = nn::bind(tape, enc);
  nn::ObsBatch ob = batch_from_observations(obs, enc.hp);
  nn::PolicyOut out = nn::forward_policy(tape, p, ob);
  for (int i = 0; i < n; ++i) batch.bootstrap_values[i] = out.value.at(i, 0);
  return batch;
}

void gae(TrajectoryBatch& batch, double gamma, double lambda) {
  check_arg(batch.n_envs >= 1 && batch.rollout >= 1, "gae: empty batch");
  check_arg(static_cast<int>(batch.data.size()) == batch.size(), "gae: inconsistent batch");
  check_arg(static_cast<int>(batch.bootstrap_values.size()) == batch.n_envs,
            "gae: missing bootstrap values");
  check_arg(gamma > 0.0 && gamma < 1.0, "gae: gamma must be in (0,1)");
  check_arg(lambda >= 0.0 && lambda <= 1.0, "gae: lambda must be in [0,1]");

  batch.advantages.assign(batch.size(), 0.0);
  batch.returns.assign(batch.size(), 0.0);
  for (int i = 0; i < batch.n_envs; ++i) {
    double acc = 0.0;
    for (int t = batch.rollout - 1; t >= 0; --t) {
      const Transition& tr = batch.at(t, i);
      double not_done = tr.done() ? 0.0 : 1.0;
      double next_v =
          t + 1 < batch.rollout ? batch.at(t + 1, i).value : batch.bootstrap_values[i];
      double delta = tr.reward + gamma * next_v * not_done - tr.value;
      acc = delta + gamma * lambda * not_done * acc;
      int k = t * batch.n_envs + i;
      batch.advantages[k] = acc;
      batch.returns[k] = acc + tr.value;
    }
  }
}

ad::Tensor control_loss(ad::Tape& tape, const nn::BoundParams& p, const TrajectoryBatch& batch,
                        std::span<const int> idx, const TrainerConfig& cfg, LossParts* parts) {
  check_arg(!idx.empty(), "control_loss: empty minibatch");
  check_arg(batch.advantages.size() == batch.data.size() &&
                batch.returns.size() == batch.data.size(),
            "control_loss: advantages not computed");
  const nn::Hyper& hp = *p.hp;
  int B = static_cast<int>(idx.size());

  nn::ObsBatch ob = batch_from_transitions(batch, idx, hp);
  nn::PolicyOut out = nn::forward_policy(tape, p, ob);

  ad::Tensor actions(B, hp.action_dim);
  ad::Tensor old_logp(B, 1);
  ad::Tensor adv(B, 1);
  ad::Tensor ret(B, 1);
  for (int i = 0; i < B; ++i) {
    const Transition& tr = batch.data[idx[i]];
    for (int d = 0; d < hp.action_dim; ++d) actions.at(i, d) = tr.action[d];
    old_logp.at(i, 0) = tr.logprob;
    adv.at(i, 0) = batch.advantages[idx[i]];
    ret.at(i, 0) = batch.returns[idx[i]];
  }

  ad::Tensor logp = tape.gaussian_logprob(out.mu, out.log_sigma, tape.constant(actions));
  ad::Tensor ratio = tape.exp(tape.sub(logp, tape.constant(old_logp)));
  ad::Tensor adv_c = tape.constant(adv);
  ad::Tensor surr = tape.minimum(
      tape.mul(ratio, adv_c),
      tape.mul(tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_c));
  ad::Tensor policy_term = tape.scale(tape.mean(surr), -1.0);
  ad::Tensor value_err = tape.mean(tape.square(tape.sub(out.value, tape.constant(ret))));
  ad::Tensor entropy = tape.mean(tape.gaussian_entropy(out.log_sigma));
  ad::Tensor loss = tape.add(
      policy_term,
      tape.sub(tape.scale(value_err, cfg.beta_v), tape.scale(entropy, cfg.beta_h)));

  if (parts) {
    parts->policy = policy_term.scalar();
    parts->value = value_err.scalar();
    parts->entropy = entropy.scalar();
    int clipped = 0;
    for (int i = 0; i < B; ++i)
      if (std::abs(ratio.at(i, 0) - 1.0) > cfg.clip_eps) ++clipped;
    parts->clip_frac = static_cast<double>(clipped) / B;
  }
  return loss;
}

UpdateStats update(nn::EncoderSet& enc, opt::Adam& adam, TrajectoryBatch& batch,
                   const TrainerConfig& cfg, Rng& shuffle_rng) {
  check_arg(batch.advantages.size() == batch.data.size(),
            "update: run gae before updating");
  int n = batch.size();
  check_arg(n >= 1, "update: empty batch");

  double mean = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) / n;
  double sq = 0.0;
  for (double a : batch.advantages) sq += (a - mean) * (a - mean);
  double stddev = std::max(std::sqrt(sq / n), 1e-8);
  for (double& a : batch.advantages) a = (a - mean) / stddev;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  int minibatches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    fisher_yates(order, shuffle_rng);
    for (int off = 0; off < n; off += cfg.minibatch) {
      int len = std::min(cfg.minibatch, n - off);
      std::span<const int> idx(order.data() + off, static_cast<std::size_t>(len));

      ad::Tape tape;
      nn::BoundParams p = nn::bind(tape, enc);
      LossParts parts;
      ad::Tensor loss = control_loss(tape, p, batch, idx, cfg, &parts);
      if (!std::isfinite(loss.scalar())) {
        std::ostringstream os;
        os << "update: non-finite loss at epoch " << epoch << " offset " << off
           << " (policy=" << parts.policy << " value=" << parts.value
           << " entropy=" << parts.entropy << ")";
        fail_run(os.str());
      }
      tape.backward(loss);

      std::map<std::string, ad::Tensor> grads;
      double phi_sq = 0.0;
      for (const auto& [name, bound] : p.t) {
        ad::Tensor g = tape.has_grad(bound)
                           ? tape.grad(bound)
                           : ad::Tensor::zeros(bound.rows, bound.cols);
        if (nn::EncoderSet::is_phi(name))
          for (double x : g.v) phi_sq += x * x;
        grads.emplace(name, std::move(g));
      }
      double norm = opt::global_norm(grads);
      opt::clip_global_norm(grads, cfg.grad_clip);
      adam.step(enc.params, grads);

      stats.policy_loss += parts.policy;
      stats.value_loss += parts.value;
      stats.entropy += parts.entropy;
      stats.clip_frac += parts.clip_frac;
      stats.grad_norm += norm;
      stats.grad_norm_phi += std::sqrt(phi_sq);
      ++minibatches;
    }
  }
  stats.policy_loss /= minibatches;
  stats.value_loss /= minibatches;
  stats.entropy /= minibatches;
  stats.clip_frac /= minibatches;
  stats.grad_norm /= minibatches;
  stats.grad_norm_phi /= minibatches;
  return stats;
}

EvalResult evaluate(const nn::EncoderSet& enc, const std::string& task,
                    const kg::NoiseParams& noise, int episodes, std::uint64_t master_seed) {
  check_arg(episodes >= 1, "evaluate: episodes must be >= 1");
  env::EnvConfig ec;
  ec.task = env::TaskSpec::by_name(task);
  ec.use_graph = enc.hp.use_graph;
  ec.noise = noise;
  ec.master_seed = master_seed;
  ec.env_index = static_cast<int>(stream::kEvalBase) + ec.task.id;
  env::Environment e(ec);

  double total = 0.0;
  int successes = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env::Observation o = e.reset();
    double ret = 0.0;
    while (e.episode_active()) {
      ad::Tape tape;
      nn::BoundParams p = nn::bind(tape, enc);
      std::vector<env::Observation> single = {o};
      nn::PolicyOut out = nn::forward_policy(tape, p, batch_from_observations(single, enc.hp));
      env::ActionCommand a;
      a.delta = {out.mu.at(0, 0), out.mu.at(0, 1), out.mu.at(0, 2)};
      a.grip = out.mu.at(0, 3);
      env::StepResult r = e.step(a);
      ret += r.reward;
      o = r.obs;
      if (r.terminated || r.truncated) {
        if (r.success) ++successes;
        break;
      }
    }
    total += ret;
  }
  return {total / episodes, static_cast<double>(successes) / episodes};
}

namespace {

std::vector<env::EnvConfig> build_env_configs(const TrainerConfig& cfg) {
  cfg.validate();
  std::vector<env::EnvConfig> out;
  kg::NoiseParams noise = kg::NoiseParams::named(cfg.noise);
  for (int i = 0; i < cfg.n_envs; ++i) {
    env::EnvConfig ec;
    ec.task = env::TaskSpec::by_name(cfg.tasks[i % cfg.tasks.size()]);
    ec.use_graph = cfg.use_graph;
    ec.noise = noise;
    ec.master_seed = cfg.seed;
    ec.env_index = i;
    out.push_back(ec);
  }
  return out;
}

nn::EncoderSet init_encoder(const TrainerConfig& cfg) {
  nn::Hyper hp;
  hp.use_graph = cfg.use_graph;
  return nn::EncoderSet::init(hp, cfg.seed);
}

}  // namespace

Trainer::Trainer(const TrainerConfig& cfg)
    : cfg_(cfg),
      enc_(init_encoder(cfg)),
      adam_(cfg.lr),
      envs_(build_env_configs(cfg)),
      collect_rng_(derive_seed(cfg.seed, stream::kCollect)),
      shuffle_rng_(derive_seed(cfg.seed, stream::kShuffle)),
      start_(std::chrono::steady_clock::now()) {
  obs_ = envs_.reset();
}

IterStats Trainer::iterate() {
  TrajectoryBatch batch = collect(enc_, envs_, obs_, cfg_.rollout, collect_rng_);
  gae(batch, cfg_.gamma, cfg_.gae_lambda);
  UpdateStats us = update(enc_, adam_, batch, cfg_, shuffle_rng_);
  global_step_ += batch.size();
  ++iter_;

  IterStats s;
  s.iteration = iter_;
  s.global_step = global_step_;
  s.update = us;
  s.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return s;
}

std::vector<std::pair<std::string, EvalResult>> Trainer::evaluate_all(int episodes) const {
  std::vector<std::pair<std::string, EvalResult>> out;
  kg::NoiseParams noise = kg::NoiseParams::named(cfg_.noise);
  for (const std::string& task : cfg_.tasks)
    out.emplace_back(task, evaluate(enc_, task, noise, episodes, cfg_.seed));
  return out;
}

}  // namespace sgrl::train
