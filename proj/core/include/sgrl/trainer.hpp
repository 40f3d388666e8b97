#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "sgrl/env.hpp"
#include "sgrl/nets.hpp"
#include "sgrl/optimizer.hpp"

namespace sgrl::train {

// One (env, step) sample. The stored action is the pre-clip Gaussian draw and
// the log-prob is of that draw; the environment clips on its side.
struct Transition {
  std::vector<double> image;
  nn::GraphFeatures graph;
  bool has_graph = false;
  std::array<double, 8> proprio{};
  int task_id = 0;
  std::array<double, 4> action{};
  double logprob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool terminated = false;
  bool truncated = false;

  bool done() const { return terminated || truncated; }
};

// Flat rollout storage, index (t * n_envs + i). bootstrap_values hold V of
// each env's observation after the final step; gae() fills advantages and
// returns.
struct TrajectoryBatch {
  int n_envs = 0;
  int rollout = 0;
  std::vector<Transition> data;
  std::vector<double> bootstrap_values;
  std::vector<double> advantages;
  std::vector<double> returns;

  int size() const { return n_envs * rollout; }
  Transition& at(int t, int i) { return data[static_cast<std::size_t>(t) * n_envs + i]; }
  const Transition& at(int t, int i) const {
    return data[static_cast<std::size_t>(t) * n_envs + i];
  }
};

struct TrainerConfig {
  std::vector<std::string> tasks = {"pick_cube"};
  bool use_graph = true;
  std::string noise = "clean";
  int n_envs = 64;
  int rollout = 24;
  int epochs = 4;
  int minibatch = 256;
  double clip_eps = 0.2;
  double beta_v = 0.5;
  double beta_h = 0.01;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr = 3e-4;
  double grad_clip = 0.5;
  long long total_steps = 200000;
  int eval_every = 2;      // iterations between eval points
  int eval_episodes = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double grad_norm_phi = 0.0;
  double clip_frac = 0.0;
};

struct LossParts {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
};

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
};

// Rolls the policy for `rollout` steps across all envs, sampling actions from
// N(mu, sigma^2). With deterministic set, sigma is forced to 1e-6. Envs
// auto-reset; `obs` carries episode state between calls.
TrajectoryBatch collect(const nn::EncoderSet& enc, env::VectorEnv& envs,
                        std::vector<env::Observation>& obs, int rollout, Rng& rng,
                        bool deterministic = false);

// delta_t = r_t + gamma*V(s_{t+1})*(1-done) - V(s_t)
// A_t = delta_t + gamma*lambda*(1-done)*A_{t+1},  R_t = A_t + V(s_t)
void gae(TrajectoryBatch& batch, double gamma, double lambda);

// Clipped-surrogate control objective over one minibatch of batch rows:
// -E[min(rho*A, clip(rho,1-eps,1+eps)*A)] + beta_v*E[(V-R)^2] - beta_h*E[H].
ad::Tensor control_loss(ad::Tape& tape, const nn::BoundParams& p, const TrajectoryBatch& batch,
                        std::span<const int> idx, const TrainerConfig& cfg,
                        LossParts* parts = nullptr);

// Normalizes advantages in place, then runs epochs x shuffled minibatches of
// backward + global-norm clip + Adam on all parameters. Throws RuntimeFault
// on a non-finite loss.
UpdateStats update(nn::EncoderSet& enc, opt::Adam& adam, TrajectoryBatch& batch,
                   const TrainerConfig& cfg, Rng& shuffle_rng);

// Deterministic evaluation (mu actions) over sequential episodes on a fresh
// environment seeded from the eval stream for the task.
EvalResult evaluate(const nn::EncoderSet& enc, const std::string& task,
                    const kg::NoiseParams& noise, int episodes, std::uint64_t master_seed);

struct IterStats {
  int iteration = 0;
  long long global_step = 0;
  UpdateStats update;
  double wall_seconds = 0.0;
};

// Owns the policy, optimizer, and vector env; one iterate() is
// collect -> gae -> update over a full rollout window.
class Trainer {
 public:
  explicit Trainer(const TrainerConfig& cfg);

  IterStats iterate();
  std::vector<std::pair<std::string, EvalResult>> evaluate_all(int episodes) const;

  const TrainerConfig& config() const { return cfg_; }
  const nn::EncoderSet& encoder() const { return enc_; }
  nn::EncoderSet& encoder() { return enc_; }
  long long global_step() const { return global_step_; }
  int iterations() const { return iter_; }

 private:
  TrainerConfig cfg_;
  nn::EncoderSet enc_;
  opt::Adam adam_;
  env::VectorEnv envs_;
  std::vector<env::Observation> obs_;
  Rng collect_rng_;
  Rng shuffle_rng_;
  long long global_step_ = 0;
  int iter_ = 0;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace sgrl::train
