#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgrl/config.hpp"
#include "sgrl/trainer.hpp"

namespace sgrl::bench {

// Reward anchors behind the 0-1000 normalized score: mean undiscounted
// episode return of a uniform-random policy and of the scripted expert.
struct TaskAnchors {
  double r_random = 0.0;
  double r_expert = 0.0;
  int episodes = 0;
};

// Rolls both anchor policies over `episodes` fresh episodes on the task's
// anchor seed stream (paired scenes, so the gap estimate is low-variance).
// Throws RuntimeFault when the task fails to separate (r_expert <= r_random).
TaskAnchors compute_anchors(const std::string& task, int episodes = 200);

// Mean return / success of the scripted expert or a uniform-random policy
// over fresh episodes; used by anchor computation and by `eval --policy`.
struct PolicyStats {
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_length = 0.0;
};
PolicyStats run_scripted(const std::string& task, int episodes, std::uint64_t master_seed,
                         int env_index);
PolicyStats run_random(const std::string& task, int episodes, std::uint64_t master_seed,
                       int env_index);

// score = 1000 * clip((R - r_random) / (r_expert - r_random), 0, 1)
double normalized_score(double mean_return, const TaskAnchors& a);

// Unweighted mean over per-task scores; one entry per task required.
double multitask_score(const std::vector<double>& scores);

// Memoizes compute_anchors, backed by <dir>/<task>.anchors when `dir` is
// nonempty. Cached files with a different episode count are recomputed.
class AnchorCache {
 public:
  explicit AnchorCache(std::filesystem::path dir = {}, int episodes = 200);

  const TaskAnchors& get(const std::string& task);
  int episodes() const { return episodes_; }

 private:
  std::filesystem::path dir_;
  int episodes_;
  std::map<std::string, TaskAnchors> mem_;
};

struct EvalPoint {
  long long step = 0;
  double score = 0.0;         // task-mean normalized score
  double success_rate = 0.0;  // task-mean success rate
  double mean_return = 0.0;   // task-mean raw return
};

// One training run's evaluation curve plus identity. For multitask runs
// `task` is the comma-joined list and per-point values are task means.
struct RunRecord {
  std::string task;
  std::string regime;  // camera | camera+kg
  int seed = 0;
  std::string noise = "clean";
  std::vector<EvalPoint> points;
  bool failed = false;
  std::string error;

  double final_score() const;
  double final_success() const;
};

// Mean score over training: trapezoidal integral of the score curve divided
// by the step span. A single point (or zero span) yields that point's score.
double auc(const RunRecord& rec);

// First step at which the piecewise-linear score curve reaches `target`,
// interpolating between adjacent eval points; empty if never reached.
std::optional<double> steps_to_target(const RunRecord& rec, double target);

// Grid of runs: every task x regime x seed x noise combination trains one
// policy for `steps` env steps. Entries in `tasks` may be comma-joined lists
// (joint multitask training scored by the task mean).
struct Plan {
  std::string name = "experiment";
  std::vector<std::string> tasks;
  std::vector<std::string> regimes = {"camera+kg"};
  std::vector<int> seeds = {1, 2, 3};
  std::vector<std::string> noises = {"clean"};
  long long steps = 200000;
  double target_score = 600.0;
  int anchor_episodes = 200;

  // Trainer knobs carried into every run.
  int n_envs = 64;
  int rollout = 24;
  int epochs = 4;
  int minibatch = 256;
  int eval_every = 2;
  int eval_episodes = 16;
  double lr = 3e-4;
  double clip_eps = 0.2;
  double beta_v = 0.5;
  double beta_h = 0.01;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double grad_clip = 0.5;

  static Plan from_config(const cfg::Config& c);
  void validate() const;
  train::TrainerConfig trainer_config(const std::string& task, const std::string& regime,
                                      int seed, const std::string& noise) const;
};

bool regime_uses_graph(const std::string& regime);

// Directory-safe run identifier: <task>_<regime>_s<seed>[_<noise>].
std::string run_id(const std::string& task, const std::string& regime, int seed,
                   const std::string& noise);

struct ExperimentResult {
  std::filesystem::path dir;  // <results_root>/<plan.name>
  std::vector<RunRecord> records;
  bool any_failed = false;
};

// Trains every run in the plan, writing per-run directories
// (config.snapshot, train_log.csv, eval_log.csv, checkpoints/final.ckpt)
// plus summary.csv and plots.csv under <results_root>/<plan.name>. Anchors
// are computed once per task and cached under <results_root>/anchors.
// Failed runs are recorded (nan metrics) and the experiment continues.
// Progress and the final summary table go to `out` when given.
ExperimentResult run_experiment(const Plan& plan, const std::filesystem::path& results_root,
                                std::ostream* out = nullptr);

// Pure renderings of a RunRecord set; run_experiment writes these verbatim.
std::string summary_csv(const std::vector<RunRecord>& records, double target);
std::string plots_csv(const std::vector<RunRecord>& records);
std::string summary_table(const std::vector<RunRecord>& records, double target);

}  // namespace sgrl::bench
