#include "sgrl/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "sgrl/checkpoint.hpp"
#include "sgrl/env.hpp"

namespace sgrl::bench {
namespace fs = std::filesystem;

namespace {

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v, int prec) {
  if (!std::isfinite(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// Multitask run names join tasks with '+'.
std::vector<std::string> split_tasks(const std::string& joined) {
  std::vector<std::string> out;
  std::stringstream ss(joined);
  std::string item;
  while (std::getline(ss, item, '+'))
    if (!item.empty()) out.push_back(item);
  check_arg(!out.empty(), "bench: empty task entry");
  return out;
}

using PolicyFn = std::function<env::ActionCommand(const env::Environment&, Rng&)>;

PolicyStats run_policy(const std::string& task, int episodes, std::uint64_t master_seed,
                       int env_index, const PolicyFn& pi) {
  check_arg(episodes >= 1, "bench: episodes must be >= 1");
  env::EnvConfig ec;
  ec.task = env::TaskSpec::by_name(task);
  ec.use_graph = false;
  ec.master_seed = master_seed;
  ec.env_index = env_index;
  env::Environment e(ec);
  Rng act(derive_seed(master_seed, stream::kPolicyActBase + static_cast<std::uint64_t>(env_index)));

  PolicyStats st;
  for (int ep = 0; ep < episodes; ++ep) {
    e.reset();
    double ret = 0.0;
    int len = 0;
    bool success = false;
    while (e.episode_active()) {
      auto res = e.step(pi(e, act));
      ret += res.reward;
      success = res.success;
      ++len;
    }
    st.mean_return += ret;
    st.success_rate += success ? 1.0 : 0.0;
    st.mean_length += len;
  }
  st.mean_return /= episodes;
  st.success_rate /= episodes;
  st.mean_length /= episodes;
  return st;
}

}  // namespace

PolicyStats run_scripted(const std::string& task, int episodes, std::uint64_t master_seed,
                         int env_index) {
  return run_policy(task, episodes, master_seed, env_index,
                    [](const env::Environment& e, Rng&) {
                      return env::expert_action(e.task(), e.state());
                    });
}

PolicyStats run_random(const std::string& task, int episodes, std::uint64_t master_seed,
                       int env_index) {
  return run_policy(task, episodes, master_seed, env_index,
                    [](const env::Environment&, Rng& rng) { return env::random_action(rng); });
}

TaskAnchors compute_anchors(const std::string& task, int episodes) {
  const auto spec = env::TaskSpec::by_name(task);
  const int idx = static_cast<int>(stream::kAnchorBase) + spec.id;
  const PolicyStats rnd = run_random(task, episodes, 0, idx);
  const PolicyStats exp = run_scripted(task, episodes, 0, idx);
  if (!(exp.mean_return > rnd.mean_return)) {
    fail_run("anchors: task '" + task + "' does not separate (expert " +
             fmt_num(exp.mean_return) + " <= random " + fmt_num(rnd.mean_return) + ")");
  }
  return {rnd.mean_return, exp.mean_return, episodes};
}

double normalized_score(double mean_return, const TaskAnchors& a) {
  check_arg(a.r_expert > a.r_random, "score: degenerate anchors (r_expert <= r_random)");
  double t = (mean_return - a.r_random) / (a.r_expert - a.r_random);
  return 1000.0 * std::clamp(t, 0.0, 1.0);
}

double multitask_score(const std::vector<double>& scores) {
  check_arg(!scores.empty(), "score: no per-task scores");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

AnchorCache::AnchorCache(std::filesystem::path dir, int episodes)
    : dir_(std::move(dir)), episodes_(episodes) {
  check_arg(episodes_ >= 1, "anchors: episode count must be >= 1");
}

namespace {

bool load_anchor_file(const fs::path& path, TaskAnchors& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string header, key;
  if (!std::getline(in, header) || header != "sgrl-anchors v1") return false;
  int fields = 0;
  while (in >> key) {
    if (key == "episodes") {
      if (!(in >> out.episodes)) return false;
    } else if (key == "r_random") {
      if (!(in >> out.r_random)) return false;
    } else if (key == "r_expert") {
      if (!(in >> out.r_expert)) return false;
    } else {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    ++fields;
  }
  return fields == 3;
}

void save_anchor_file(const fs::path& path, const std::string& task, const TaskAnchors& a) {
  std::ofstream out(path);
  if (!out) fail_run("anchors: cannot write " + path.string());
  out << "sgrl-anchors v1\n";
  out << "task " << task << "\n";
  out << "episodes " << a.episodes << "\n";
  out << "r_random " << fmt_exact(a.r_random) << "\n";
  out << "r_expert " << fmt_exact(a.r_expert) << "\n";
}

}  // namespace

const TaskAnchors& AnchorCache::get(const std::string& task) {
  if (auto it = mem_.find(task); it != mem_.end()) return it->second;
  const fs::path file = dir_.empty() ? fs::path{} : dir_ / (task + ".anchors");
  TaskAnchors a;
  if (!file.empty() && fs::exists(file) && load_anchor_file(file, a) &&
      a.episodes == episodes_ && a.r_expert > a.r_random) {
    return mem_.emplace(task, a).first->second;
  }
  a = compute_anchors(task, episodes_);
  if (!file.empty()) {
    fs::create_directories(dir_);
    save_anchor_file(file, task, a);
  }
  return mem_.emplace(task, a).first->second;
}

double RunRecord::final_score() const {
  return points.empty() ? std::nan("") : points.back().score;
}

double RunRecord::final_success() const {
  return points.empty() ? std::nan("") : points.back().success_rate;
}

double auc(const RunRecord& rec) {
  const auto& p = rec.points;
  if (p.empty()) return std::nan("");
  if (p.size() == 1) return p.front().score;
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    check_arg(p[i].step >= p[i - 1].step, "auc: eval steps must be non-decreasing");
    area += 0.5 * (p[i].score + p[i - 1].score) *
            static_cast<double>(p[i].step - p[i - 1].step);
  }
  const double span = static_cast<double>(p.back().step - p.front().step);
  if (span <= 0.0) return p.front().score;
  return area / span;
}

std::optional<double> steps_to_target(const RunRecord& rec, double target) {
  const auto& p = rec.points;
  if (p.empty()) return std::nullopt;
  if (p.front().score >= target) return static_cast<double>(p.front().step);
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i].score >= target) {
      const double y0 = p[i - 1].score, y1 = p[i].score;
      const double s0 = static_cast<double>(p[i - 1].step);
      const double s1 = static_cast<double>(p[i].step);
      return s0 + (target - y0) * (s1 - s0) / (y1 - y0);
    }
  }
  return std::nullopt;
}

bool regime_uses_graph(const std::string& regime) {
  if (regime == "camera+kg") return true;
  if (regime == "camera") return false;
  fail_arg("regime: unknown '" + regime + "' (expected camera|camera+kg)");
}

std::string run_id(const std::string& task, const std::string& regime, int seed,
                   const std::string& noise) {
  std::string id = task + "_" + regime + "_s" + std::to_string(seed);
  if (noise != "clean") {
    std::string n = noise;
    std::replace(n.begin(), n.end(), ':', '-');
    id += "_" + n;
  }
  return id;
}

Plan Plan::from_config(const cfg::Config& c) {
  c.reject_unknown({"name", "tasks", "regimes", "seeds", "noises", "steps", "target_score",
                    "anchor_episodes", "n_envs", "rollout", "epochs", "minibatch", "eval_every",
                    "eval_episodes", "lr", "clip_eps", "beta_v", "beta_h", "gamma", "gae_lambda",
                    "grad_clip"});
  Plan p;
  p.name = c.get_str("name", p.name);
  p.tasks = c.get_list("tasks", {});
  p.regimes = c.get_list("regimes", p.regimes);
  p.noises = c.get_list("noises", p.noises);
  if (c.has("seeds")) {
    p.seeds.clear();
    for (const auto& s : c.get_list("seeds", {})) {
      try {
        std::size_t pos = 0;
        p.seeds.push_back(std::stoi(s, &pos));
        check_arg(pos == s.size(), "");
      } catch (const std::exception&) {
        fail_arg("plan: seeds: '" + s + "' is not an integer");
      }
    }
  }
  p.steps = c.get_int("steps", p.steps);
  p.target_score = c.get_num("target_score", p.target_score);
  p.anchor_episodes = static_cast<int>(c.get_int("anchor_episodes", p.anchor_episodes));
  p.n_envs = static_cast<int>(c.get_int("n_envs", p.n_envs));
  p.rollout = static_cast<int>(c.get_int("rollout", p.rollout));
  p.epochs = static_cast<int>(c.get_int("epochs", p.epochs));
  p.minibatch = static_cast<int>(c.get_int("minibatch", p.minibatch));
  p.eval_every = static_cast<int>(c.get_int("eval_every", p.eval_every));
  p.eval_episodes = static_cast<int>(c.get_int("eval_episodes", p.eval_episodes));
  p.lr = c.get_num("lr", p.lr);
  p.clip_eps = c.get_num("clip_eps", p.clip_eps);
  p.beta_v = c.get_num("beta_v", p.beta_v);
  p.beta_h = c.get_num("beta_h", p.beta_h);
  p.gamma = c.get_num("gamma", p.gamma);
  p.gae_lambda = c.get_num("gae_lambda", p.gae_lambda);
  p.grad_clip = c.get_num("grad_clip", p.grad_clip);
  p.validate();
  return p;
}

void Plan::validate() const {
  check_arg(!name.empty(), "plan: name must be nonempty");
  for (char ch : name) {
    check_arg(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-',
              "plan: name must be [alnum_-], got '" + name + "'");
  }
  check_arg(!tasks.empty(), "plan: tasks must be nonempty");
  check_arg(!regimes.empty(), "plan: regimes must be nonempty");
  check_arg(!seeds.empty(), "plan: seeds must be nonempty");
  check_arg(!noises.empty(), "plan: noises must be nonempty");
  check_arg(steps >= 0, "plan: steps must be >= 0");
  check_arg(std::isfinite(target_score) && target_score > 0.0,
            "plan: target_score must be positive");
  check_arg(anchor_episodes >= 1, "plan: anchor_episodes must be >= 1");
  auto reject_dups = [](const auto& v, const std::string& what) {
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    check_arg(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
              "plan: duplicate entries in " + what);
  };
  reject_dups(tasks, "tasks");
  reject_dups(regimes, "regimes");
  reject_dups(seeds, "seeds");
  reject_dups(noises, "noises");
  for (const auto& r : regimes) regime_uses_graph(r);
  for (const auto& t : tasks) {
    for (const auto& n : noises) {
      check_arg(!seeds.empty(), "");
      trainer_config(t, regimes.front(), seeds.front(), n);  // validates tasks/noise/knobs
    }
  }
}

train::TrainerConfig Plan::trainer_config(const std::string& task, const std::string& regime,
                                          int seed, const std::string& noise) const {
  check_arg(seed >= 0, "plan: seeds must be >= 0");
  train::TrainerConfig tc;
  tc.tasks = split_tasks(task);
  tc.use_graph = regime_uses_graph(regime);
  tc.noise = noise;
  tc.n_envs = n_envs;
  tc.rollout = rollout;
  tc.epochs = epochs;
  tc.minibatch = minibatch;
  tc.clip_eps = clip_eps;
  tc.beta_v = beta_v;
  tc.beta_h = beta_h;
  tc.gamma = gamma;
  tc.gae_lambda = gae_lambda;
  tc.lr = lr;
  tc.grad_clip = grad_clip;
  tc.total_steps = steps;
  tc.eval_every = eval_every;
  tc.eval_episodes = eval_episodes;
  tc.seed = static_cast<std::uint64_t>(seed);
  tc.validate();
  return tc;
}

std::string summary_csv(const std::vector<RunRecord>& records, double target) {
  std::ostringstream os;
  os << "task,regime,seed,success,final_score,auc,steps_to_" << fmt_num(target) << ",noise\n";
  for (const auto& rec : records) {
    os << rec.task << "," << rec.regime << "," << rec.seed << ",";
    if (rec.failed) {
      os << "nan,nan,nan,nan";
    } else {
      const auto st = steps_to_target(rec, target);
      os << fmt_num(rec.final_success()) << "," << fmt_num(rec.final_score()) << ","
         << fmt_num(auc(rec)) << "," << (st ? fmt_num(*st) : "nan");
    }
    os << "," << rec.noise << "\n";
  }
  return os.str();
}

std::string plots_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "task,regime,seed,noise,step,score\n";
  for (const auto& rec : records) {
    for (const auto& p : rec.points) {
      os << rec.task << "," << rec.regime << "," << rec.seed << "," << rec.noise << "," << p.step
         << "," << fmt_num(p.score) << "\n";
    }
  }
  return os.str();
}

std::string summary_table(const std::vector<RunRecord>& records, double target) {
  constexpr int kCols = 8;
  std::vector<std::array<std::string, kCols>> rows;
  rows.push_back({"task", "regime", "seed", "noise", "success", "final", "auc",
                  "steps_to_" + fmt_num(target)});
  for (const auto& rec : records) {
    std::array<std::string, kCols> r;
    r[0] = rec.task;
    r[1] = rec.regime;
    r[2] = std::to_string(rec.seed);
    r[3] = rec.noise;
    if (rec.failed) {
      r[4] = r[5] = r[6] = r[7] = "n/a";
    } else {
      r[4] = fmt_fixed(rec.final_success(), 2);
      r[5] = fmt_fixed(rec.final_score(), 0);
      r[6] = fmt_fixed(auc(rec), 0);
      const auto st = steps_to_target(rec, target);
      r[7] = st ? fmt_fixed(*st, 0) : "n/a";
    }
    rows.push_back(r);
  }
  std::array<std::size_t, kCols> width{};
  for (const auto& r : rows)
    for (int i = 0; i < kCols; ++i) width[i] = std::max(width[i], r[i].size());
  std::ostringstream os;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& r = rows[ri];
    for (int i = 0; i < kCols; ++i) {
      if (i) os << "  ";
      const int pad = static_cast<int>(width[i] - r[i].size());
      if (i >= 4) os << std::string(static_cast<std::size_t>(pad), ' ') << r[i];  // right-align
      else if (i + 1 < kCols) os << r[i] << std::string(static_cast<std::size_t>(pad), ' ');
      else os << r[i];
    }
    os << "\n";
    if (ri == 0) {
      std::size_t total = 2 * (kCols - 1);
      for (auto w : width) total += w;
      os << std::string(total, '-') << "\n";
    }
  }
  return os.str();
}

namespace {

cfg::Config run_snapshot(const Plan& plan, const std::string& task, const std::string& regime,
                         int seed, const std::string& noise) {
  cfg::Config c;
  c.set("experiment", plan.name);
  c.set("task", task);
  c.set("regime", regime);
  c.set("seed", std::to_string(seed));
  c.set("noise", noise);
  const auto np = kg::NoiseParams::named(noise);
  c.set("noise.sigma_c_frac", fmt_num(np.sigma_c_frac));
  c.set("noise.sigma_e_frac", fmt_num(np.sigma_e_frac));
  c.set("noise.sigma_r_rad", fmt_num(np.sigma_r_rad));
  c.set("steps", std::to_string(plan.steps));
  c.set("target_score", fmt_num(plan.target_score));
  c.set("anchor_episodes", std::to_string(plan.anchor_episodes));
  c.set("n_envs", std::to_string(plan.n_envs));
  c.set("rollout", std::to_string(plan.rollout));
  c.set("epochs", std::to_string(plan.epochs));
  c.set("minibatch", std::to_string(plan.minibatch));
  c.set("eval_every", std::to_string(plan.eval_every));
  c.set("eval_episodes", std::to_string(plan.eval_episodes));
  c.set("lr", fmt_num(plan.lr));
  c.set("clip_eps", fmt_num(plan.clip_eps));
  c.set("beta_v", fmt_num(plan.beta_v));
  c.set("beta_h", fmt_num(plan.beta_h));
  c.set("gamma", fmt_num(plan.gamma));
  c.set("gae_lambda", fmt_num(plan.gae_lambda));
  c.set("grad_clip", fmt_num(plan.grad_clip));
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail_run("bench: cannot write " + path.string());
  out << text;
}

RunRecord execute_run(const Plan& plan, const std::string& task, const std::string& regime,
                      int seed, const std::string& noise, const fs::path& exp_dir,
                      const std::map<std::string, TaskAnchors>& anchors, std::ostream* out) {
  RunRecord rec;
  rec.task = task;
  rec.regime = regime;
  rec.seed = seed;
  rec.noise = noise;

  const auto subtasks = split_tasks(task);
  std::vector<TaskAnchors> ta;
  for (const auto& t : subtasks) {
    auto it = anchors.find(t);
    if (it == anchors.end()) fail_run("bench: anchors unavailable for task '" + t + "'");
    ta.push_back(it->second);
  }

  const auto tc = plan.trainer_config(task, regime, seed, noise);
  const fs::path dir = exp_dir / run_id(task, regime, seed, noise);
  fs::create_directories(dir / "checkpoints");
  write_text(dir / "config.snapshot", run_snapshot(plan, task, regime, seed, noise).snapshot());

  std::ofstream train_log(dir / "train_log.csv");
  std::ofstream eval_log(dir / "eval_log.csv");
  if (!train_log || !eval_log) fail_run("bench: cannot write logs under " + dir.string());
  train_log << "step,task,policy_loss,value_loss,entropy,grad_norm,grad_norm_phi,clip_frac,"
               "eval_return,eval_success,wall_seconds\n";
  eval_log << "step,task,mean_return,success_rate\n";

  train::Trainer trainer(tc);

  auto eval_point = [&](long long step) {
    const auto evals = trainer.evaluate_all(tc.eval_episodes);
    EvalPoint p;
    p.step = step;
    std::vector<double> scores;
    for (std::size_t i = 0; i < evals.size(); ++i) {
      const auto& [name, er] = evals[i];
      eval_log << step << "," << name << "," << fmt_num(er.mean_return) << ","
               << fmt_num(er.success_rate) << "\n";
      scores.push_back(normalized_score(er.mean_return, ta[i]));
      p.success_rate += er.success_rate;
      p.mean_return += er.mean_return;
    }
    p.score = multitask_score(scores);
    p.success_rate /= static_cast<double>(evals.size());
    p.mean_return /= static_cast<double>(evals.size());
    rec.points.push_back(p);
    if (out) {
      *out << "  " << run_id(task, regime, seed, noise) << "  step " << step << "  score "
           << fmt_fixed(p.score, 1) << "  success " << fmt_fixed(p.success_rate, 2) << "\n";
      out->flush();
    }
    return p;
  };

  eval_point(0);
  while (trainer.global_step() < tc.total_steps) {
    const auto it = trainer.iterate();
    const bool final_iter = trainer.global_step() >= tc.total_steps;
    const bool do_eval = it.iteration % tc.eval_every == 0 || final_iter;
    std::string eval_ret, eval_succ;
    if (do_eval) {
      const auto p = eval_point(it.global_step);
      eval_ret = fmt_num(p.mean_return);
      eval_succ = fmt_num(p.success_rate);
    }
    train_log << it.global_step << "," << task << "," << fmt_num(it.update.policy_loss) << ","
              << fmt_num(it.update.value_loss) << "," << fmt_num(it.update.entropy) << ","
              << fmt_num(it.update.grad_norm) << "," << fmt_num(it.update.grad_norm_phi) << ","
              << fmt_num(it.update.clip_frac) << "," << eval_ret << "," << eval_succ << ","
              << fmt_num(it.wall_seconds) << "\n";
  }

  std::map<std::string, std::string> meta;
  meta["task"] = task;
  meta["regime"] = regime;
  meta["noise"] = noise;
  meta["seed"] = std::to_string(seed);
  meta["global_step"] = std::to_string(trainer.global_step());
  ckpt::save(dir / "checkpoints" / "final.ckpt", trainer.encoder().to_bundle(meta));
  return rec;
}

}  // namespace

ExperimentResult run_experiment(const Plan& plan, const std::filesystem::path& results_root,
                                std::ostream* out) {
  plan.validate();
  ExperimentResult result;
  result.dir = results_root / plan.name;
  fs::create_directories(result.dir);

  AnchorCache cache(results_root / "anchors", plan.anchor_episodes);
  std::map<std::string, TaskAnchors> anchors;
  std::map<std::string, std::string> anchor_errors;
  for (const auto& entry : plan.tasks) {
    for (const auto& t : split_tasks(entry)) {
      if (anchors.count(t) || anchor_errors.count(t)) continue;
      try {
        anchors[t] = cache.get(t);
        if (out) {
          *out << "anchors " << t << ": random " << fmt_fixed(anchors[t].r_random, 3)
               << ", expert " << fmt_fixed(anchors[t].r_expert, 3) << "\n";
        }
      } catch (const std::exception& e) {
        anchor_errors[t] = e.what();
        if (out) *out << "anchors " << t << ": FAILED: " << e.what() << "\n";
      }
    }
  }

  for (const auto& task : plan.tasks) {
    for (const auto& regime : plan.regimes) {
      for (const auto& noise : plan.noises) {
        for (int seed : plan.seeds) {
          RunRecord rec;
          rec.task = task;
          rec.regime = regime;
          rec.seed = seed;
          rec.noise = noise;
          try {
            rec = execute_run(plan, task, regime, seed, noise, result.dir, anchors, out);
          } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
            if (out) {
              *out << "  " << run_id(task, regime, seed, noise) << "  FAILED: " << e.what()
                   << "\n";
            }
          }
          result.any_failed = result.any_failed || rec.failed;
          result.records.push_back(std::move(rec));
        }
      }
    }
  }

  write_text(result.dir / "summary.csv", summary_csv(result.records, plan.target_score));
  write_text(result.dir / "plots.csv", plots_csv(result.records));
  if (out) {
    *out << "\nexperiment " << plan.name << " (" << result.records.size() << " runs)\n"
         << summary_table(result.records, plan.target_score);
    for (const auto& rec : result.records) {
      if (rec.failed) {
        *out << "failed: " << run_id(rec.task, rec.regime, rec.seed, rec.noise) << ": "
             << rec.error << "\n";
      }
    }
  }
  return result;
}

}  // namespace sgrl::bench
