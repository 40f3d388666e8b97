#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgrl/bench.hpp"
#include "sgrl/checkpoint.hpp"
#include "sgrl/env.hpp"
#include "sgrl/nets.hpp"

namespace fs = std::filesystem;
using namespace sgrl;

namespace {

std::string default_root() {
  const char* env = std::getenv("SGRL_RESULTS_ROOT");
  return (env && *env) ? env : "results";
}

// Leftover tokens are config overrides: "--key value" or "--key=value".
void apply_extras(const std::vector<std::string>& extras, cfg::Config& c) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    check_arg(key.rfind("--", 0) == 0 && key.size() > 2,
              "unrecognized argument '" + key + "' (overrides look like --key value)");
    key = key.substr(2);
    if (const auto eq = key.find('='); eq != std::string::npos) {
      c.set(key.substr(0, eq), key.substr(eq + 1));
      continue;
    }
    check_arg(i + 1 < extras.size(), "override --" + key + " is missing a value");
    c.set(key, extras[++i]);
  }
}

const std::vector<std::string> kTrainKeys = {
    "experiment", "task",       "regime",     "noise",      "seed",
    "steps",      "n_envs",     "rollout",    "epochs",     "minibatch",
    "eval_every", "eval_episodes", "lr",      "clip_eps",   "beta_v",
    "beta_h",     "gamma",      "gae_lambda", "grad_clip",  "target_score",
    "anchor_episodes"};

// Singular train keys -> plural plan keys; unset keys keep plan defaults.
bench::Plan plan_from_train_config(const cfg::Config& c) {
  c.reject_unknown(kTrainKeys);
  cfg::Config pc;
  pc.set("name", c.get_str("experiment", "train"));
  pc.set("tasks", c.get_str("task", "pick_cube"));
  pc.set("regimes", c.get_str("regime", "camera+kg"));
  pc.set("seeds", c.get_str("seed", "1"));
  pc.set("noises", c.get_str("noise", "clean"));
  for (const std::string key :
       {"steps", "n_envs", "rollout", "epochs", "minibatch", "eval_every", "eval_episodes", "lr",
        "clip_eps", "beta_v", "beta_h", "gamma", "gae_lambda", "grad_clip", "target_score",
        "anchor_episodes"}) {
    if (c.has(key)) pc.set(key, c.get_str(key, ""));
  }
  return bench::Plan::from_config(pc);
}

int report_experiment(const bench::ExperimentResult& res) {
  if (!res.any_failed) {
    std::cout << "results: " << res.dir.string() << "\n";
    return 0;
  }
  for (const auto& rec : res.records) {
    if (rec.failed) {
      std::cerr << "error: run " << bench::run_id(rec.task, rec.regime, rec.seed, rec.noise)
                << " failed: " << rec.error << "\n";
    }
  }
  return 2;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& extras,
              const std::string& root) {
  cfg::Config c;
  if (!config_path.empty()) c.apply_file(config_path);
  apply_extras(extras, c);
  const bench::Plan plan = plan_from_train_config(c);
  const auto res = bench::run_experiment(plan, root, &std::cout);
  return report_experiment(res);
}

int cmd_bench(const std::string& plan_path, const std::vector<std::string>& extras,
              const std::string& root) {
  cfg::Config c = cfg::Config::from_file(plan_path);
  apply_extras(extras, c);
  const bench::Plan plan = bench::Plan::from_config(c);
  const auto res = bench::run_experiment(plan, root, &std::cout);
  return report_experiment(res);
}

int cmd_anchors(const std::string& tasks_csv, int episodes, const std::string& root) {
  cfg::Config c;
  c.set("tasks", tasks_csv);
  const auto tasks = c.get_list("tasks", {});
  bench::AnchorCache cache(fs::path(root) / "anchors", episodes);
  for (const auto& t : tasks) {
    const auto& a = cache.get(t);
    std::printf("anchors %-15s random %10.4f  expert %10.4f  (%d episodes)\n", t.c_str(),
                a.r_random, a.r_expert, a.episodes);
  }
  std::cout << "cached under " << (fs::path(root) / "anchors").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& policy, std::string task,
             int episodes, std::string noise, std::uint64_t seed, const std::string& root) {
  check_arg(episodes >= 1, "eval: episodes must be >= 1");
  check_arg(policy == "checkpoint" || policy == "expert" || policy == "random",
            "eval: --policy must be checkpoint|expert|random");

  std::optional<nn::EncoderSet> enc;
  if (policy == "checkpoint") {
    check_arg(!ckpt_path.empty(), "eval: missing checkpoint path (--checkpoint)");
    if (!fs::exists(ckpt_path)) fail_run("eval: checkpoint not found: " + ckpt_path);
    const auto bundle = ckpt::load(ckpt_path);
    enc = nn::EncoderSet::from_bundle(bundle);
    if (task.empty()) {
      if (auto it = bundle.meta.find("task"); it != bundle.meta.end()) task = it->second;
    }
    if (noise.empty()) {
      auto it = bundle.meta.find("noise");
      noise = it != bundle.meta.end() ? it->second : "clean";
    }
  }
  check_arg(!task.empty(), "eval: --task is required for this policy");
  if (noise.empty()) noise = "clean";
  const auto np = kg::NoiseParams::named(noise);

  bench::AnchorCache cache(fs::path(root) / "anchors");

  // Multitask checkpoints ("a+b") evaluate every task they were trained on.
  cfg::Config tc;
  std::string joined = task;
  std::replace(joined.begin(), joined.end(), '+', ',');
  tc.set("tasks", joined);
  const auto tasks = tc.get_list("tasks", {});

  std::ostringstream csv;
  csv << "task,policy,episodes,noise,mean_return,success_rate,score\n";
  std::vector<double> scores;
  for (const auto& t : tasks) {
    const auto spec = env::TaskSpec::by_name(t);
    const int idx = static_cast<int>(stream::kEvalBase) + spec.id;
    double mean_return = 0.0, success = 0.0;
    if (policy == "expert") {
      const auto st = bench::run_scripted(t, episodes, seed, idx);
      mean_return = st.mean_return;
      success = st.success_rate;
    } else if (policy == "random") {
      const auto st = bench::run_random(t, episodes, seed, idx);
      mean_return = st.mean_return;
      success = st.success_rate;
    } else {
      const auto er = train::evaluate(*enc, t, np, episodes, seed);
      mean_return = er.mean_return;
      success = er.success_rate;
    }
    const double score = bench::normalized_score(mean_return, cache.get(t));
    scores.push_back(score);
    std::printf("task %-15s policy %-10s episodes %-4d noise %-6s return %9.4f  success %5.2f  "
                "score %7.1f\n",
                t.c_str(), policy.c_str(), episodes, noise.c_str(), mean_return, success, score);
    csv << t << "," << policy << "," << episodes << "," << noise << "," << mean_return << ","
        << success << "," << score << "\n";
  }
  if (tasks.size() > 1) {
    std::printf("multitask score %7.1f\n", bench::multitask_score(scores));
  }

  fs::path out_dir = fs::path(root) / "eval";
  fs::create_directories(out_dir);
  std::string label = task + "_" + policy + "_s" + std::to_string(seed);
  std::replace(label.begin(), label.end(), ',', '+');
  std::ofstream out(out_dir / (label + ".csv"));
  out << csv.str();
  std::cout << "wrote " << (out_dir / (label + ".csv")).string() << "\n";
  return 0;
}

int cmd_inspect_graph(const std::string& task, std::uint64_t seed, int steps) {
  env::EnvConfig ec;
  ec.task = env::TaskSpec::by_name(task);
  ec.use_graph = true;
  ec.master_seed = seed;
  env::Environment e(ec);
  if (steps < 0) steps = ec.task.horizon;

  e.reset();
  std::cout << "== step 0 (reset) ==\n" << e.graph().dump(env::class_names());
  for (int t = 1; t <= steps && e.episode_active(); ++t) {
    const auto a = env::expert_action(e.task(), e.state());
    const auto res = e.step(a);
    std::printf("== step %d  action [%+.2f %+.2f %+.2f grip %+.2f]  reward %+.3f ==\n", t,
                a.delta[0], a.delta[1], a.delta[2], a.grip, res.reward);
    std::cout << e.graph().dump(env::class_names());
    if (res.terminated || res.truncated) {
      std::cout << (res.success ? "episode ended: success\n" : "episode ended\n");
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale scene-graph RL workbench"};
  app.require_subcommand(1);
  const std::string root_default = default_root();

  auto* train = app.add_subcommand("train", "train one policy and log its run directory");
  train->allow_extras();
  std::string train_config, train_root = root_default;
  train->add_option("--config", train_config, "config file of key = value lines");
  train->add_option("--results-root", train_root, "results directory root");

  auto* bench_cmd = app.add_subcommand("bench", "run an experiment plan and print the summary");
  bench_cmd->allow_extras();
  std::string plan_path, bench_root = root_default;
  bench_cmd->add_option("plan", plan_path, "plan file")->required();
  bench_cmd->add_option("--results-root", bench_root, "results directory root");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or reference policy");
  std::string eval_ckpt, eval_policy = "checkpoint", eval_task, eval_noise,
              eval_root = root_default;
  int eval_episodes = 100;
  std::uint64_t eval_seed = 7;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--policy", eval_policy, "checkpoint|expert|random");
  eval->add_option("--task", eval_task, "task name (defaults to checkpoint metadata)");
  eval->add_option("--episodes", eval_episodes, "episode count");
  eval->add_option("--noise", eval_noise, "noise level (defaults to checkpoint metadata)");
  eval->add_option("--seed", eval_seed, "eval stream master seed");
  eval->add_option("--results-root", eval_root, "results directory root (anchor cache)");

  auto* anchors = app.add_subcommand("anchors", "compute and cache score anchors");
  std::string anchor_tasks, anchor_root = root_default;
  int anchor_episodes = 200;
  anchors->add_option("--tasks", anchor_tasks, "comma-separated tasks (default: all)");
  anchors->add_option("--episodes", anchor_episodes, "episodes per anchor policy");
  anchors->add_option("--results-root", anchor_root, "results directory root");

  auto* inspect = app.add_subcommand("inspect-graph", "dump the scene graph along an expert run");
  std::string inspect_task;
  std::uint64_t inspect_seed = 1;
  int inspect_steps = -1;
  inspect->add_option("--task", inspect_task, "task name")->required();
  inspect->add_option("--seed", inspect_seed, "episode master seed");
  inspect->add_option("--steps", inspect_steps, "steps to trace (default: task horizon)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_config, train->remaining(), train_root);
    if (bench_cmd->parsed()) return cmd_bench(plan_path, bench_cmd->remaining(), bench_root);
    if (eval->parsed()) {
      return cmd_eval(eval_ckpt, eval_policy, eval_task, eval_episodes, eval_noise, eval_seed,
                      eval_root);
    }
    if (anchors->parsed()) {
      if (anchor_tasks.empty()) {
        std::string all;
        for (const auto& t : env::TaskSpec::all_names()) {
          if (!all.empty()) all += ",";
          all += t;
        }
        anchor_tasks = all;
      }
      return cmd_anchors(anchor_tasks, anchor_episodes, anchor_root);
    }
    if (inspect->parsed()) return cmd_inspect_graph(inspect_task, inspect_seed, inspect_steps);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
