#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgrl/geometry.hpp"
#include "sgrl/graph_features.hpp"
#include "sgrl/rng.hpp"
#include "sgrl/scene_graph.hpp"

namespace sgrl::env {

namespace cls {
constexpr int kTable = 0;
constexpr int kCube = 1;
constexpr int kWall = 2;
constexpr int kCone = 3;
constexpr int kPeg = 4;
constexpr int kCabinet = 5;
constexpr int kHandle = 6;
constexpr int kCount = 7;
}  // namespace cls

const std::map<int, std::string>& class_names();

struct RewardWeights {
  double alpha_succ = 10.0;
  double gamma_phi = 1.0;
  std::array<double, 4> beta{2.0, 2.0, 2.0, 2.0};
  double lambda_a = 0.01;
  double lambda_j = 0.005;
  double lambda_c = 1.0;
  double lambda_t = 0.01;
};

// Once-per-episode event bonuses, indexed into RewardWeights::beta.
enum Event : int { kEvGrasp = 0, kEvOccluderCleared = 1, kEvInZone = 2, kEvDrawerOpen = 3 };

struct TaskSpec {
  int id = 0;
  std::string name;  // pick_cube, pick_place, open_cabinet, po_pick, po_pick_place
  int horizon = 24;
  int goal_class = cls::kCube;
  bool partially_observable = false;
  RewardWeights weights;

  static TaskSpec by_name(const std::string& name);
  static const std::vector<std::string>& all_names();
};

struct ActionCommand {
  std::array<double, 3> delta{0.0, 0.0, 0.0};  // each in [-1,1], scaled to kMaxStep
  double grip = 1.0;                           // close < 0 <= open

  static ActionCommand from_vector(std::span<const double> a);
  ActionCommand clipped() const;
  double squared_norm() const;
};

struct WorldState {
  geom::Vec3 gripper{0.0, 0.0, 0.7};
  geom::Vec3 prev_gripper{0.0, 0.0, 0.7};
  double open_frac = 1.0;
  int grasped_id = -1;  // -1: nothing held
  geom::Vec3 grasp_offset{0.0, 0.0, 0.0};
  std::map<int, geom::OrientedBox> objects;
  double drawer_frac = 0.0;
  bool collision = false;  // this step
  int step_idx = 0;
  std::array<bool, 4> events_paid{};
  bool occluded_now = false;  // occludes(cam, occluder, target), PO tasks
  bool success = false;
  bool dropped = false;

  const geom::OrientedBox& object(int id) const;
};

struct Observation {
  std::vector<double> image;  // H*W*3, row-major, values in [0,1]
  nn::GraphFeatures graph;    // populated only when has_graph
  bool has_graph = false;
  std::array<double, 8> proprio{};
  int task_id = 0;
  int step = 0;
};

struct StepResult {
  Observation obs;  // next observation (reset observation when the episode ended)
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool success = false;
  bool collision = false;
  std::array<bool, 4> events{};  // bonuses paid on this step
};

struct EnvConfig {
  TaskSpec task;
  bool use_graph = true;
  int image_hw = 16;
  kg::NoiseParams noise;
  bool fatal_collision = false;
  int horizon_override = 0;  // 0: task default
  std::uint64_t master_seed = 0;
  int env_index = 0;

  void validate() const;
};

// Quasi-static tabletop world. Kinematics per step: clip action, move the
// gripper by at most kMaxStep per axis inside the workspace, engage/release
// the grasp, drag pushable boxes by horizontal depenetration, map handle
// pulls to the drawer fraction, settle released objects, then pay rewards
// and refresh the scene graph.
class Environment {
 public:
  explicit Environment(const EnvConfig& cfg);

  Observation reset();
  StepResult step(const ActionCommand& a);

  // Eq-style reward on a state transition; pure so tests can replay it.
  static double compute_reward(const WorldState& prev, const ActionCommand& a,
                               const WorldState& next, const TaskSpec& task);
  // Staged potential over gripper/subgoal distance; a function of state only.
  static double potential(const WorldState& s, const TaskSpec& task);
  static bool success_of(const WorldState& s, const TaskSpec& task);

  std::vector<double> render() const;
  std::vector<double> render_without(int skip_id) const;
  Observation observe();  // draws from the noise stream when noise is active

  const WorldState& state() const { return state_; }
  const TaskSpec& task() const { return cfg_.task; }
  const EnvConfig& config() const { return cfg_; }
  const geom::CameraFrame& camera() const { return cam_; }
  const kg::SceneGraph& graph() const { return graph_; }
  bool episode_active() const { return active_; }
  int horizon() const;
  int episodes_started() const { return episodes_; }

  // Test hook: move an object's true pose without advancing time.
  void teleport_object(int id, const geom::Vec3& center);

  static constexpr double kMaxStep = 0.05;
  static constexpr double kGraspRadius = 0.03;
  static constexpr double kPushInflate = 0.03;
  static constexpr double kLiftHeight = 0.2;
  static constexpr double kDrawerTarget = 0.9;
  static constexpr double kPullRange = 0.15;

 private:
  void build_scene(Rng& rng);
  void sync_graph_full();
  void apply_kinematics(const ActionCommand& a);
  void update_events_and_success();
  geom::OrientedBox gripper_box() const;
  std::vector<double> render_state(const WorldState& s, int skip_id) const;

  EnvConfig cfg_;
  WorldState state_;
  geom::CameraFrame cam_;
  kg::SceneGraph graph_;
  Rng rng_;
  Rng noise_rng_;
  bool active_ = false;
  int episodes_ = 0;
  double light_ = 1.0;
  std::map<int, std::array<double, 3>> colors_;
  std::array<double, 3> gripper_color_{};
  int target_id_ = -1;    // graspable goal object (cube or handle)
  int occluder_id_ = -1;  // wall or cone, PO tasks
  int peg_id_ = -1;
  int cabinet_id_ = -1;
  double handle_rest_y_ = 0.0;
};

// Steps N independent environments in index order; finished episodes
// auto-reset and return the fresh observation in StepResult::obs.
class VectorEnv {
 public:
  explicit VectorEnv(const std::vector<EnvConfig>& cfgs);

  std::vector<Observation> reset();
  std::vector<StepResult> step(const std::vector<ActionCommand>& actions);

  int size() const { return static_cast<int>(envs_.size()); }
  Environment& env(int i) { return envs_[i]; }
  const Environment& env(int i) const { return envs_[i]; }

 private:
  std::vector<Environment> envs_;
};

// Deterministic waypoint controller; a pure function of the true state.
ActionCommand expert_action(const TaskSpec& task, const WorldState& s);

ActionCommand random_action(Rng& rng);

}  // namespace sgrl::env
