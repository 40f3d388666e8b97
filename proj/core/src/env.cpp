#include "sgrl/env.hpp"

#include <algorithm>
#include <cmath>

namespace sgrl::env {

namespace {

constexpr double kTableTop = 0.5;
constexpr double kCubeHalf = 0.04;
constexpr double kCubeRestZ = kTableTop + kCubeHalf;
constexpr double kPegTop = 0.52;
constexpr double kPegHalfXY = 0.08;
constexpr double kLiftTargetZ = 0.76;
constexpr double kCarryZ = 0.64;
constexpr double kTravelZ = 0.74;

const geom::Vec3 kWorkLo{-0.6, -0.4, 0.48};
const geom::Vec3 kWorkHi{0.6, 0.4, 1.0};
const geom::Vec3 kGripperStart{0.0, 0.0, 0.7};

geom::OrientedBox make_box(double cx, double cy, double cz, double ex, double ey, double ez) {
  geom::OrientedBox b;
  b.center = {cx, cy, cz};
  b.extents = {ex, ey, ez};
  return b;
}

// Fixed object ids per task, in scene insertion order.
int target_id_of(const TaskSpec& task) { return task.name == "open_cabinet" ? 2 : 1; }
int occluder_id_of(const TaskSpec& task) {
  return task.partially_observable ? 2 : -1;
}
int peg_id_of(const TaskSpec& task) {
  if (task.name == "pick_place") return 2;
  if (task.name == "po_pick_place") return 3;
  return -1;
}
int cabinet_id_of(const TaskSpec& task) { return task.name == "open_cabinet" ? 1 : -1; }

bool in_peg_zone(const geom::Vec3& p, const geom::OrientedBox& peg) {
  return std::abs(p.x() - peg.center.x()) <= kPegHalfXY &&
         std::abs(p.y() - peg.center.y()) <= kPegHalfXY;
}

std::array<double, 3> base_color(int class_id) {
  switch (class_id) {
    case cls::kTable: return {0.45, 0.30, 0.15};
    case cls::kCube: return {0.85, 0.15, 0.15};
    case cls::kWall: return {0.60, 0.60, 0.60};
    case cls::kCone: return {0.95, 0.55, 0.10};
    case cls::kPeg: return {0.10, 0.60, 0.20};
    case cls::kCabinet: return {0.35, 0.25, 0.40};
    default: return {0.90, 0.80, 0.20};  // handle
  }
}

bool pushable_class(int class_id) {
  return class_id == cls::kCube || class_id == cls::kWall || class_id == cls::kCone;
}

bool graspable_class(int class_id) { return class_id == cls::kCube || class_id == cls::kHandle; }

int class_of_object(const TaskSpec& task, int id) {
  if (id == 0) return cls::kTable;
  if (task.name == "pick_cube") return cls::kCube;
  if (task.name == "pick_place") return id == 1 ? cls::kCube : cls::kPeg;
  if (task.name == "open_cabinet") return id == 1 ? cls::kCabinet : cls::kHandle;
  if (task.name == "po_pick") return id == 1 ? cls::kCube : cls::kWall;
  return id == 1 ? cls::kCube : (id == 2 ? cls::kCone : cls::kPeg);  // po_pick_place
}

}  // namespace

const std::map<int, std::string>& class_names() {
  static const std::map<int, std::string> names = {
      {cls::kTable, "table"}, {cls::kCube, "cube"},       {cls::kWall, "wall"},
      {cls::kCone, "cone"},   {cls::kPeg, "peg"},         {cls::kCabinet, "cabinet"},
      {cls::kHandle, "handle"}};
  return names;
}

TaskSpec TaskSpec::by_name(const std::string& name) {
  TaskSpec t;
  t.name = name;
  if (name == "pick_cube") {
    t.id = 0;
  } else if (name == "pick_place") {
    t.id = 1;
  } else if (name == "open_cabinet") {
    t.id = 2;
    t.goal_class = cls::kHandle;
  } else if (name == "po_pick") {
    t.id = 3;
    t.partially_observable = true;
  } else if (name == "po_pick_place") {
    t.id = 4;
    t.partially_observable = true;
    t.horizon = 48;
  } else {
    fail_arg("unknown task '" + name + "'");
  }
  return t;
}

const std::vector<std::string>& TaskSpec::all_names() {
  static const std::vector<std::string> names = {"pick_cube", "pick_place", "open_cabinet",
                                                 "po_pick", "po_pick_place"};
  return names;
}

ActionCommand ActionCommand::from_vector(std::span<const double> a) {
  check_arg(a.size() == 4, "action must have 4 components, got " + std::to_string(a.size()));
  ActionCommand c;
  c.delta = {a[0], a[1], a[2]};
  c.grip = a[3];
  return c;
}

ActionCommand ActionCommand::clipped() const {
  ActionCommand c;
  for (int i = 0; i < 3; ++i) {
    check_arg(std::isfinite(delta[i]), "action has non-finite component");
    c.delta[i] = std::clamp(delta[i], -1.0, 1.0);
  }
  check_arg(std::isfinite(grip), "action has non-finite gripper command");
  c.grip = std::clamp(grip, -1.0, 1.0);
  return c;
}

double ActionCommand::squared_norm() const {
  return delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2] + grip * grip;
}

const geom::OrientedBox& WorldState::object(int id) const {
  auto it = objects.find(id);
  if (it == objects.end()) fail_arg("no object with id " + std::to_string(id));
  return it->second;
}

void EnvConfig::validate() const {
  check_arg(!task.name.empty(), "env: task not set");
  check_arg(image_hw > 0, "env: image size must be positive");
  check_arg(horizon_override >= 0, "env: horizon override must be >= 0");
  check_arg(env_index >= 0, "env: env index must be >= 0");
  check_arg(noise.sigma_c_frac >= 0 && noise.sigma_e_frac >= 0 && noise.sigma_r_rad >= 0,
            "env: noise sigmas must be >= 0");
}

Environment::Environment(const EnvConfig& cfg)
    : cfg_(cfg),
      graph_(10),
      rng_(derive_seed(cfg.master_seed, stream::kEnvBase + cfg.env_index)),
      noise_rng_(derive_seed(cfg.master_seed, stream::kEnvNoiseBase + cfg.env_index)) {
  cfg_.validate();
  cam_ = geom::CameraFrame::look_at({0.0, -0.9, 0.75}, {0.0, 0.05, 0.58}, 1.0471975511965976);
}

int Environment::horizon() const {
  return cfg_.horizon_override > 0 ? cfg_.horizon_override : cfg_.task.horizon;
}

void Environment::build_scene(Rng& rng) {
  const TaskSpec& task = cfg_.task;
  state_ = WorldState{};
  state_.gripper = kGripperStart;
  state_.prev_gripper = kGripperStart;
  state_.objects[0] = make_box(0.0, 0.0, 0.25, 1.2, 0.8, 0.5);

  light_ = rng.uniform(0.8, 1.2);

  target_id_ = target_id_of(task);
  occluder_id_ = occluder_id_of(task);
  peg_id_ = peg_id_of(task);
  cabinet_id_ = cabinet_id_of(task);

  int n_objects = task.name == "pick_cube" ? 2 : (task.name == "po_pick_place" ? 4 : 3);
  colors_.clear();
  for (int id = 0; id < n_objects; ++id) {
    std::array<double, 3> c = base_color(class_of_object(task, id));
    for (double& ch : c) ch = std::clamp(ch + rng.uniform(-0.08, 0.08), 0.0, 1.0);
    colors_[id] = c;
  }
  gripper_color_ = {0.20, 0.40, 0.90};

  if (task.name == "pick_cube") {
    double x = rng.uniform(-0.30, 0.30), y = rng.uniform(-0.20, 0.20);
    state_.objects[1] = make_box(x, y, kCubeRestZ, 0.08, 0.08, 0.08);
  } else if (task.name == "pick_place") {
    double x = rng.uniform(-0.20, 0.05), y = rng.uniform(-0.15, 0.15);
    state_.objects[1] = make_box(x, y, kCubeRestZ, 0.08, 0.08, 0.08);
    state_.objects[2] = make_box(0.22, 0.0, 0.51, 0.16, 0.16, 0.02);
  } else if (task.name == "open_cabinet") {
    double cx = rng.uniform(0.15, 0.35);
    state_.objects[1] = make_box(cx, 0.22, 0.62, 0.30, 0.20, 0.24);
    state_.objects[2] = make_box(cx, 0.09, 0.60, 0.08, 0.03, 0.03);
    handle_rest_y_ = 0.09;
  } else if (task.name == "po_pick") {
    state_.objects[2] = make_box(0.0, 0.08, 0.60, 0.28, 0.04, 0.20);
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      double x = rng.uniform(-0.06, 0.06), y = rng.uniform(0.16, 0.22);
      state_.objects[1] = make_box(x, y, kCubeRestZ, 0.08, 0.08, 0.08);
      if (!geom::occludes(cam_, state_.objects[2], state_.objects[1])) continue;
      if (render_state(state_, -1) != render_state(state_, 1)) continue;
      placed = true;
    }
    if (!placed) fail_run("po_pick reset: no fully hidden cube pose found");
  } else {  // po_pick_place
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      double x = rng.uniform(-0.05, 0.05), y = rng.uniform(0.14, 0.20);
      state_.objects[1] = make_box(x, y, kCubeRestZ, 0.08, 0.08, 0.08);
      state_.objects[2] = make_box(x, y - 0.10, 0.60, 0.14, 0.08, 0.20);
      if (geom::occludes(cam_, state_.objects[2], state_.objects[1])) placed = true;
    }
    if (!placed) fail_run("po_pick_place reset: no occluded cube pose found");
    state_.objects[3] = make_box(0.24, -0.10, 0.51, 0.16, 0.16, 0.02);
  }

  if (occluder_id_ >= 0)
    state_.occluded_now =
        geom::occludes(cam_, state_.objects.at(occluder_id_), state_.objects.at(target_id_));
}

void Environment::sync_graph_full() {
  graph_ = kg::SceneGraph(10);
  const TaskSpec& task = cfg_.task;
  for (const auto& [id, box] : state_.objects) {
    int class_id = class_of_object(task, id);
    graph_.add_node(class_id, box, graspable_class(class_id), class_id == cls::kCabinet,
                    class_id == cls::kWall || class_id == cls::kCone);
  }
  graph_.full_rebuild(cam_);
}

Observation Environment::reset() {
  ++episodes_;
  build_scene(rng_);
  sync_graph_full();
  active_ = true;
  return observe();
}

geom::OrientedBox Environment::gripper_box() const {
  return make_box(state_.gripper.x(), state_.gripper.y(), state_.gripper.z(), 0.04, 0.04, 0.04);
}

namespace {

// Horizontal depenetration of a pushable box against the gripper point.
// Entry through the top (z is the shallowest axis) means the fingers
// straddle the object, so nothing moves.
void push_object(const geom::Vec3& gripper, geom::OrientedBox& box) {
  double hx = box.extents.x() / 2 + Environment::kPushInflate;
  double hy = box.extents.y() / 2 + Environment::kPushInflate;
  double hz = box.extents.z() / 2;
  geom::Vec3 d = gripper - box.center;
  if (std::abs(d.x()) >= hx || std::abs(d.y()) >= hy || std::abs(d.z()) >= hz) return;
  double px = hx - std::abs(d.x());
  double py = hy - std::abs(d.y());
  double pz = hz - std::abs(d.z());
  if (pz <= px && pz <= py) return;
  if (px <= py)
    box.center.x() += d.x() >= 0 ? -px : px;
  else
    box.center.y() += d.y() >= 0 ? -py : py;
}

}  // namespace

void Environment::apply_kinematics(const ActionCommand& a) {
  WorldState& s = state_;
  s.prev_gripper = s.gripper;
  const bool close_cmd = a.grip < 0.0;
  const TaskSpec& task = cfg_.task;

  bool holding_handle = s.grasped_id >= 0 && class_of_object(task, s.grasped_id) == cls::kHandle;
  if (holding_handle) {
    if (!close_cmd) {
      s.grasped_id = -1;
      s.open_frac = 1.0;
    } else {
      // The drawer rail constrains the hand: only the y component acts, and
      // the gripper follows the handle to keep the attachment rigid.
      double want_y = std::clamp(s.gripper.y() + a.delta[1] * kMaxStep, kWorkLo.y(), kWorkHi.y());
      double dy = want_y - s.gripper.y();
      s.drawer_frac = std::clamp(s.drawer_frac - dy / kPullRange, 0.0, 1.0);
      geom::OrientedBox& handle = s.objects.at(target_id_);
      handle.center.y() = handle_rest_y_ - s.drawer_frac * kPullRange;
      s.gripper = handle.center - s.grasp_offset;
      s.open_frac = 0.0;
      return;
    }
  }

  for (int i = 0; i < 3; ++i)
    s.gripper[i] = std::clamp(s.gripper[i] + a.delta[i] * kMaxStep, kWorkLo[i], kWorkHi[i]);

  if (close_cmd) {
    s.open_frac = 0.0;
    if (s.grasped_id < 0) {
      for (const auto& [id, box] : s.objects) {
        if (!graspable_class(class_of_object(task, id))) continue;
        if ((s.gripper - box.center).norm() <= kGraspRadius) {
          s.grasped_id = id;
          s.grasp_offset = box.center - s.gripper;
          break;
        }
      }
    }
  } else {
    s.open_frac = 1.0;
    if (s.grasped_id >= 0) {
      if (class_of_object(task, s.grasped_id) == cls::kCube) {
        geom::OrientedBox& cube = s.objects.at(s.grasped_id);
        bool on_peg = peg_id_ >= 0 && in_peg_zone(cube.center, s.objects.at(peg_id_));
        cube.center.z() = (on_peg ? kPegTop : kTableTop) + kCubeHalf;
      }
      s.grasped_id = -1;
    }
  }

  if (s.grasped_id >= 0 && class_of_object(task, s.grasped_id) == cls::kCube)
    s.objects.at(s.grasped_id).center = s.gripper + s.grasp_offset;

  for (auto& [id, box] : s.objects) {
    if (id == s.grasped_id || !pushable_class(class_of_object(task, id))) continue;
    push_object(s.gripper, box);
  }
}

void Environment::update_events_and_success() {
  WorldState& s = state_;
  const TaskSpec& task = cfg_.task;

  if (occluder_id_ >= 0) {
    bool occ = geom::occludes(cam_, s.objects.at(occluder_id_), s.objects.at(target_id_));
    if (s.occluded_now && !occ) s.events_paid[kEvOccluderCleared] = true;
    s.occluded_now = occ;
  }
  if (s.grasped_id == target_id_) s.events_paid[kEvGrasp] = true;
  if (peg_id_ >= 0 && in_peg_zone(s.objects.at(target_id_).center, s.objects.at(peg_id_)))
    s.events_paid[kEvInZone] = true;
  if (cabinet_id_ >= 0 && s.drawer_frac >= kDrawerTarget) s.events_paid[kEvDrawerOpen] = true;

  s.collision = s.gripper.z() < kTableTop ||
                (cabinet_id_ >= 0 && s.objects.at(cabinet_id_).contains(s.gripper));

  if (class_of_object(task, target_id_) == cls::kCube) {
    const geom::Vec3& c = s.objects.at(target_id_).center;
    if (std::abs(c.x()) > 0.6 || std::abs(c.y()) > 0.4) s.dropped = true;
  }
  s.success = success_of(s, task);
}

bool Environment::success_of(const WorldState& s, const TaskSpec& task) {
  if (task.name == "pick_cube" || task.name == "po_pick")
    return s.grasped_id == 1 && s.objects.at(1).center.z() >= kCubeRestZ + kLiftHeight;
  if (task.name == "open_cabinet") return s.drawer_frac >= kDrawerTarget;
  // pick_place / po_pick_place
  int peg = peg_id_of(task);
  const geom::OrientedBox& cube = s.objects.at(1);
  return s.grasped_id != 1 && in_peg_zone(cube.center, s.objects.at(peg)) &&
         cube.center.z() <= kPegTop + kCubeHalf + 1e-9;
}

double Environment::potential(const WorldState& s, const TaskSpec& task) {
  const geom::Vec3& g = s.gripper;
  int tid = target_id_of(task);
  bool grasped = s.grasped_id == tid;

  if (task.name == "open_cabinet") {
    if (!grasped) return -(g - s.objects.at(tid).center).norm();
    return 0.5 + 0.3 * s.drawer_frac;
  }

  double base = 0.0;
  if (task.partially_observable) {
    if (!s.events_paid[kEvOccluderCleared] && !grasped)
      return -(g - s.objects.at(occluder_id_of(task)).center).norm();
    base = 0.5;
  }
  if (!grasped) return base - (g - s.objects.at(tid).center).norm();
  if (task.name == "pick_cube" || task.name == "po_pick")
    return base + 0.5 - std::abs(g.z() - kLiftTargetZ);
  const geom::OrientedBox& peg = s.objects.at(peg_id_of(task));
  geom::Vec3 carry{peg.center.x(), peg.center.y(), kCarryZ};
  return base + 0.5 - (g - carry).norm();
}

double Environment::compute_reward(const WorldState& prev, const ActionCommand& a,
                                   const WorldState& next, const TaskSpec& task) {
  const RewardWeights& w = task.weights;
  double r = 0.0;
  if (next.success && !prev.success) r += w.alpha_succ;
  r += w.gamma_phi * (potential(next, task) - potential(prev, task));
  for (int k = 0; k < 4; ++k)
    if (next.events_paid[k] && !prev.events_paid[k]) r += w.beta[k];
  r -= w.lambda_a * a.squared_norm();
  r -= w.lambda_j * (next.gripper - prev.gripper).squaredNorm();
  if (next.collision) r -= w.lambda_c;
  r -= w.lambda_t;
  return r;
}

StepResult Environment::step(const ActionCommand& a) {
  check_arg(active_, "step on an inactive episode; call reset first");
  ActionCommand ac = a.clipped();
  WorldState prev = state_;

  apply_kinematics(ac);
  ++state_.step_idx;
  update_events_and_success();

  StepResult res;
  res.reward = compute_reward(prev, ac, state_, cfg_.task);
  res.success = state_.success;
  res.collision = state_.collision;
  for (int k = 0; k < 4; ++k)
    res.events[k] = state_.events_paid[k] && !prev.events_paid[k];

  graph_.observe_step(state_.objects, cam_);
  graph_.refresh(cam_);

  res.terminated =
      state_.success || state_.dropped || (cfg_.fatal_collision && state_.collision);
  res.truncated = !res.terminated && state_.step_idx >= horizon();
  active_ = !(res.terminated || res.truncated);
  res.obs = observe();
  return res;
}

std::vector<double> Environment::render_state(const WorldState& s, int skip_id) const {
  const int hw = cfg_.image_hw;
  std::array<double, 3> bg{0.05, 0.05, 0.08};
  std::vector<double> img(static_cast<std::size_t>(hw) * hw * 3);
  for (int p = 0; p < hw * hw; ++p)
    for (int ch = 0; ch < 3; ++ch) img[p * 3 + ch] = std::clamp(bg[ch] * light_, 0.0, 1.0);

  struct Drawable {
    double depth;
    int id;
    geom::ScreenRect rect;
    std::array<double, 3> color;
  };
  std::vector<Drawable> draw;
  auto add = [&](int id, const geom::OrientedBox& box, const std::array<double, 3>& color) {
    geom::ScreenRect rect = geom::project_box(cam_, box);
    if (!rect.valid) return;
    draw.push_back({(box.center - cam_.position).dot(cam_.forward), id, rect, color});
  };
  for (const auto& [id, box] : s.objects) {
    if (id == skip_id) continue;
    add(id, box, colors_.at(id));
  }
  add(1000, gripper_box(), gripper_color_);
  std::sort(draw.begin(), draw.end(), [](const Drawable& a, const Drawable& b) {
    return a.depth != b.depth ? a.depth > b.depth : a.id < b.id;
  });

  for (const Drawable& d : draw) {
    int c0 = std::max(0, static_cast<int>(std::ceil((d.rect.x0 + 1) / 2 * hw - 0.5)));
    int c1 = std::min(hw - 1, static_cast<int>(std::floor((d.rect.x1 + 1) / 2 * hw - 0.5)));
    int r0 = std::max(0, static_cast<int>(std::ceil((1 - d.rect.y1) / 2 * hw - 0.5)));
    int r1 = std::min(hw - 1, static_cast<int>(std::floor((1 - d.rect.y0) / 2 * hw - 0.5)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        for (int ch = 0; ch < 3; ++ch)
          img[(r * hw + c) * 3 + ch] = std::clamp(d.color[ch] * light_, 0.0, 1.0);
  }
  return img;
}

std::vector<double> Environment::render() const { return render_state(state_, -1); }

std::vector<double> Environment::render_without(int skip_id) const {
  return render_state(state_, skip_id);
}

Observation Environment::observe() {
  Observation o;
  o.image = render();
  const geom::Vec3& g = state_.gripper;
  for (int i = 0; i < 3; ++i)
    o.proprio[i] = (g[i] - kWorkLo[i]) / (kWorkHi[i] - kWorkLo[i]) * 2.0 - 1.0;
  o.proprio[3] = state_.open_frac * 2.0 - 1.0;
  for (int i = 0; i < 3; ++i)
    o.proprio[4 + i] = std::clamp((g[i] - state_.prev_gripper[i]) / kMaxStep, -1.0, 1.0);
  o.proprio[7] = state_.grasped_id >= 0 ? 1.0 : 0.0;
  o.task_id = cfg_.task.id;
  o.step = state_.step_idx;
  if (cfg_.use_graph) {
    o.has_graph = true;
    o.graph = graph_.export_features(cfg_.task.goal_class, cfg_.noise, &noise_rng_);
  }
  return o;
}

void Environment::teleport_object(int id, const geom::Vec3& center) {
  auto it = state_.objects.find(id);
  if (it == state_.objects.end()) fail_arg("teleport: no object with id " + std::to_string(id));
  it->second.center = center;
  if (occluder_id_ >= 0)
    state_.occluded_now =
        geom::occludes(cam_, state_.objects.at(occluder_id_), state_.objects.at(target_id_));
}

VectorEnv::VectorEnv(const std::vector<EnvConfig>& cfgs) {
  check_arg(!cfgs.empty(), "vector env needs at least one environment");
  envs_.reserve(cfgs.size());
  for (const EnvConfig& c : cfgs) envs_.emplace_back(c);
}

std::vector<Observation> VectorEnv::reset() {
  std::vector<Observation> obs;
  obs.reserve(envs_.size());
  for (Environment& e : envs_) obs.push_back(e.reset());
  return obs;
}

std::vector<StepResult> VectorEnv::step(const std::vector<ActionCommand>& actions) {
  check_arg(actions.size() == envs_.size(),
            "vector step: got " + std::to_string(actions.size()) + " actions for " +
                std::to_string(envs_.size()) + " environments");
  std::vector<StepResult> out;
  out.reserve(envs_.size());
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    StepResult r = envs_[i].step(actions[i]);
    if (r.terminated || r.truncated) r.obs = envs_[i].reset();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

ActionCommand move_toward(const geom::Vec3& cur, const geom::Vec3& target, double grip) {
  ActionCommand a;
  for (int i = 0; i < 3; ++i)
    a.delta[i] = std::clamp((target[i] - cur[i]) / Environment::kMaxStep, -1.0, 1.0);
  a.grip = grip;
  return a;
}

ActionCommand hold(double grip) {
  ActionCommand a;
  a.grip = grip;
  return a;
}

bool xy_aligned(const geom::Vec3& g, const geom::Vec3& t, double tol = 1e-6) {
  return std::abs(g.x() - t.x()) <= tol && std::abs(g.y() - t.y()) <= tol;
}

}  // namespace

ActionCommand expert_action(const TaskSpec& task, const WorldState& s) {
  const geom::Vec3& g = s.gripper;
  int tid = target_id_of(task);
  bool grasped = s.grasped_id == tid;

  if (task.name == "open_cabinet") {
    const geom::OrientedBox& handle = s.object(tid);
    if (grasped) {
      ActionCommand a = hold(-1.0);
      a.delta[1] = -1.0;
      return a;
    }
    if ((g - handle.center).norm() <= 0.025) return hold(-1.0);
    if (xy_aligned(g, handle.center)) return move_toward(g, handle.center, 1.0);
    return move_toward(g, {handle.center.x(), handle.center.y(), 0.68}, 1.0);
  }

  const geom::OrientedBox& cube = s.object(tid);

  if (task.partially_observable && !s.events_paid[kEvOccluderCleared] && !grasped) {
    const geom::OrientedBox& occ = s.object(occluder_id_of(task));
    double dir = task.name == "po_pick_place" ? -1.0 : (cube.center.x() >= 0 ? -1.0 : 1.0);
    double push_z = occ.center.z();
    double side_x =
        occ.center.x() - dir * (occ.extents.x() / 2 + Environment::kPushInflate + 0.02);
    if (g.z() <= push_z + 1e-6 && std::abs(g.y() - occ.center.y()) <= 0.02) {
      ActionCommand a = hold(1.0);
      a.delta[0] = dir;
      return a;
    }
    geom::Vec3 side{side_x, occ.center.y(), push_z};
    if (xy_aligned(g, side)) return move_toward(g, side, 1.0);
    double high_z = occ.center.z() + occ.extents.z() / 2 + 0.04;
    return move_toward(g, {side_x, occ.center.y(), high_z}, 1.0);
  }

  if (!grasped) {
    if ((g - cube.center).norm() <= 0.025) return hold(-1.0);
    if (xy_aligned(g, cube.center)) return move_toward(g, cube.center, 1.0);
    return move_toward(g, {cube.center.x(), cube.center.y(), kTravelZ}, 1.0);
  }

  if (task.name == "pick_cube" || task.name == "po_pick") {
    ActionCommand a = hold(-1.0);
    a.delta[2] = 1.0;
    return a;
  }

  const geom::OrientedBox& peg = s.object(peg_id_of(task));
  geom::Vec3 carry{peg.center.x(), peg.center.y(), kCarryZ};
  if (xy_aligned(g, carry)) return hold(1.0);
  if (g.z() < kCarryZ - 1e-6) return move_toward(g, {g.x(), g.y(), kCarryZ}, -1.0);
  return move_toward(g, carry, -1.0);
}

ActionCommand random_action(Rng& rng) {
  ActionCommand a;
  for (int i = 0; i < 3; ++i) a.delta[i] = rng.uniform(-1.0, 1.0);
  a.grip = rng.uniform(-1.0, 1.0);
  return a;
}

}  // namespace sgrl::env
