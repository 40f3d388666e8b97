#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgrl/geometry.hpp"
#include "sgrl/graph_features.hpp"
#include "sgrl/rng.hpp"

namespace sgrl::kg {

// Perception noise levels; fractions scale with per-node mean extent.
struct NoiseParams {
  double sigma_c_frac = 0.0;  // center, fraction of mean extent
  double sigma_e_frac = 0.0;  // multiplicative extent noise
  double sigma_r_rad = 0.0;   // rotation perturbation magnitude

  bool zero() const { return sigma_c_frac == 0.0 && sigma_e_frac == 0.0 && sigma_r_rad == 0.0; }
  static NoiseParams clean() { return {}; }
  static NoiseParams low();   // 2% / 5% / 5 deg
  static NoiseParams high();  // 5% / 10% / 5 deg
  static NoiseParams named(const std::string& level);
};

struct GraphNode {
  int id = 0;
  int class_id = 0;
  geom::OrientedBox box;
  bool graspable = false;
  bool container = false;
  bool occluder = false;
  int last_updated = 0;
};

struct GraphEdge {
  int src = 0;
  int dst = 0;
  geom::Relation type = geom::Relation::On;
  auto operator<=>(const GraphEdge&) const = default;
};

// Persistent relational store over the simulator's objects. Boxes are
// updated every step from ground truth, but edges are only recomputed for
// moved (dirty) nodes at every n-th step, plus full rebuilds at reset.
class SceneGraph {
 public:
  explicit SceneGraph(int refresh_period = 10);

  int add_node(int class_id, const geom::OrientedBox& box, bool graspable = false,
               bool container = false, bool occluder = false);
  void clear_nodes();

  void observe_step(const std::map<int, geom::OrientedBox>& truth, const geom::CameraFrame& cam);
  // Acts only at every refresh-period-th step with a nonempty dirty set;
  // returns the number of edge deletions plus insertions performed.
  int refresh(const geom::CameraFrame& cam);
  void full_rebuild(const geom::CameraFrame& cam);

  SceneGraph apply_noise(double sigma_c_frac, double sigma_e_frac, double sigma_r_rad,
                         Rng& rng) const;
  int query_goal(int goal_class) const;
  nn::GraphFeatures export_features(int goal_class, const NoiseParams& noise, Rng* rng) const;

  bool has_edge(int src, int dst, geom::Relation type) const;
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::set<GraphEdge>& edges() const { return edges_; }
  const std::set<int>& dirty() const { return dirty_; }
  int step() const { return step_; }
  int refresh_period() const { return period_; }
  const GraphNode& node(int id) const;
  GraphNode& node_mut(int id);

  // Line-oriented debug dump: nodes by id, then edges with class names.
  std::string dump(const std::map<int, std::string>& class_names) const;

 private:
  void recompute_node_edges(int id, const geom::CameraFrame& cam, int* inserted);
  void insert_pair_edges(int src, int dst, const geom::CameraFrame& cam, int* inserted);
  int index_of(int id) const;

  std::vector<GraphNode> nodes_;  // sorted by id
  std::set<GraphEdge> edges_;
  std::set<int> dirty_;
  int step_ = 0;
  int period_ = 10;
  int next_id_ = 0;
};

constexpr double kMoveThreshold = 0.005;                   // meters
constexpr double kRotateThreshold = 0.017453292519943295;  // 1 degree

}  // namespace sgrl::kg
