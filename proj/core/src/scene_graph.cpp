#include "sgrl/scene_graph.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace sgrl::kg {

NoiseParams NoiseParams::low() { return {0.02, 0.05, 5.0 * M_PI / 180.0}; }
NoiseParams NoiseParams::high() { return {0.05, 0.10, 5.0 * M_PI / 180.0}; }

NoiseParams NoiseParams::named(const std::string& level) {
  if (level == "clean") return clean();
  if (level == "low") return low();
  if (level == "high") return high();
  // Custom triple "sigma_c:sigma_e:sigma_r_deg", e.g. "0.05:0:0".
  double c = 0.0, e = 0.0, r = 0.0;
  char tail = '\0';
  if (std::sscanf(level.c_str(), "%lf:%lf:%lf%c", &c, &e, &r, &tail) == 3 && c >= 0.0 &&
      e >= 0.0 && r >= 0.0) {
    return {c, e, r * M_PI / 180.0};
  }
  fail_arg("noise: unknown level '" + level +
           "' (expected clean|low|high or sigma_c:sigma_e:sigma_r_deg)");
}

SceneGraph::SceneGraph(int refresh_period) : period_(refresh_period) {
  check_arg(refresh_period >= 1, "scene graph: refresh period must be >= 1");
}

int SceneGraph::add_node(int class_id, const geom::OrientedBox& box, bool graspable,
                         bool container, bool occluder) {
  box.validate();
  GraphNode n;
  n.id = next_id_++;
  n.class_id = class_id;
  n.box = box;
  n.graspable = graspable;
  n.container = container;
  n.occluder = occluder;
  n.last_updated = step_;
  nodes_.push_back(n);
  return n.id;
}

void SceneGraph::clear_nodes() {
  nodes_.clear();
  edges_.clear();
  dirty_.clear();
  step_ = 0;
  next_id_ = 0;
}

int SceneGraph::index_of(int id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return static_cast<int>(i);
  fail_arg("scene graph: unknown node id " + std::to_string(id));
}

const GraphNode& SceneGraph::node(int id) const { return nodes_[index_of(id)]; }
GraphNode& SceneGraph::node_mut(int id) { return nodes_[index_of(id)]; }

void SceneGraph::observe_step(const std::map<int, geom::OrientedBox>& truth,
                              const geom::CameraFrame& cam) {
  (void)cam;
  for (const auto& [id, box] : truth) {
    GraphNode& n = node_mut(id);
    double moved = (box.center - n.box.center).norm();
    Eigen::AngleAxisd delta(box.rotation * n.box.rotation.transpose());
    if (moved > kMoveThreshold || std::abs(delta.angle()) > kRotateThreshold) {
      n.box = box;
      n.last_updated = step_ + 1;
      dirty_.insert(id);
    }
  }
  ++step_;
}

void SceneGraph::insert_pair_edges(int src, int dst, const geom::CameraFrame& cam,
                                   int* inserted) {
  geom::RelationSet rels =
      geom::relation_between(node(src).box, node(dst).box, cam);
  for (int r = 0; r < geom::kNumRelations; ++r) {
    geom::Relation rel = static_cast<geom::Relation>(r);
    if (rels.has(rel)) {
      edges_.insert(GraphEdge{src, dst, rel});
      if (inserted) ++*inserted;
    }
  }
}

void SceneGraph::recompute_node_edges(int id, const geom::CameraFrame& cam, int* inserted) {
  for (auto it = edges_.begin(); it != edges_.end();) {
    if (it->src == id || it->dst == id) {
      it = edges_.erase(it);
      if (inserted) ++*inserted;
    } else {
      ++it;
    }
  }
  for (const GraphNode& other : nodes_) {
    if (other.id == id) continue;
    insert_pair_edges(id, other.id, cam, inserted);
    insert_pair_edges(other.id, id, cam, inserted);
  }
}

int SceneGraph::refresh(const geom::CameraFrame& cam) {
  if (step_ % period_ != 0 || dirty_.empty()) return 0;
  int inserted = 0;
  for (int id : dirty_) recompute_node_edges(id, cam, &inserted);
  dirty_.clear();
  return inserted;
}

void SceneGraph::full_rebuild(const geom::CameraFrame& cam) {
  edges_.clear();
  dirty_.clear();
  for (const GraphNode& a : nodes_)
    for (const GraphNode& b : nodes_) {
      if (a.id == b.id) continue;
      insert_pair_edges(a.id, b.id, cam, nullptr);
    }
}

SceneGraph SceneGraph::apply_noise(double sigma_c_frac, double sigma_e_frac, double sigma_r_rad,
                                   Rng& rng) const {
  check_arg(sigma_c_frac >= 0.0 && sigma_e_frac >= 0.0 && sigma_r_rad >= 0.0,
            "apply_noise: fractions must be >= 0");
  SceneGraph out = *this;
  for (GraphNode& n : out.nodes_) {
    double mean_e = n.box.mean_extent();
    if (sigma_c_frac > 0.0) {
      double sc = sigma_c_frac * mean_e;
      for (int i = 0; i < 3; ++i) n.box.center[i] += rng.normal(0.0, sc);
    }
    if (sigma_e_frac > 0.0) {
      for (int i = 0; i < 3; ++i) {
        double eps = rng.normal(0.0, sigma_e_frac);
        n.box.extents[i] = std::max(n.box.extents[i] * (1.0 + eps), 0.001);
      }
    }
    if (sigma_r_rad > 0.0) {
      double z = rng.uniform(-1.0, 1.0);
      double phi = rng.uniform(0.0, 2.0 * M_PI);
      double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      geom::Vec3 axis(s * std::cos(phi), s * std::sin(phi), z);
      double angle = std::abs(rng.normal(0.0, sigma_r_rad));
      n.box.rotation = geom::axis_angle(axis, angle) * n.box.rotation;
    }
  }
  return out;
}

int SceneGraph::query_goal(int goal_class) const {
  for (const GraphNode& n : nodes_)  // nodes are sorted by id: first hit is lowest
    if (n.class_id == goal_class) return n.id;
  fail_arg("query_goal: no node of class " + std::to_string(goal_class));
}

nn::GraphFeatures SceneGraph::export_features(int goal_class, const NoiseParams& noise,
                                              Rng* rng) const {
  check_arg(!nodes_.empty(), "export_features: empty graph");
  const SceneGraph* src = this;
  SceneGraph noisy(period_);
  if (!noise.zero()) {
    check_arg(rng != nullptr, "export_features: noise configured but no rng supplied");
    noisy = apply_noise(noise.sigma_c_frac, noise.sigma_e_frac, noise.sigma_r_rad, *rng);
    src = &noisy;
  }

  int goal_id = goal_class >= 0 ? query_goal(goal_class) : -1;
  nn::GraphFeatures out;
  std::map<int, int> row_of;
  for (const GraphNode& n : src->nodes_) {
    nn::GraphFeatures::Node row;
    row.class_id = n.class_id;
    for (int i = 0; i < 3; ++i) row.center[i] = n.box.center[i];
    for (int i = 0; i < 3; ++i) row.extents[i] = n.box.extents[i];
    row.flags = {n.graspable ? 1.0 : 0.0, n.container ? 1.0 : 0.0, n.occluder ? 1.0 : 0.0,
                 n.id == goal_id ? 1.0 : 0.0};
    row_of[n.id] = static_cast<int>(out.nodes.size());
    if (n.id == goal_id) out.goal_index = static_cast<int>(out.nodes.size());
    out.nodes.push_back(row);
  }
  for (const GraphEdge& e : src->edges_)
    out.edges.push_back({row_of.at(e.src), row_of.at(e.dst), static_cast<int>(e.type)});
  return out;
}

bool SceneGraph::has_edge(int src, int dst, geom::Relation type) const {
  return edges_.count(GraphEdge{src, dst, type}) > 0;
}

std::string SceneGraph::dump(const std::map<int, std::string>& class_names) const {
  auto name = [&](int class_id) {
    auto it = class_names.find(class_id);
    return it == class_names.end() ? "class" + std::to_string(class_id) : it->second;
  };
  std::ostringstream os;
  char buf[160];
  for (const GraphNode& n : nodes_) {
    std::snprintf(buf, sizeof(buf), "node %d %s %.6f %.6f %.6f %.6f %.6f %.6f", n.id,
                  name(n.class_id).c_str(), n.box.center.x(), n.box.center.y(), n.box.center.z(),
                  n.box.extents.x(), n.box.extents.y(), n.box.extents.z());
    os << buf << "\n";
  }
  for (const GraphEdge& e : edges_) {
    os << "edge " << name(node(e.src).class_id) << " " << geom::relation_name(e.type) << " "
       << name(node(e.dst).class_id) << "\n";
  }
  return os.str();
}

}  // namespace sgrl::kg
