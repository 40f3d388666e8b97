#pragma once

#include <array>
#include <vector>

namespace sgrl::nn {

// Numeric view of a scene graph, ready for the graph encoder. Nodes are
// ordered by graph node id; edges index into that order. Class embeddings
// stay learnable, so nodes carry class ids rather than embedding rows.
struct GraphFeatures {
  struct Node {
    int class_id = 0;
    std::array<double, 3> center{};
    std::array<double, 3> extents{};
    // graspable, container, occluder, is-goal
    std::array<double, 4> flags{};
  };
  struct Edge {
    int src = 0;
    int dst = 0;
    int type = 0;
  };

  std::vector<Node> nodes;
  std::vector<Edge> edges;
  int goal_index = -1;  // -1 when the task defines no target
};

}  // namespace sgrl::nn
