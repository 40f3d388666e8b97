#include <doctest.h>

#include <cmath>

#include "sgrl/scene_graph.hpp"

using namespace sgrl;
using namespace sgrl::kg;
using geom::CameraFrame;
using geom::OrientedBox;
using geom::Relation;
using geom::Vec3;

namespace {

OrientedBox box_at(const Vec3& c, const Vec3& e) {
  OrientedBox b;
  b.center = c;
  b.extents = e;
  return b;
}

CameraFrame test_cam() { return CameraFrame::look_at({0, -0.55, 0.75}, {0, 0, 0.55}, 1.0); }

const std::map<int, std::string> kNames = {{0, "table"}, {1, "cube"}, {2, "wall"}};

// table + cube resting on it + a wall between camera and cube
SceneGraph make_scene(std::map<int, OrientedBox>* truth) {
  SceneGraph g(10);
  OrientedBox table = box_at({0, 0, 0.25}, {0.8, 0.8, 0.5});
  OrientedBox cube = box_at({0, 0.15, 0.55}, {0.1, 0.1, 0.1});
  OrientedBox wall = box_at({0, -0.1, 0.61}, {0.3, 0.04, 0.22});
  int t = g.add_node(0, table);
  int c = g.add_node(1, cube, true);
  int w = g.add_node(2, wall, false, false, true);
  if (truth) (*truth) = {{t, table}, {c, cube}, {w, wall}};
  g.full_rebuild(test_cam());
  return g;
}

bool same_edges(const SceneGraph& a, const SceneGraph& b) { return a.edges() == b.edges(); }

}  // namespace

TEST_CASE("full rebuild captures resting contact and dump lists it") {
  SceneGraph g = make_scene(nullptr);
  CHECK(g.has_edge(1, 0, Relation::On));
  CHECK(g.has_edge(0, 1, Relation::Under));
  CHECK(g.has_edge(2, 0, Relation::On));  // wall also stands on the table

  std::string dump = g.dump(kNames);
  CHECK(dump.find("node 0 table") != std::string::npos);
  CHECK(dump.find("cube On table") != std::string::npos);
  CHECK(dump.find("table Under cube") != std::string::npos);
  // nodes listed before edges
  CHECK(dump.rfind("node ") < dump.find("edge "));
}

TEST_CASE("sub-threshold motion is ignored, larger motion marks dirty") {
  std::map<int, OrientedBox> truth;
  SceneGraph g = make_scene(&truth);
  CameraFrame cam = test_cam();

  truth[1].center += Vec3(0.003, 0, 0);  // below 0.005 m
  g.observe_step(truth, cam);
  CHECK(g.dirty().empty());
  CHECK(g.node(1).box.center.x() == 0.0);  // stored box untouched

  truth[1].center += Vec3(0.1, 0, 0);
  g.observe_step(truth, cam);
  CHECK(g.dirty() == std::set<int>{1});
  CHECK(g.node(1).box.center.x() == doctest::Approx(truth[1].center.x()));
}

TEST_CASE("edges stay stale until the n-th step refresh") {
  std::map<int, OrientedBox> truth;
  SceneGraph g = make_scene(&truth);
  CameraFrame cam = test_cam();

  // cube teleports far away at step 7; On(cube, table) is now
  // geometrically false but must persist until the step-10 refresh
  for (int step = 1; step <= 12; ++step) {
    if (step == 7) truth[1].center = Vec3(5, 5, 5);
    g.observe_step(truth, cam);
    int recomputed = g.refresh(cam);
    if (step < 10) {
      CHECK(g.has_edge(1, 0, Relation::On));
      CHECK(recomputed == 0);
    }
    if (step == 10) {
      CHECK(recomputed > 0);
      CHECK(!g.has_edge(1, 0, Relation::On));
      CHECK(g.dirty().empty());
    }
  }
}

TEST_CASE("refresh at a tick with nothing dirty recomputes nothing") {
  std::map<int, OrientedBox> truth;
  SceneGraph g = make_scene(&truth);
  CameraFrame cam = test_cam();
  for (int step = 1; step <= 10; ++step) g.observe_step(truth, cam);
  CHECK(g.step() == 10);
  CHECK(g.refresh(cam) == 0);
}

TEST_CASE("refresh equals full rebuild on random episodes") {
  CameraFrame cam = test_cam();
  Rng rng(404);
  for (int episode = 0; episode < 25; ++episode) {
    SceneGraph g(10);
    std::map<int, OrientedBox> truth;
    int n = 3 + static_cast<int>(rng.uniform_int(0, 3));
    for (int i = 0; i < n; ++i) {
      OrientedBox b = box_at({rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                              rng.uniform(0.5, 0.8)},
                             {rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3),
                              rng.uniform(0.05, 0.3)});
      truth[g.add_node(i == 0 ? 0 : 1, b)] = b;
    }
    g.full_rebuild(cam);

    for (int step = 1; step <= 40; ++step) {
      for (auto& [id, b] : truth) {
        if (rng.uniform() < 0.3) {
          double mag = rng.uniform(0.0, 0.05);  // straddles the 0.005 threshold
          Vec3 dir(rng.normal(), rng.normal(), rng.normal());
          if (dir.norm() > 1e-9) b.center += dir.normalized() * mag;
        }
      }
      g.observe_step(truth, cam);
      g.refresh(cam);
      if (step % 10 == 0) {
        SceneGraph oracle = g;
        oracle.full_rebuild(cam);
        CHECK(same_edges(g, oracle));
        CHECK(g.dirty().empty());
        CHECK(static_cast<int>(g.edges().size()) <= 6 * n * (n - 1));
      }
    }
  }
}

TEST_CASE("unknown object id in the truth map is rejected") {
  std::map<int, OrientedBox> truth;
  SceneGraph g = make_scene(&truth);
  truth[99] = box_at({0, 0, 1}, {0.1, 0.1, 0.1});
  CHECK_THROWS_AS(g.observe_step(truth, test_cam()), sgrl::InvalidArgument);
}

TEST_CASE("noise presets and identity") {
  CHECK(NoiseParams::low().sigma_c_frac == 0.02);
  CHECK(NoiseParams::low().sigma_e_frac == 0.05);
  CHECK(NoiseParams::low().sigma_r_rad == doctest::Approx(5.0 * M_PI / 180.0));
  CHECK(NoiseParams::high().sigma_c_frac == 0.05);
  CHECK(NoiseParams::high().sigma_e_frac == 0.10);
  CHECK(NoiseParams::high().sigma_r_rad == doctest::Approx(5.0 * M_PI / 180.0));
  CHECK_THROWS_AS(NoiseParams::named("loud"), sgrl::InvalidArgument);

  SceneGraph g = make_scene(nullptr);
  Rng rng(5);
  SceneGraph zero = g.apply_noise(0, 0, 0, rng);
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    CHECK(zero.nodes()[i].box.center == g.nodes()[i].box.center);
    CHECK(zero.nodes()[i].box.extents == g.nodes()[i].box.extents);
    CHECK(zero.nodes()[i].box.rotation == g.nodes()[i].box.rotation);
  }
}

TEST_CASE("noise perturbs a copy deterministically and never the source") {
  SceneGraph g = make_scene(nullptr);
  Vec3 before = g.node(1).box.center;

  Rng rng_a(77), rng_b(77);
  NoiseParams lo = NoiseParams::low();
  SceneGraph na = g.apply_noise(lo.sigma_c_frac, lo.sigma_e_frac, lo.sigma_r_rad, rng_a);
  SceneGraph nb = g.apply_noise(lo.sigma_c_frac, lo.sigma_e_frac, lo.sigma_r_rad, rng_b);

  CHECK(g.node(1).box.center == before);                    // source untouched
  CHECK(na.node(1).box.center != g.node(1).box.center);     // copy moved
  CHECK(na.node(1).box.center == nb.node(1).box.center);    // same stream, same draw
  CHECK(na.node(1).box.extents == nb.node(1).box.extents);

  // extreme multiplicative noise cannot push extents below the floor
  Rng rng_c(78);
  SceneGraph nc = g.apply_noise(0, 50.0, 0, rng_c);
  for (const auto& n : nc.nodes()) CHECK(n.box.extents.minCoeff() >= 0.001);

  CHECK_THROWS_AS(g.apply_noise(-0.1, 0, 0, rng_c), sgrl::InvalidArgument);
}

TEST_CASE("goal queries break ties by lowest id") {
  SceneGraph g(10);
  g.add_node(0, box_at({0, 0, 0.25}, {0.8, 0.8, 0.5}));
  int cube_a = g.add_node(1, box_at({0.2, 0, 0.55}, {0.1, 0.1, 0.1}), true);
  g.add_node(1, box_at({-0.2, 0, 0.55}, {0.1, 0.1, 0.1}), true);
  g.full_rebuild(test_cam());

  CHECK(g.query_goal(1) == cube_a);
  CHECK_THROWS_AS((void)g.query_goal(7), sgrl::InvalidArgument);

  nn::GraphFeatures f = g.export_features(1, NoiseParams::clean(), nullptr);
  REQUIRE(f.nodes.size() == 3);
  CHECK(f.goal_index == 1);
  int goals = 0;
  for (const auto& n : f.nodes) goals += n.flags[3] == 1.0 ? 1 : 0;
  CHECK(goals == 1);

  nn::GraphFeatures nofgoal = g.export_features(-1, NoiseParams::clean(), nullptr);
  CHECK(nofgoal.goal_index == -1);
  for (const auto& n : nofgoal.nodes) CHECK(n.flags[3] == 0.0);
}

TEST_CASE("export of a single-node graph and edge index remapping") {
  SceneGraph solo(10);
  solo.add_node(0, box_at({0, 0, 0.25}, {0.8, 0.8, 0.5}));
  solo.full_rebuild(test_cam());
  nn::GraphFeatures f = solo.export_features(-1, NoiseParams::clean(), nullptr);
  CHECK(f.nodes.size() == 1);
  CHECK(f.edges.empty());

  SceneGraph g = make_scene(nullptr);
  nn::GraphFeatures gf = g.export_features(1, NoiseParams::clean(), nullptr);
  for (const auto& e : gf.edges) {
    CHECK(e.src >= 0);
    CHECK(e.src < static_cast<int>(gf.nodes.size()));
    CHECK(e.dst >= 0);
    CHECK(e.dst < static_cast<int>(gf.nodes.size()));
    CHECK(e.src != e.dst);
    CHECK(e.type >= 0);
    CHECK(e.type < geom::kNumRelations);
  }
  CHECK_THROWS_AS((void)SceneGraph(10).export_features(-1, NoiseParams::clean(), nullptr),
                  sgrl::InvalidArgument);
}

TEST_CASE("noisy export resamples per call and keeps true boxes intact") {
  SceneGraph g = make_scene(nullptr);
  Rng rng(91);
  nn::GraphFeatures a = g.export_features(1, NoiseParams::low(), &rng);
  nn::GraphFeatures b = g.export_features(1, NoiseParams::low(), &rng);
  CHECK(a.nodes[1].center != b.nodes[1].center);  // i.i.d. per export
  CHECK(g.node(1).box.center == Vec3(0, 0.15, 0.55));
  CHECK_THROWS_AS((void)g.export_features(1, NoiseParams::low(), nullptr),
                  sgrl::InvalidArgument);
}
