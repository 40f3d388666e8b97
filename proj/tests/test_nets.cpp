#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "sgrl/checkpoint.hpp"
#include "sgrl/nets.hpp"
#include "sgrl/rng.hpp"

using sgrl::InvalidArgument;
using sgrl::Rng;
using sgrl::RuntimeFault;
using sgrl::ad::Tape;
using sgrl::ad::Tensor;
namespace nn = sgrl::nn;

namespace {

Tensor rnd(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

Tensor rnd_image(Rng& rng, const nn::Hyper& hp, int batch = 1) {
  return rnd(rng, batch, hp.image_dim(), 0.0, 1.0);
}

nn::GraphFeatures small_graph() {
  nn::GraphFeatures g;
  g.nodes.resize(3);
  g.nodes[0] = {0, {0.0, 0.0, 0.25}, {0.8, 0.6, 0.5}, {0, 0, 0, 0}};
  g.nodes[1] = {1, {0.1, 0.0, 0.55}, {0.1, 0.1, 0.1}, {1, 0, 0, 1}};
  g.nodes[2] = {2, {0.0, 0.2, 0.75}, {0.5, 0.04, 0.5}, {0, 0, 1, 0}};
  g.edges = {{1, 0, 0}, {0, 1, 1}, {1, 2, 3}, {2, 1, 2}, {1, 2, 4}};
  g.goal_index = 1;
  return g;
}

double frob(const Tensor& t) {
  double s = 0.0;
  for (double v : t.v) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace

TEST_CASE("hyper defaults give d_s 80 and meta round trips") {
  nn::Hyper hp;
  CHECK(hp.image_dim() == 16 * 16 * 3);
  CHECK(hp.node_feat_dim() == 26);
  CHECK(hp.d_s() == 80);

  auto meta = hp.to_meta();
  CHECK(meta.at("arch.regime") == "camera+kg");
  nn::Hyper back = nn::Hyper::from_meta(meta);
  CHECK(back.d_s() == hp.d_s());
  CHECK(back.use_graph == hp.use_graph);

  hp.use_graph = false;
  CHECK(nn::Hyper::from_meta(hp.to_meta()).use_graph == false);

  meta.erase("arch.d_k");
  CHECK_THROWS_AS(nn::Hyper::from_meta(meta), RuntimeFault);

  nn::Hyper bad;
  bad.d_k = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = nn::Hyper{};
  bad.gnn_hidden = 16;  // must equal d_k
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("init is deterministic and respects the regime's parameter set") {
  nn::Hyper hp;
  nn::EncoderSet a = nn::EncoderSet::init(hp, 7);
  nn::EncoderSet b = nn::EncoderSet::init(hp, 7);
  nn::EncoderSet c = nn::EncoderSet::init(hp, 8);

  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) CHECK(max_abs_diff(t, b.params.at(name)) == 0.0);
  CHECK(max_abs_diff(a.params.at("enc.w1"), c.params.at("enc.w1")) > 0.0);

  CHECK(a.params.count("gnn.emb") == 1);
  CHECK(a.params.count("gnn.w_rel5") == 1);
  CHECK(a.params.count("fuse.w_k") == 1);
  CHECK(nn::EncoderSet::is_phi("gnn.w_self"));
  CHECK(!nn::EncoderSet::is_phi("fuse.w_k"));

  // Weights stay inside the +/- sqrt(6/(fan_in+fan_out)) bound; biases are zero.
  for (const auto& [name, t] : a.params) {
    if (name.find(".b") != std::string::npos) {
      for (double v : t.v) CHECK(v == 0.0);
    } else {
      double bound = std::sqrt(6.0 / (t.rows + t.cols));
      double mx = 0.0;
      for (double v : t.v) mx = std::max(mx, std::abs(v));
      CHECK(mx <= bound);
      CHECK(mx > 0.0);
    }
  }

  hp.use_graph = false;
  nn::EncoderSet cam = nn::EncoderSet::init(hp, 7);
  for (const auto& [name, t] : cam.params) {
    CHECK(!nn::EncoderSet::is_phi(name));
    CHECK(name != "fuse.w_k");
    CHECK(name != "fuse.b_k");
  }
  CHECK(cam.params.count("enc.w1") == 1);
  CHECK(cam.params.size() < a.params.size());
}

TEST_CASE("encoder checkpoints round trip exactly") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 42);
  auto path = std::filesystem::temp_directory_path() / "sgrl_nets_ckpt.txt";
  sgrl::ckpt::save(path, enc.to_bundle({{"step", "123"}}));

  sgrl::ckpt::Bundle bundle = sgrl::ckpt::load(path);
  CHECK(bundle.meta.at("step") == "123");
  nn::EncoderSet back = nn::EncoderSet::from_bundle(bundle);
  CHECK(back.hp.d_s() == hp.d_s());
  REQUIRE(back.params.size() == enc.params.size());
  for (const auto& [name, t] : enc.params) CHECK(max_abs_diff(t, back.params.at(name)) == 0.0);

  SUBCASE("missing parameter is rejected") {
    sgrl::ckpt::Bundle broken = bundle;
    broken.tensors.erase(broken.tensors.begin());
    CHECK_THROWS_AS(nn::EncoderSet::from_bundle(broken), RuntimeFault);
  }
  SUBCASE("wrong shape is rejected") {
    sgrl::ckpt::Bundle broken = bundle;
    broken.tensors[0].second = Tensor::zeros(2, 2);
    CHECK_THROWS_AS(nn::EncoderSet::from_bundle(broken), RuntimeFault);
  }
  SUBCASE("unexpected parameter is rejected") {
    sgrl::ckpt::Bundle broken = bundle;
    broken.tensors.emplace_back("stray", Tensor::zeros(1, 1));
    CHECK_THROWS_AS(nn::EncoderSet::from_bundle(broken), RuntimeFault);
  }
  std::filesystem::remove(path);
}

TEST_CASE("image encoder: bias path, sensitivity, and validation") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 3);
  Rng rng(11);

  SUBCASE("all-zero image hits the (zero) bias path exactly") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor z = nn::encode_image(tape, p, Tensor::zeros(1, hp.image_dim()));
    REQUIRE(z.rows == 1);
    REQUIRE(z.cols == hp.d_i);
    for (double v : z.v) CHECK(v == 0.0);
  }

  SUBCASE("distinct images give distinct embeddings") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor i1 = rnd_image(rng, hp);
    Tensor i2 = i1;
    for (int k = 0; k < 40; ++k) i2.v[k] = 1.0 - i2.v[k];
    Tensor z1 = nn::encode_image(tape, p, i1);
    Tensor z2 = nn::encode_image(tape, p, i2);
    CHECK(max_abs_diff(z1, z2) > 1e-8);
  }

  SUBCASE("single-pixel perturbation is bounded by the weight norms") {
    Tensor img = rnd_image(rng, hp);
    Tensor bumped = img;
    const double eps = 1e-4;
    bumped.v[123] = std::min(1.0, bumped.v[123] + eps);
    double actual_eps = bumped.v[123] - img.v[123];
    REQUIRE(actual_eps > 0.0);

    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor z1 = nn::encode_image(tape, p, img);
    Tensor z2 = nn::encode_image(tape, p, bumped);
    double dz = 0.0;
    for (std::size_t i = 0; i < z1.v.size(); ++i) {
      double d = z2.v[i] - z1.v[i];
      dz += d * d;
    }
    dz = std::sqrt(dz);
    double lipschitz = frob(enc.params.at("enc.w1")) * frob(enc.params.at("enc.w2"));
    CHECK(dz <= lipschitz * actual_eps * (1.0 + 1e-9));
    CHECK(dz > 0.0);
  }

  SUBCASE("shape and range violations are rejected") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    CHECK_THROWS_AS(nn::encode_image(tape, p, Tensor::zeros(1, 100)), InvalidArgument);
    Tensor img = Tensor::zeros(1, hp.image_dim());
    img.v[0] = 1.5;
    CHECK_THROWS_AS(nn::encode_image(tape, p, img), InvalidArgument);
    img.v[0] = -0.1;
    CHECK_THROWS_AS(nn::encode_image(tape, p, img), InvalidArgument);
  }
}

TEST_CASE("graph encoder: shape, invariance, and message sensitivity") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 5);

  SUBCASE("single node, no edges") {
    nn::GraphFeatures g;
    g.nodes.push_back({0, {0, 0, 0.25}, {0.8, 0.6, 0.5}, {0, 0, 0, 0}});
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor q = nn::encode_graph(tape, p, g);
    REQUIRE(q.rows == 1);
    REQUIRE(q.cols == hp.d_k);
    for (double v : q.v) CHECK(std::isfinite(v));
  }

  SUBCASE("permuting nodes leaves the embedding unchanged to 1e-9") {
    nn::GraphFeatures g = small_graph();
    std::vector<int> perm = {2, 0, 1};  // new index of old node i
    nn::GraphFeatures pg;
    pg.nodes.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) pg.nodes[perm[i]] = g.nodes[i];
    for (const auto& e : g.edges) pg.edges.push_back({perm[e.src], perm[e.dst], e.type});
    pg.goal_index = perm[g.goal_index];

    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor q1 = nn::encode_graph(tape, p, g);
    Tensor q2 = nn::encode_graph(tape, p, pg);
    CHECK(max_abs_diff(q1, q2) <= 1e-9);
  }

  SUBCASE("deleting the goal node's incoming edges changes the embedding") {
    nn::GraphFeatures g = small_graph();
    nn::GraphFeatures cut = g;
    cut.edges.clear();
    for (const auto& e : g.edges)
      if (e.dst != g.goal_index) cut.edges.push_back(e);
    REQUIRE(cut.edges.size() < g.edges.size());

    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor q1 = nn::encode_graph(tape, p, g);
    Tensor q2 = nn::encode_graph(tape, p, cut);
    CHECK(max_abs_diff(q1, q2) > 1e-8);
  }

  SUBCASE("goal-free graphs use a zero goal slot and still differ from goal-set ones") {
    nn::GraphFeatures g = small_graph();
    nn::GraphFeatures nogoal = g;
    nogoal.goal_index = -1;
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor q1 = nn::encode_graph(tape, p, g);
    Tensor q2 = nn::encode_graph(tape, p, nogoal);
    CHECK(max_abs_diff(q1, q2) > 1e-8);
  }

  SUBCASE("batched encoding matches per-graph encoding row by row") {
    nn::GraphFeatures g1 = small_graph();
    nn::GraphFeatures g2 = small_graph();
    g2.nodes[1].center = {0.4, -0.2, 0.55};
    g2.edges.pop_back();
    nn::GraphFeatures g3;
    g3.nodes.push_back({0, {0, 0, 0.25}, {0.8, 0.6, 0.5}, {0, 0, 0, 0}});

    Tape tape;
    auto p = nn::bind(tape, enc);
    std::vector<const nn::GraphFeatures*> graphs = {&g1, &g2, &g3};
    Tensor batch = nn::encode_graph_batch(tape, p, graphs);
    REQUIRE(batch.rows == 3);
    const nn::GraphFeatures* singles[] = {&g1, &g2, &g3};
    for (int i = 0; i < 3; ++i) {
      Tensor qi = nn::encode_graph(tape, p, *singles[i]);
      for (int c = 0; c < hp.d_k; ++c) CHECK(batch.at(i, c) == qi.at(0, c));
    }
  }

  SUBCASE("invalid graphs are rejected") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    nn::GraphFeatures empty;
    CHECK_THROWS_AS(nn::encode_graph(tape, p, empty), InvalidArgument);

    nn::GraphFeatures bad_class = small_graph();
    bad_class.nodes[0].class_id = hp.num_classes;
    CHECK_THROWS_AS(nn::encode_graph(tape, p, bad_class), InvalidArgument);

    nn::GraphFeatures bad_edge = small_graph();
    bad_edge.edges.push_back({0, 3, 0});
    CHECK_THROWS_AS(nn::encode_graph(tape, p, bad_edge), InvalidArgument);

    nn::GraphFeatures bad_type = small_graph();
    bad_type.edges.push_back({0, 1, 6});
    CHECK_THROWS_AS(nn::encode_graph(tape, p, bad_type), InvalidArgument);

    nn::GraphFeatures bad_goal = small_graph();
    bad_goal.goal_index = 3;
    CHECK_THROWS_AS(nn::encode_graph(tape, p, bad_goal), InvalidArgument);
  }

  SUBCASE("camera-only regime refuses graph work") {
    nn::Hyper cam_hp;
    cam_hp.use_graph = false;
    nn::EncoderSet cam = nn::EncoderSet::init(cam_hp, 5);
    Tape tape;
    auto p = nn::bind(tape, cam);
    nn::GraphFeatures g = small_graph();
    CHECK_THROWS_AS(nn::encode_graph(tape, p, g), InvalidArgument);
    CHECK_THROWS_AS(p["gnn.emb"], InvalidArgument);
  }
}

TEST_CASE("fusion concatenates projected blocks in fixed order") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 9);
  Rng rng(21);

  SUBCASE("all-zero inputs with zero biases give s = 0") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor z = tape.constant(Tensor::zeros(2, hp.d_i));
    Tensor q = tape.constant(Tensor::zeros(2, hp.d_k));
    Tensor u = tape.constant(Tensor::zeros(2, hp.d_t));
    Tensor prop = tape.constant(Tensor::zeros(2, hp.proprio_dim));
    Tensor s = nn::fuse(tape, p, z, &q, u, prop);
    REQUIRE(s.rows == 2);
    REQUIRE(s.cols == hp.d_s());
    for (double v : s.v) CHECK(v == 0.0);
  }

  SUBCASE("camera-only fuse zeroes exactly the q block") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor z = tape.constant(rnd(rng, 1, hp.d_i));
    Tensor u = tape.constant(rnd(rng, 1, hp.d_t));
    Tensor prop = tape.constant(rnd(rng, 1, hp.proprio_dim));
    Tensor s = nn::fuse(tape, p, z, nullptr, u, prop);
    for (int c = hp.d_i; c < hp.d_i + hp.d_k; ++c) CHECK(s.at(0, c) == 0.0);
    double outside = 0.0;
    for (int c = 0; c < hp.d_i; ++c) outside += std::abs(s.at(0, c));
    CHECK(outside > 0.0);
    // proprio rides along unprojected
    for (int k = 0; k < hp.proprio_dim; ++k)
      CHECK(s.at(0, hp.d_i + hp.d_k + hp.d_t + k) == prop.at(0, k));
  }

  SUBCASE("dimension mismatches are rejected") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor z = tape.constant(rnd(rng, 1, hp.d_i));
    Tensor u = tape.constant(rnd(rng, 1, hp.d_t));
    Tensor prop = tape.constant(rnd(rng, 1, hp.proprio_dim));
    Tensor bad_q = tape.constant(rnd(rng, 1, hp.d_k + 1));
    CHECK_THROWS_AS(nn::fuse(tape, p, z, &bad_q, u, prop), InvalidArgument);
    Tensor bad_u = tape.constant(rnd(rng, 1, hp.d_t + 1));
    CHECK_THROWS_AS(nn::fuse(tape, p, z, nullptr, bad_u, prop), InvalidArgument);
    Tensor row2 = tape.constant(rnd(rng, 2, hp.proprio_dim));
    CHECK_THROWS_AS(nn::fuse(tape, p, z, nullptr, u, row2), InvalidArgument);
  }

  SUBCASE("camera-only parameter set rejects a supplied q") {
    nn::Hyper cam_hp;
    cam_hp.use_graph = false;
    nn::EncoderSet cam = nn::EncoderSet::init(cam_hp, 9);
    Tape tape;
    auto p = nn::bind(tape, cam);
    Tensor z = tape.constant(rnd(rng, 1, hp.d_i));
    Tensor q = tape.constant(rnd(rng, 1, hp.d_k));
    Tensor u = tape.constant(rnd(rng, 1, hp.d_t));
    Tensor prop = tape.constant(rnd(rng, 1, hp.proprio_dim));
    CHECK_THROWS_AS(nn::fuse(tape, p, z, &q, u, prop), InvalidArgument);
    Tensor s = nn::fuse(tape, p, z, nullptr, u, prop);
    CHECK(s.cols == hp.d_s());
  }
}

TEST_CASE("policy and value heads: ranges, purity, finiteness") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 13);
  Rng rng(31);

  SUBCASE("mu in [-1,1], log_sigma clamped, value finite over 1000 random states") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    Tensor s = tape.constant(rnd(rng, 1000, hp.d_s(), -5.0, 5.0));
    nn::PolicyOut out = nn::policy_value(tape, p, s);
    REQUIRE(out.mu.rows == 1000);
    REQUIRE(out.mu.cols == hp.action_dim);
    REQUIRE(out.log_sigma.cols == hp.action_dim);
    REQUIRE(out.value.cols == 1);
    for (double v : out.mu.v) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    for (double v : out.log_sigma.v) {
      CHECK(v >= nn::kLogSigmaMin);
      CHECK(v <= nn::kLogSigmaMax);
    }
    for (double v : out.value.v) CHECK(std::isfinite(v));
  }

  SUBCASE("identical state on fresh tapes gives identical outputs") {
    Tensor s_val = rnd(rng, 4, hp.d_s());
    Tensor mu1, mu2, v1, v2;
    {
      Tape tape;
      auto p = nn::bind(tape, enc);
      nn::PolicyOut out = nn::policy_value(tape, p, tape.constant(s_val));
      mu1 = out.mu;
      v1 = out.value;
    }
    {
      Tape tape;
      auto p = nn::bind(tape, enc);
      nn::PolicyOut out = nn::policy_value(tape, p, tape.constant(s_val));
      mu2 = out.mu;
      v2 = out.value;
    }
    CHECK(max_abs_diff(mu1, mu2) == 0.0);
    CHECK(max_abs_diff(v1, v2) == 0.0);
  }

  SUBCASE("log_sigma clamp binds at both rails") {
    nn::EncoderSet pushed = enc;
    Tensor& b2 = pushed.params.at("pi.b2");
    b2.at(0, hp.action_dim) = 100.0;
    b2.at(0, hp.action_dim + 1) = -100.0;
    Tape tape;
    auto p = nn::bind(tape, pushed);
    nn::PolicyOut out = nn::policy_value(tape, p, tape.constant(rnd(rng, 1, hp.d_s())));
    CHECK(out.log_sigma.at(0, 0) == nn::kLogSigmaMax);
    CHECK(out.log_sigma.at(0, 1) == nn::kLogSigmaMin);
  }

  SUBCASE("wrong state width is rejected") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    CHECK_THROWS_AS(nn::policy_value(tape, p, tape.constant(Tensor::zeros(1, hp.d_s() + 1))),
                    InvalidArgument);
  }
}

TEST_CASE("full forward pass wires the regimes correctly") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 17);
  Rng rng(41);

  nn::GraphFeatures g1 = small_graph();
  nn::GraphFeatures g2 = small_graph();
  g2.nodes[1].center = {0.3, 0.1, 0.55};

  nn::ObsBatch batch;
  batch.images = rnd_image(rng, hp, 2);
  batch.graphs = {&g1, &g2};
  batch.proprio = rnd(rng, 2, hp.proprio_dim);
  batch.task_ids = {0, 3};

  SUBCASE("KG regime forward is deterministic and well shaped") {
    Tensor mu1, ls1, v1;
    {
      Tape tape;
      auto p = nn::bind(tape, enc);
      nn::PolicyOut out = nn::forward_policy(tape, p, batch);
      mu1 = out.mu;
      ls1 = out.log_sigma;
      v1 = out.value;
    }
    REQUIRE(mu1.rows == 2);
    REQUIRE(mu1.cols == hp.action_dim);
    REQUIRE(v1.rows == 2);
    for (double v : mu1.v) CHECK(std::isfinite(v));

    Tape tape;
    auto p = nn::bind(tape, enc);
    nn::PolicyOut out = nn::forward_policy(tape, p, batch);
    CHECK(max_abs_diff(mu1, out.mu) == 0.0);
    CHECK(max_abs_diff(ls1, out.log_sigma) == 0.0);
    CHECK(max_abs_diff(v1, out.value) == 0.0);
  }

  SUBCASE("different task ids change the policy output") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    nn::ObsBatch other = batch;
    other.task_ids = {0, 4};
    nn::PolicyOut a = nn::forward_policy(tape, p, batch);
    nn::PolicyOut b = nn::forward_policy(tape, p, other);
    double row0 = 0.0, row1 = 0.0;
    for (int c = 0; c < hp.action_dim; ++c) {
      row0 += std::abs(a.mu.at(0, c) - b.mu.at(0, c));
      row1 += std::abs(a.mu.at(1, c) - b.mu.at(1, c));
    }
    CHECK(row0 == 0.0);  // unchanged task id
    CHECK(row1 > 1e-10);
  }

  SUBCASE("camera-only regime runs without graphs and rejects them") {
    nn::Hyper cam_hp;
    cam_hp.use_graph = false;
    nn::EncoderSet cam = nn::EncoderSet::init(cam_hp, 17);
    nn::ObsBatch cam_batch = batch;
    cam_batch.graphs.clear();

    Tape tape;
    auto p = nn::bind(tape, cam);
    nn::PolicyOut out = nn::forward_policy(tape, p, cam_batch);
    CHECK(out.mu.rows == 2);
    CHECK_THROWS_AS(nn::forward_policy(tape, p, batch), InvalidArgument);
  }

  SUBCASE("KG regime requires one graph per row") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    nn::ObsBatch missing = batch;
    missing.graphs = {&g1};
    CHECK_THROWS_AS(nn::forward_policy(tape, p, missing), InvalidArgument);
  }

  SUBCASE("task id out of range is rejected") {
    Tape tape;
    auto p = nn::bind(tape, enc);
    nn::ObsBatch bad = batch;
    bad.task_ids = {0, hp.num_tasks};
    CHECK_THROWS_AS(nn::forward_policy(tape, p, bad), InvalidArgument);
  }
}

TEST_CASE("gradients reach every parameter group") {
  nn::Hyper hp;
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 23);
  Rng rng(51);

  nn::GraphFeatures g = small_graph();
  nn::ObsBatch batch;
  batch.images = rnd_image(rng, hp, 2);
  batch.graphs = {&g, &g};
  batch.proprio = rnd(rng, 2, hp.proprio_dim);
  batch.task_ids = {1, 2};

  Tape tape;
  auto p = nn::bind(tape, enc);
  nn::PolicyOut out = nn::forward_policy(tape, p, batch);
  Tensor loss =
      tape.add(tape.sum(out.mu), tape.add(tape.sum(out.value), tape.sum(out.log_sigma)));
  tape.backward(loss);

  for (const char* name : {"enc.w1", "gnn.emb", "gnn.w_rel0", "gnn.w_self", "gnn.w_out",
                           "fuse.w_k", "fuse.w_i", "task.table", "pi.w2", "v.w2"}) {
    Tensor grad = tape.grad(p[name]);
    double total = 0.0;
    for (double v : grad.v) total += std::abs(v);
    INFO(name);
    CHECK(total > 0.0);
  }
  // relation type 5 (Inside) is absent from the graph, so its weights sit idle
  Tensor idle = tape.grad(p["gnn.w_rel5"]);
  for (double v : idle.v) CHECK(v == 0.0);
}

TEST_CASE("finite differences validate the graph-to-loss gradient") {
  nn::Hyper hp;
  hp.image_hw = 4;  // keep the FD loop cheap
  nn::EncoderSet enc = nn::EncoderSet::init(hp, 29);
  Rng rng(61);

  nn::GraphFeatures g = small_graph();
  nn::ObsBatch batch;
  batch.images = rnd_image(rng, hp, 1);
  batch.graphs = {&g};
  batch.proprio = rnd(rng, 1, hp.proprio_dim);
  batch.task_ids = {2};

  Tensor wmu = rnd(rng, 1, hp.action_dim);
  Tensor wls = rnd(rng, 1, hp.action_dim);

  auto loss_value = [&](const nn::EncoderSet& e) {
    Tape tape;
    auto p = nn::bind(tape, e);
    nn::PolicyOut out = nn::forward_policy(tape, p, batch);
    Tensor loss = tape.add(tape.sum(tape.mul(out.mu, tape.constant(wmu))),
                           tape.add(tape.sum(tape.mul(out.log_sigma, tape.constant(wls))),
                                    tape.sum(out.value)));
    return loss.scalar();
  };

  Tape tape;
  auto p = nn::bind(tape, enc);
  nn::PolicyOut out = nn::forward_policy(tape, p, batch);
  Tensor loss = tape.add(tape.sum(tape.mul(out.mu, tape.constant(wmu))),
                         tape.add(tape.sum(tape.mul(out.log_sigma, tape.constant(wls))),
                                  tape.sum(out.value)));
  tape.backward(loss);

  const double h = 1e-5;
  for (const char* name : {"gnn.emb", "gnn.w_rel3", "gnn.w_self", "gnn.w_out", "gnn.w_in",
                           "fuse.w_k", "enc.w2", "task.table"}) {
    Tensor grad = tape.grad(p[name]);
    Tensor& param = enc.params.at(name);
    Rng pick(std::hash<std::string>{}(name));
    for (int probe = 0; probe < 6; ++probe) {
      int k = static_cast<int>(pick.uniform_int(0, static_cast<int>(param.v.size()) - 1));
      double orig = param.v[k];
      param.v[k] = orig + h;
      double up = loss_value(enc);
      param.v[k] = orig - h;
      double dn = loss_value(enc);
      param.v[k] = orig;
      double fd = (up - dn) / (2 * h);
      INFO(name << "[" << k << "]");
      CHECK(std::abs(fd - grad.v[k]) / std::max(1.0, std::abs(fd)) <= 1e-6);
    }
  }
}
