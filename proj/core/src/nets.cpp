#include "sgrl/nets.hpp"

#include <array>
#include <cmath>

#include "sgrl/rng.hpp"

namespace sgrl::nn {

void Hyper::validate() const {
  check_arg(image_hw > 0 && enc_hidden > 0 && d_i > 0 && num_classes > 0 && class_emb > 0 &&
                gnn_hidden > 0 && rounds > 0 && d_k > 0 && num_tasks > 0 && d_t > 0 &&
                proprio_dim > 0 && action_dim > 0 && head_hidden > 0,
            "hyper: all dimensions must be positive");
  check_arg(gnn_hidden == d_k, "hyper: gnn hidden width must equal d_k");
}

std::map<std::string, std::string> Hyper::to_meta() const {
  std::map<std::string, std::string> m;
  auto put = [&](const char* k, int v) { m[std::string("arch.") + k] = std::to_string(v); };
  put("image_hw", image_hw);
  put("enc_hidden", enc_hidden);
  put("d_i", d_i);
  put("num_classes", num_classes);
  put("class_emb", class_emb);
  put("gnn_hidden", gnn_hidden);
  put("rounds", rounds);
  put("d_k", d_k);
  put("num_tasks", num_tasks);
  put("d_t", d_t);
  put("proprio_dim", proprio_dim);
  put("action_dim", action_dim);
  put("head_hidden", head_hidden);
  m["arch.regime"] = use_graph ? "camera+kg" : "camera";
  return m;
}

Hyper Hyper::from_meta(const std::map<std::string, std::string>& meta) {
  Hyper hp;
  auto get = [&](const char* k, int& out) {
    auto it = meta.find(std::string("arch.") + k);
    if (it == meta.end()) fail_run("checkpoint: missing architecture key arch." + std::string(k));
    out = std::stoi(it->second);
  };
  get("image_hw", hp.image_hw);
  get("enc_hidden", hp.enc_hidden);
  get("d_i", hp.d_i);
  get("num_classes", hp.num_classes);
  get("class_emb", hp.class_emb);
  get("gnn_hidden", hp.gnn_hidden);
  get("rounds", hp.rounds);
  get("d_k", hp.d_k);
  get("num_tasks", hp.num_tasks);
  get("d_t", hp.d_t);
  get("proprio_dim", hp.proprio_dim);
  get("action_dim", hp.action_dim);
  get("head_hidden", hp.head_hidden);
  auto it = meta.find("arch.regime");
  if (it == meta.end()) fail_run("checkpoint: missing architecture key arch.regime");
  hp.use_graph = it->second == "camera+kg";
  hp.validate();
  return hp;
}

namespace {

const char* rel_weight_name(int type) {
  static const char* names[] = {"gnn.w_rel0", "gnn.w_rel1", "gnn.w_rel2",
                                "gnn.w_rel3", "gnn.w_rel4", "gnn.w_rel5"};
  return names[type];
}

ad::Tensor xavier(Rng& rng, int rows, int cols) {
  double bound = std::sqrt(6.0 / (rows + cols));
  ad::Tensor t(rows, cols);
  for (auto& v : t.v) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

EncoderSet EncoderSet::init(const Hyper& hp, std::uint64_t seed) {
  hp.validate();
  EncoderSet enc;
  enc.hp = hp;

  // Declare shapes first, then fill weights in name order so the draw
  // sequence is independent of insertion order.
  std::map<std::string, std::pair<int, int>> shapes;
  auto weight = [&](const std::string& n, int r, int c) { shapes[n] = {r, c}; };
  auto bias = [&](const std::string& n, int c) { shapes[n] = {1, -c}; };  // negative: zero fill

  weight("enc.w1", hp.image_dim(), hp.enc_hidden);
  bias("enc.b1", hp.enc_hidden);
  weight("enc.w2", hp.enc_hidden, hp.d_i);
  bias("enc.b2", hp.d_i);
  weight("fuse.w_i", hp.d_i, hp.d_i);
  bias("fuse.b_i", hp.d_i);
  weight("fuse.w_t", hp.d_t, hp.d_t);
  bias("fuse.b_t", hp.d_t);
  weight("task.table", hp.num_tasks, hp.d_t);
  weight("pi.w1", hp.d_s(), hp.head_hidden);
  bias("pi.b1", hp.head_hidden);
  weight("pi.w2", hp.head_hidden, 2 * hp.action_dim);
  bias("pi.b2", 2 * hp.action_dim);
  weight("v.w1", hp.d_s(), hp.head_hidden);
  bias("v.b1", hp.head_hidden);
  weight("v.w2", hp.head_hidden, 1);
  bias("v.b2", 1);
  if (hp.use_graph) {
    weight("gnn.emb", hp.num_classes, hp.class_emb);
    weight("gnn.w_in", hp.node_feat_dim(), hp.gnn_hidden);
    bias("gnn.b_in", hp.gnn_hidden);
    weight("gnn.w_self", hp.gnn_hidden, hp.gnn_hidden);
    for (int r = 0; r < 6; ++r) weight(rel_weight_name(r), hp.gnn_hidden, hp.gnn_hidden);
    bias("gnn.b_round", hp.gnn_hidden);
    weight("gnn.w_out", 2 * hp.gnn_hidden, hp.d_k);
    bias("gnn.b_out", hp.d_k);
    weight("fuse.w_k", hp.d_k, hp.d_k);
    bias("fuse.b_k", hp.d_k);
  }

  Rng rng(derive_seed(seed, stream::kParamInit));
  for (const auto& [name, shape] : shapes) {
    if (shape.second < 0)
      enc.params[name] = ad::Tensor::zeros(shape.first, -shape.second);
    else
      enc.params[name] = xavier(rng, shape.first, shape.second);
  }
  return enc;
}

ckpt::Bundle EncoderSet::to_bundle(std::map<std::string, std::string> extra_meta) const {
  ckpt::Bundle b;
  b.meta = hp.to_meta();
  for (auto& [k, v] : extra_meta) b.meta[k] = v;
  for (const auto& [name, t] : params) b.tensors.emplace_back(name, t);
  return b;
}

EncoderSet EncoderSet::from_bundle(const ckpt::Bundle& bundle) {
  EncoderSet enc;
  enc.hp = Hyper::from_meta(bundle.meta);
  for (const auto& [name, t] : bundle.tensors) enc.params[name] = t;

  EncoderSet ref = EncoderSet::init(enc.hp, 0);
  for (const auto& [name, t] : ref.params) {
    auto it = enc.params.find(name);
    if (it == enc.params.end()) fail_run("checkpoint: missing parameter " + name);
    if (it->second.rows != t.rows || it->second.cols != t.cols)
      fail_run("checkpoint: parameter " + name + " has shape " + it->second.shape_str() +
               ", expected " + t.shape_str());
  }
  for (const auto& [name, t] : enc.params)
    if (!ref.params.count(name)) fail_run("checkpoint: unexpected parameter " + name);
  return enc;
}

const ad::Tensor& BoundParams::operator[](const std::string& name) const {
  auto it = t.find(name);
  if (it == t.end())
    fail_arg("params: '" + name + "' not present in this regime's parameter set");
  return it->second;
}

BoundParams bind(ad::Tape& tape, const EncoderSet& enc) {
  BoundParams bp;
  bp.hp = &enc.hp;
  for (const auto& [name, value] : enc.params) bp.t.emplace(name, tape.input(value));
  return bp;
}

ad::Tensor encode_image(ad::Tape& tape, const BoundParams& p, const ad::Tensor& images) {
  const Hyper& hp = *p.hp;
  check_arg(images.cols == hp.image_dim(),
            "encode_image: expected width " + std::to_string(hp.image_dim()) + ", got " +
                images.shape_str());
  for (double v : images.v)
    check_arg(v >= 0.0 && v <= 1.0, "encode_image: pixel values must lie in [0,1]");
  ad::Tensor h = tape.tanh(tape.add(tape.matmul(images, p["enc.w1"]), p["enc.b1"]));
  return tape.add(tape.matmul(h, p["enc.w2"]), p["enc.b2"]);
}

ad::Tensor encode_graph(ad::Tape& tape, const BoundParams& p, const GraphFeatures& g) {
  const Hyper& hp = *p.hp;
  check_arg(hp.use_graph, "encode_graph: camera-only regime has no graph encoder");
  int n = static_cast<int>(g.nodes.size());
  check_arg(n >= 1, "encode_graph: empty graph");

  ad::Tensor sel(n, hp.num_classes);
  ad::Tensor feats(n, 10);
  for (int i = 0; i < n; ++i) {
    const GraphFeatures::Node& node = g.nodes[i];
    check_arg(node.class_id >= 0 && node.class_id < hp.num_classes,
              "encode_graph: class id out of range");
    sel.at(i, node.class_id) = 1.0;
    for (int k = 0; k < 3; ++k) feats.at(i, k) = node.center[k];
    for (int k = 0; k < 3; ++k) feats.at(i, 3 + k) = node.extents[k];
    for (int k = 0; k < 4; ++k) feats.at(i, 6 + k) = node.flags[k];
  }

  // Incoming-edge adjacency per relation type: adj[dst][src] = 1.
  std::array<ad::Tensor, 6> adj;
  std::array<bool, 6> has_type{};
  for (const GraphFeatures::Edge& e : g.edges) {
    check_arg(e.src >= 0 && e.src < n && e.dst >= 0 && e.dst < n && e.type >= 0 && e.type < 6,
              "encode_graph: edge index out of range");
    if (!has_type[e.type]) {
      adj[e.type] = ad::Tensor::zeros(n, n);
      has_type[e.type] = true;
    }
    adj[e.type].at(e.dst, e.src) = 1.0;
  }

  ad::Tensor emb_rows = tape.matmul(tape.constant(sel), p["gnn.emb"]);
  std::array<ad::Tensor, 2> in_parts{emb_rows, tape.constant(feats)};
  ad::Tensor x = tape.concat_cols(in_parts);
  ad::Tensor h = tape.add(tape.matmul(x, p["gnn.w_in"]), p["gnn.b_in"]);

  for (int round = 0; round < hp.rounds; ++round) {
    ad::Tensor m = tape.matmul(h, p["gnn.w_self"]);
    for (int type = 0; type < 6; ++type) {
      if (!has_type[type]) continue;
      ad::Tensor msg = tape.matmul(tape.constant(adj[type]), tape.matmul(h, p[rel_weight_name(type)]));
      m = tape.add(m, msg);
    }
    h = tape.tanh(tape.add(m, p["gnn.b_round"]));
  }

  check_arg(g.goal_index < n, "encode_graph: goal index out of range");
  ad::Tensor pool = tape.matmul(tape.constant(ad::Tensor::full(1, n, 1.0 / n)), h);
  ad::Tensor goal = g.goal_index >= 0
                        ? tape.slice_rows(h, g.goal_index, g.goal_index + 1)
                        : tape.constant(ad::Tensor::zeros(1, hp.gnn_hidden));
  std::array<ad::Tensor, 2> ro{pool, goal};
  ad::Tensor readout = tape.concat_cols(ro);
  return tape.add(tape.matmul(readout, p["gnn.w_out"]), p["gnn.b_out"]);
}

ad::Tensor encode_graph_batch(ad::Tape& tape, const BoundParams& p,
                              std::span<const GraphFeatures* const> graphs) {
  check_arg(!graphs.empty(), "encode_graph_batch: no graphs");
  std::vector<ad::Tensor> rows;
  rows.reserve(graphs.size());
  for (const GraphFeatures* g : graphs) {
    check_arg(g != nullptr, "encode_graph_batch: null graph");
    rows.push_back(encode_graph(tape, p, *g));
  }
  return rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
}

ad::Tensor fuse(ad::Tape& tape, const BoundParams& p, const ad::Tensor& z_img,
                const ad::Tensor* q, const ad::Tensor& u_task, const ad::Tensor& proprio) {
  const Hyper& hp = *p.hp;
  check_arg(z_img.cols == hp.d_i, "fuse: image embedding width mismatch");
  check_arg(u_task.cols == hp.d_t, "fuse: task embedding width mismatch");
  check_arg(proprio.cols == hp.proprio_dim, "fuse: proprio width mismatch");
  check_arg(z_img.rows == u_task.rows && z_img.rows == proprio.rows, "fuse: batch mismatch");

  ad::Tensor zi = tape.add(tape.matmul(z_img, p["fuse.w_i"]), p["fuse.b_i"]);
  ad::Tensor zk;
  if (q != nullptr) {
    check_arg(hp.use_graph, "fuse: graph embedding supplied in camera-only regime");
    check_arg(q->cols == hp.d_k && q->rows == z_img.rows, "fuse: graph embedding shape mismatch");
    zk = tape.add(tape.matmul(*q, p["fuse.w_k"]), p["fuse.b_k"]);
  } else {
    zk = tape.constant(ad::Tensor::zeros(z_img.rows, hp.d_k));
  }
  ad::Tensor zt = tape.add(tape.matmul(u_task, p["fuse.w_t"]), p["fuse.b_t"]);
  std::array<ad::Tensor, 4> parts{zi, zk, zt, proprio};
  return tape.concat_cols(parts);
}

PolicyOut policy_value(ad::Tape& tape, const BoundParams& p, const ad::Tensor& s) {
  const Hyper& hp = *p.hp;
  check_arg(s.cols == hp.d_s(), "policy_value: fused state width mismatch");
  int a = hp.action_dim;

  ad::Tensor ph = tape.tanh(tape.add(tape.matmul(s, p["pi.w1"]), p["pi.b1"]));
  ad::Tensor raw = tape.add(tape.matmul(ph, p["pi.w2"]), p["pi.b2"]);
  PolicyOut out;
  out.mu = tape.tanh(tape.slice_cols(raw, 0, a));
  out.log_sigma =
      tape.clamp(tape.add(tape.slice_cols(raw, a, 2 * a),
                          tape.constant(ad::Tensor::full(1, a, kLogSigmaInit))),
                 kLogSigmaMin, kLogSigmaMax);

  ad::Tensor vh = tape.tanh(tape.add(tape.matmul(s, p["v.w1"]), p["v.b1"]));
  out.value = tape.add(tape.matmul(vh, p["v.w2"]), p["v.b2"]);
  return out;
}

PolicyOut forward_policy(ad::Tape& tape, const BoundParams& p, const ObsBatch& batch) {
  const Hyper& hp = *p.hp;
  int b = batch.batch();
  check_arg(static_cast<int>(batch.task_ids.size()) == b, "forward: task id count mismatch");
  check_arg(batch.proprio.rows == b, "forward: proprio batch mismatch");
  if (hp.use_graph)
    check_arg(static_cast<int>(batch.graphs.size()) == b, "forward: graph count mismatch");
  else
    check_arg(batch.graphs.empty(), "forward: graphs supplied in camera-only regime");

  ad::Tensor z = encode_image(tape, p, batch.images);

  ad::Tensor onehot(b, hp.num_tasks);
  for (int i = 0; i < b; ++i) {
    int id = batch.task_ids[i];
    check_arg(id >= 0 && id < hp.num_tasks, "forward: task id out of range");
    onehot.at(i, id) = 1.0;
  }
  ad::Tensor u = tape.matmul(tape.constant(onehot), p["task.table"]);

  ad::Tensor s;
  if (hp.use_graph) {
    ad::Tensor q = encode_graph_batch(tape, p, batch.graphs);
    s = fuse(tape, p, z, &q, u, batch.proprio);
  } else {
    s = fuse(tape, p, z, nullptr, u, batch.proprio);
  }
  return policy_value(tape, p, s);
}

}  // namespace sgrl::nn
