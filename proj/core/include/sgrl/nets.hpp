#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgrl/autodiff.hpp"
#include "sgrl/checkpoint.hpp"
#include "sgrl/graph_features.hpp"

namespace sgrl::nn {

// Architecture hyperparameters; serialized with every checkpoint so files
// are self-describing.
struct Hyper {
  int image_hw = 16;
  int enc_hidden = 64;
  int d_i = 32;
  int num_classes = 7;
  int class_emb = 16;
  int gnn_hidden = 32;
  int rounds = 2;
  int d_k = 32;
  int num_tasks = 5;
  int d_t = 8;
  int proprio_dim = 8;
  int action_dim = 4;
  int head_hidden = 64;
  bool use_graph = true;

  int image_dim() const { return image_hw * image_hw * 3; }
  int node_feat_dim() const { return class_emb + 3 + 3 + 4; }
  int d_s() const { return d_i + d_k + d_t + proprio_dim; }
  void validate() const;

  std::map<std::string, std::string> to_meta() const;
  static Hyper from_meta(const std::map<std::string, std::string>& meta);
};

constexpr double kLogSigmaMin = -5.0;
constexpr double kLogSigmaMax = 2.0;
// Fixed offset on the log-sigma head so a zero-bias network starts with
// exploration noise on the order of the per-step action range instead of a
// saturated random walk.
constexpr double kLogSigmaInit = -2.0;

using ParamMap = std::map<std::string, ad::Tensor>;

// All learnable tensors. The graph-encoder group (names starting "gnn.")
// exists only when use_graph is set; in the camera-only regime those
// parameters are absent rather than frozen.
struct EncoderSet {
  Hyper hp;
  ParamMap params;

  static EncoderSet init(const Hyper& hp, std::uint64_t seed);

  ckpt::Bundle to_bundle(std::map<std::string, std::string> extra_meta = {}) const;
  static EncoderSet from_bundle(const ckpt::Bundle& bundle);

  static bool is_phi(const std::string& name) { return name.rfind("gnn.", 0) == 0; }
};

// Parameters bound to a live tape for one forward/backward pass.
struct BoundParams {
  const Hyper* hp = nullptr;
  std::map<std::string, ad::Tensor> t;

  const ad::Tensor& operator[](const std::string& name) const;
};

BoundParams bind(ad::Tape& tape, const EncoderSet& enc);

// images: [B, image_dim], values in [0,1] -> [B, d_i]
ad::Tensor encode_image(ad::Tape& tape, const BoundParams& p, const ad::Tensor& images);

// one graph -> [1, d_k]
ad::Tensor encode_graph(ad::Tape& tape, const BoundParams& p, const GraphFeatures& g);

// B graphs -> [B, d_k], row i identical to encode_graph(graphs[i])
ad::Tensor encode_graph_batch(ad::Tape& tape, const BoundParams& p,
                              std::span<const GraphFeatures* const> graphs);

// s = [W_I z || W_K q || W_T u || prop]; pass q = nullptr in the camera-only
// regime and the q block is a zero constant of width d_k.
ad::Tensor fuse(ad::Tape& tape, const BoundParams& p, const ad::Tensor& z_img,
                const ad::Tensor* q, const ad::Tensor& u_task, const ad::Tensor& proprio);

struct PolicyOut {
  ad::Tensor mu;         // [B, A], tanh-squashed
  ad::Tensor log_sigma;  // [B, A], clamped to [kLogSigmaMin, kLogSigmaMax]
  ad::Tensor value;      // [B, 1]
};

PolicyOut policy_value(ad::Tape& tape, const BoundParams& p, const ad::Tensor& s);

// One minibatch of observations in tensor form.
struct ObsBatch {
  ad::Tensor images;                        // [B, image_dim]
  std::vector<const GraphFeatures*> graphs; // size B in KG regime, else empty
  ad::Tensor proprio;                       // [B, proprio_dim]
  std::vector<int> task_ids;                // size B

  int batch() const { return images.rows; }
};

PolicyOut forward_policy(ad::Tape& tape, const BoundParams& p, const ObsBatch& batch);

}  // namespace sgrl::nn
