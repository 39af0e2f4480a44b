#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "geomoe/data.hpp"
#include "geomoe/experts.hpp"
#include "geomoe/rng.hpp"
#include "geomoe/routing.hpp"
#include "geomoe/tensor.hpp"

namespace geomoe {

struct ModelConfig {
  int d_model = 64;   // unified feature width (768 in the full configuration)
  int d_e = 32;       // expert width (128 full)
  int targets = kNumTargets;
  int pre_layers = 2;      // pre-fusion encoder depth
  int pre_heads = 4;       // pre-fusion attention heads
  int temporal_heads = 4;  // heads of the temporal self-attention stage
  int expert_layers = 2;
  double dropout = 0.1;
  int attn_tokens = 8;  // intra-manifold attention tokens (must divide d_e)
  int attn_heads = 4;   // must divide d_e / attn_tokens
  double attn_temperature = 1.0;
  int router_hidden = 64;
  int head_shared = 512;  // shared head width
  int head_adapter = 64;  // per-target adapter width
  double curvature = 1.0;

  // Throws invalid_argument on any divisibility or positivity violation.
  void validate() const;
};

// Gate projections of one LSTM direction; gate order i, f, g, o.
struct LstmDirParams {
  Tensor wx;  // [4h, d]
  Tensor wh;  // [4h, h]
  Tensor b;   // [4h]
};

struct MhaParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [d,d] / [d]
};

struct TemporalParams {
  LstmDirParams fw, bw;  // hidden d/2 each, concatenated back to d
  MhaParams mha;
  Tensor conv_kernel;  // [3, d]
  Tensor conv_bias;    // [d]
  Tensor proj_w;       // [d, d]
  Tensor proj_b;       // [d]
};

struct EncoderLayerParams {
  MhaParams mha;
  Tensor ffn_w1, ffn_b1;  // [4d, d], [4d]
  Tensor ffn_w2, ffn_b2;  // [d, 4d], [d]
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct HeadParams {
  Tensor w1, b1, ln1_g, ln1_b;  // shared stack in
  Tensor w2, b2, ln2_g, ln2_b;  // shared stack deep
  std::vector<Tensor> adapter_w1;  // targets x [adapter, shared]
  std::vector<Tensor> adapter_b1;  // targets x [adapter]
  std::vector<Tensor> adapter_w2;  // targets x [adapter]
  Tensor bias;                     // [targets]
};

struct CrmfModel {
  ModelConfig cfg;
  Tensor e_mod;    // [3, d] modality embeddings: text, audio, video
  TemporalParams temporal;
  std::vector<EncoderLayerParams> pre;
  Tensor pool_w;   // [d] attention-pooling query
  Tensor w_h, w_s, w_e;  // [d_e, d] manifold projections
  ExpertStack expert_h, expert_s, expert_e;
  IntraAttention att_h, att_s, att_e;
  Router router;
  Refiner refiner;
  HeadParams head;

  static CrmfModel init(const ModelConfig& cfg, Rng& rng);
  static CrmfModel zeros(const ModelConfig& cfg);

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // The per-target adapter weight matrices (regularized separately).
  std::vector<Tensor> adapter_weights() const;
  std::int64_t parameter_count() const;
};

struct ManifoldTriple {
  Tensor x_h;  // Poincare ball point
  Tensor x_s;  // unit-sphere point
  Tensor x_e;  // Euclidean vector
};

struct ForwardOptions {
  bool train = false;
  RoutingMode routing = RoutingMode::kLearned;
  // 0 hyperbolic, 1 spherical, 2 euclidean: bypasses the router with a
  // one-hot weight and evaluates only the chosen expert. -1 = full model.
  int forced_geometry = -1;
  Rng* rng = nullptr;  // dropout source; required when train and dropout > 0
};

struct ForwardOutput {
  Tensor pred;     // [targets]
  Tensor routing;  // [3], simplex
  std::array<double, 3> tangent_norms{};  // per-geometry fused tangent norm
  double routing_entropy = 0.0;           // in [0, ln 3]
};

// BiLSTM -> self-attention -> depthwise conv, fused by a projected sum.
Tensor temporal_encode(const Tensor& frames, const TemporalParams& p,
                       int heads);

// Modality embeddings broadcast per token, pre-fusion encoder layers
// (post-norm), then attention pooling down to one d_model vector.
Tensor prefuse(const Tensor& text, const Tensor& audio, const Tensor& video,
               const CrmfModel& m);

// exp-map projection into the ball, normalized sphere point, linear map.
ManifoldTriple project_manifolds(const Tensor& z_pre, const CrmfModel& m);

// Shared trunk then per-target adapters; returns the 12 predictions.
Tensor predict_head(const Tensor& z_refined, const HeadParams& head);

// Full pipeline on one clip. Stage failures rethrow with the stage name.
ForwardOutput crmf_forward(const CrmfModel& m, const FeatureBundle& bundle,
                           const ForwardOptions& opt = {});

}  // namespace geomoe
