#pragma once

#include <vector>

#include "geomoe/manifolds.hpp"
#include "geomoe/rng.hpp"
#include "geomoe/tensor.hpp"

namespace geomoe {

enum class GeometryKind { kHyperbolic, kSpherical, kEuclidean };

struct ExpertStackConfig {
  int dim = 128;       // expert width d_e
  int layers = 2;      // L_exp
  double dropout = 0.1;
  double curvature = manifold::kDefaultCurvature;
};

// Per-layer affine parameters, one stack per geometry. The same shape works
// for all three experts; only the algebra around the affine map differs.
struct ExpertStack {
  ExpertStackConfig cfg;
  std::vector<Tensor> w;  // layers x [dim, dim]
  std::vector<Tensor> b;  // layers x [dim]

  static ExpertStack init(const ExpertStackConfig& cfg, Rng& rng,
                          double weight_scale);
  static ExpertStack zeros(const ExpertStackConfig& cfg);
  std::vector<Tensor> parameters() const;
};

// Inverted dropout on tangent coordinates; identity when train is false.
Tensor tangent_dropout(const Tensor& v, double rate, bool train, Rng* rng);

// x in the Poincare ball; L layers of sigma_h(W (x)_c x (+)_c b) followed by
// a Mobius residual x^(L) (+)_c x^(0).
Tensor hyperbolic_expert(const Tensor& x, const ExpertStack& params,
                         bool train = false, Rng* rng = nullptr);

// x on the unit sphere; layers act on log_p(x) in the tangent space at the
// north pole, each output re-projected onto the tangent plane; residual in
// tangent space, then exp_p.
Tensor spherical_expert(const Tensor& x, const ExpertStack& params,
                        bool train = false, Rng* rng = nullptr);

// Plain relu MLP with an additive residual.
Tensor euclidean_expert(const Tensor& x, const ExpertStack& params,
                        bool train = false, Rng* rng = nullptr);

struct AttentionConfig {
  int dim = 128;        // d_e
  int tokens = 8;       // n_tok; must divide dim
  int heads = 4;        // must divide dim / tokens
  double temperature = 1.0;
  double curvature = manifold::kDefaultCurvature;
};

// Shared Q/K/V projections applied per token. No output projection and no
// internal residual: with a single token the output is exactly the
// value-projected tangent vector.
struct IntraAttention {
  AttentionConfig cfg;
  Tensor wq, wk, wv;  // [d_tok, d_tok]

  static IntraAttention init(const AttentionConfig& cfg, Rng& rng,
                             double weight_scale);
  std::vector<Tensor> parameters() const;
};

// Attention in the tangent space of the point's own manifold: the tangent
// image is chunked into `tokens` rows, multi-head self-attention runs with
// logits scaled by 1/(temperature * sqrt(d_head)), and the flattened result
// is mapped back through the exponential map (sphere outputs are
// re-orthogonalized against the base point first).
Tensor intra_manifold_attention(const Tensor& x, const IntraAttention& att,
                                GeometryKind kind);

}  // namespace geomoe
