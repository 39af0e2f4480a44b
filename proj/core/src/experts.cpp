#include "geomoe/experts.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace geomoe {

namespace {

void check_attention_config(const AttentionConfig& cfg) {
  if (cfg.tokens <= 0 || cfg.dim % cfg.tokens != 0)
    throw std::invalid_argument(
        "intra_manifold_attention: token count " + std::to_string(cfg.tokens) +
        " must divide dim " + std::to_string(cfg.dim));
  const int d_tok = cfg.dim / cfg.tokens;
  if (cfg.heads <= 0 || d_tok % cfg.heads != 0)
    throw std::invalid_argument(
        "intra_manifold_attention: head count " + std::to_string(cfg.heads) +
        " must divide token width " + std::to_string(d_tok));
  if (cfg.temperature <= 0.0)
    throw std::invalid_argument(
        "intra_manifold_attention: temperature must be positive");
}

}  // namespace

ExpertStack ExpertStack::init(const ExpertStackConfig& cfg, Rng& rng,
                              double weight_scale) {
  if (cfg.layers < 1)
    throw std::invalid_argument("ExpertStack: layers must be >= 1");
  ExpertStack s;
  s.cfg = cfg;
  const double sd = weight_scale / std::sqrt(static_cast<double>(cfg.dim));
  for (int l = 0; l < cfg.layers; ++l) {
    s.w.push_back(Tensor::from_data(
        {cfg.dim, cfg.dim},
        rng.normal_vec(static_cast<size_t>(cfg.dim) * cfg.dim, 0.0, sd), true));
    s.b.push_back(Tensor::zeros({cfg.dim}, true));
  }
  return s;
}

ExpertStack ExpertStack::zeros(const ExpertStackConfig& cfg) {
  ExpertStack s;
  s.cfg = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    s.w.push_back(Tensor::zeros({cfg.dim, cfg.dim}, true));
    s.b.push_back(Tensor::zeros({cfg.dim}, true));
  }
  return s;
}

std::vector<Tensor> ExpertStack::parameters() const {
  std::vector<Tensor> out;
  for (const auto& t : w) out.push_back(t);
  for (const auto& t : b) out.push_back(t);
  return out;
}

Tensor tangent_dropout(const Tensor& v, double rate, bool train, Rng* rng) {
  if (!train || rate <= 0.0) return v;
  if (rng == nullptr)
    throw std::invalid_argument("tangent_dropout: training requires an rng");
  const double keep = 1.0 - rate;
  std::vector<double> mask(static_cast<size_t>(v.size()));
  for (auto& m : mask) m = rng->uniform01() < rate ? 0.0 : 1.0 / keep;
  return mul(v, Tensor::from_data(v.shape(), std::move(mask)));
}

Tensor hyperbolic_expert(const Tensor& x, const ExpertStack& params,
                         bool train, Rng* rng) {
  const double c = params.cfg.curvature;
  Tensor h = x;
  for (size_t l = 0; l < params.w.size(); ++l) {
    Tensor pre = manifold::mobius_add(
        manifold::mobius_matvec(params.w[l], h, c),
        manifold::project_to_ball(params.b[l], c), c);
    // sigma_h with dropout folded into the same tangent trip.
    Tensor v = gelu(manifold::log0_ball(pre, c));
    v = tangent_dropout(v, params.cfg.dropout, train, rng);
    h = manifold::exp0_ball(v, c);
  }
  return manifold::mobius_add(h, x, c);
}

Tensor spherical_expert(const Tensor& x, const ExpertStack& params,
                        bool train, Rng* rng) {
  Tensor p = manifold::north_pole(x.dim(0));
  Tensor v0 = manifold::sphere_log(p, x);
  Tensor v = v0;
  for (size_t l = 0; l < params.w.size(); ++l) {
    v = gelu(add(matvec(params.w[l], v), params.b[l]));
    v = manifold::tangent_project(v, p);
    v = tangent_dropout(v, params.cfg.dropout, train, rng);
  }
  return manifold::sphere_exp(p, add(v, v0));
}

Tensor euclidean_expert(const Tensor& x, const ExpertStack& params,
                        bool train, Rng* rng) {
  Tensor h = x;
  for (size_t l = 0; l < params.w.size(); ++l) {
    h = relu(add(matvec(params.w[l], h), params.b[l]));
    h = tangent_dropout(h, params.cfg.dropout, train, rng);
  }
  return add(h, x);
}

IntraAttention IntraAttention::init(const AttentionConfig& cfg, Rng& rng,
                                    double weight_scale) {
  check_attention_config(cfg);
  const int d_tok = cfg.dim / cfg.tokens;
  const double sd = weight_scale / std::sqrt(static_cast<double>(d_tok));
  IntraAttention a;
  a.cfg = cfg;
  auto mk = [&] {
    return Tensor::from_data(
        {d_tok, d_tok},
        rng.normal_vec(static_cast<size_t>(d_tok) * d_tok, 0.0, sd), true);
  };
  a.wq = mk();
  a.wk = mk();
  a.wv = mk();
  return a;
}

std::vector<Tensor> IntraAttention::parameters() const {
  return {wq, wk, wv};
}

Tensor intra_manifold_attention(const Tensor& x, const IntraAttention& att,
                                GeometryKind kind) {
  const AttentionConfig& cfg = att.cfg;
  check_attention_config(cfg);
  if (x.size() != cfg.dim)
    throw std::invalid_argument("intra_manifold_attention: input " +
                                shape_str(x.shape()) + " vs configured dim " +
                                std::to_string(cfg.dim));
  const double c = cfg.curvature;
  Tensor pole;
  Tensor v;
  switch (kind) {
    case GeometryKind::kHyperbolic:
      v = manifold::log0_ball(x, c);
      break;
    case GeometryKind::kSpherical:
      pole = manifold::north_pole(x.dim(0));
      v = manifold::sphere_log(pole, x);
      break;
    case GeometryKind::kEuclidean:
      v = x;
      break;
  }

  const int n_tok = cfg.tokens;
  const int d_tok = cfg.dim / n_tok;
  const int heads = cfg.heads;
  const int d_head = d_tok / heads;
  Tensor tokens = reshape(v, {n_tok, d_tok});
  Tensor q = matmul(tokens, transpose(att.wq));
  Tensor k = matmul(tokens, transpose(att.wk));
  Tensor val = matmul(tokens, transpose(att.wv));

  const double inv_scale =
      1.0 / (cfg.temperature * std::sqrt(static_cast<double>(d_head)));
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * d_head, (h + 1) * d_head);
    Tensor kh = slice_cols(k, h * d_head, (h + 1) * d_head);
    Tensor vh = slice_cols(val, h * d_head, (h + 1) * d_head);
    Tensor logits = mul_scalar(matmul(qh, transpose(kh)), inv_scale);
    Tensor weights = softmax_lastdim(logits);
    head_outs.push_back(matmul(weights, vh));
  }
  Tensor attended = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  Tensor v_att = reshape(attended, {cfg.dim});

  switch (kind) {
    case GeometryKind::kHyperbolic:
      return manifold::exp0_ball(v_att, c);
    case GeometryKind::kSpherical:
      return manifold::sphere_exp(pole,
                                  manifold::tangent_project(v_att, pole));
    case GeometryKind::kEuclidean:
      return v_att;
  }
  throw std::logic_error("intra_manifold_attention: unreachable");
}

}  // namespace geomoe
