#include "geomoe/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "geomoe/manifolds.hpp"

namespace geomoe {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("ModelConfig: " + msg);
  };
  if (d_model <= 0 || d_e <= 0 || targets <= 0 || pre_layers < 0 ||
      expert_layers < 0 || router_hidden <= 0 || head_shared <= 0 ||
      head_adapter <= 0)
    fail("dimensions must be positive");
  if (d_model % 2 != 0) fail("d_model must be even for the BiLSTM halves");
  if (pre_heads <= 0 || d_model % pre_heads != 0)
    fail("pre_heads must divide d_model");
  if (temporal_heads <= 0 || d_model % temporal_heads != 0)
    fail("temporal_heads must divide d_model");
  if (attn_tokens <= 0 || d_e % attn_tokens != 0)
    fail("attn_tokens must divide d_e");
  if (attn_heads <= 0 || (d_e / attn_tokens) % attn_heads != 0)
    fail("attn_heads must divide the token width d_e / attn_tokens");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (curvature <= 0.0) fail("curvature must be positive");
  if (attn_temperature <= 0.0) fail("attn_temperature must be positive");
}

namespace {

std::size_t shape_count(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor randp(Rng& rng, Shape shape, double scale) {
  Tensor t =
      Tensor::from_data(shape, rng.normal_vec(shape_count(shape), 0.0, scale));
  t.set_requires_grad(true);
  return t;
}

Tensor zerop(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor onesp(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

LstmDirParams lstm_init(Rng& rng, int d, int h) {
  const double sx = 1.0 / std::sqrt(static_cast<double>(d));
  const double sh = 1.0 / std::sqrt(static_cast<double>(h));
  return {randp(rng, {4 * h, d}, sx), randp(rng, {4 * h, h}, sh),
          zerop({4 * h})};
}

LstmDirParams lstm_zeros(int d, int h) {
  return {zerop({4 * h, d}), zerop({4 * h, h}), zerop({4 * h})};
}

MhaParams mha_init(Rng& rng, int d) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  return {randp(rng, {d, d}, s), zerop({d}), randp(rng, {d, d}, s),
          zerop({d}), randp(rng, {d, d}, s), zerop({d}),
          randp(rng, {d, d}, s), zerop({d})};
}

MhaParams mha_zeros(int d) {
  return {zerop({d, d}), zerop({d}), zerop({d, d}), zerop({d}),
          zerop({d, d}), zerop({d}), zerop({d, d}), zerop({d})};
}

// Linear layer convention throughout: y = W x + b with W stored [out, in].
Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b) {
  return add(matvec(w, x), b);
}

Tensor linear_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, transpose(w)), b);
}

Tensor mha_forward(const Tensor& x, const MhaParams& p, int heads) {
  const int d = x.dim(1);
  const int dh = d / heads;
  Tensor q = linear_rows(x, p.wq, p.bq);
  Tensor k = linear_rows(x, p.wk, p.bk);
  Tensor v = linear_rows(x, p.wv, p.bv);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = mul_scalar(matmul(qh, transpose(kh)),
                               1.0 / std::sqrt(static_cast<double>(dh)));
    outs.push_back(matmul(softmax_lastdim(logits), vh));
  }
  return linear_rows(concat_cols(outs), p.wo, p.bo);
}

Tensor lstm_direction(const Tensor& x, const LstmDirParams& p, bool reverse) {
  const int t_len = x.dim(0);
  const int h = p.wh.dim(1);
  Tensor xw = matmul(x, transpose(p.wx));  // [T, 4h]
  Tensor h_prev = Tensor::zeros({1, h});
  Tensor c_prev = Tensor::zeros({1, h});
  std::vector<Tensor> rows(static_cast<std::size_t>(t_len));
  for (int step = 0; step < t_len; ++step) {
    const int t = reverse ? t_len - 1 - step : step;
    Tensor gates = add_rowvec(
        add(slice_rows(xw, t, t + 1), matmul(h_prev, transpose(p.wh))), p.b);
    Tensor gi = sigmoid(slice_cols(gates, 0, h));
    Tensor gf = sigmoid(slice_cols(gates, h, 2 * h));
    Tensor gg = tanh(slice_cols(gates, 2 * h, 3 * h));
    Tensor go = sigmoid(slice_cols(gates, 3 * h, 4 * h));
    c_prev = add(mul(gf, c_prev), mul(gi, gg));
    h_prev = mul(go, tanh(c_prev));
    rows[static_cast<std::size_t>(t)] = h_prev;
  }
  return concat_rows(rows);
}

Tensor row_of(const Tensor& m, int r) {
  return reshape(slice_rows(m, r, r + 1), {m.dim(1)});
}

Tensor stack_scalar_list(std::span<const Tensor> xs) {
  std::vector<Tensor> rows;
  rows.reserve(xs.size());
  for (const Tensor& x : xs) rows.push_back(reshape(x, {1, 1}));
  return reshape(concat_rows(rows), {static_cast<int>(xs.size())});
}

}  // namespace

CrmfModel CrmfModel::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.d_model;
  const int de = cfg.d_e;
  CrmfModel m;
  m.cfg = cfg;
  m.e_mod = randp(rng, {3, d}, 0.02);

  m.temporal.fw = lstm_init(rng, d, d / 2);
  m.temporal.bw = lstm_init(rng, d, d / 2);
  m.temporal.mha = mha_init(rng, d);
  m.temporal.conv_kernel = randp(rng, {3, d}, 1.0 / std::sqrt(3.0));
  m.temporal.conv_bias = zerop({d});
  m.temporal.proj_w = randp(rng, {d, d}, 1.0 / std::sqrt(static_cast<double>(d)));
  m.temporal.proj_b = zerop({d});

  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  m.pre.resize(static_cast<std::size_t>(cfg.pre_layers));
  for (auto& layer : m.pre) {
    layer.mha = mha_init(rng, d);
    layer.ffn_w1 = randp(rng, {4 * d, d}, sd);
    layer.ffn_b1 = zerop({4 * d});
    layer.ffn_w2 = randp(rng, {d, 4 * d},
                         1.0 / std::sqrt(static_cast<double>(4 * d)));
    layer.ffn_b2 = zerop({d});
    layer.ln1_g = onesp({d});
    layer.ln1_b = zerop({d});
    layer.ln2_g = onesp({d});
    layer.ln2_b = zerop({d});
  }
  m.pool_w = randp(rng, {d}, sd);

  m.w_h = randp(rng, {de, d}, sd);
  m.w_s = randp(rng, {de, d}, sd);
  m.w_e = randp(rng, {de, d}, sd);

  ExpertStackConfig ecfg{de, cfg.expert_layers, cfg.dropout, cfg.curvature};
  const double se = 1.0 / std::sqrt(static_cast<double>(de));
  m.expert_h = ExpertStack::init(ecfg, rng, se);
  m.expert_s = ExpertStack::init(ecfg, rng, se);
  m.expert_e = ExpertStack::init(ecfg, rng, se);

  AttentionConfig acfg{de, cfg.attn_tokens, cfg.attn_heads,
                       cfg.attn_temperature, cfg.curvature};
  const double sa =
      1.0 / std::sqrt(static_cast<double>(de / cfg.attn_tokens));
  m.att_h = IntraAttention::init(acfg, rng, sa);
  m.att_s = IntraAttention::init(acfg, rng, sa);
  m.att_e = IntraAttention::init(acfg, rng, sa);

  m.router = Router::init(RouterConfig{d, cfg.router_hidden, -0.01, 0.01},
                          rng, sd);
  m.refiner = Refiner::init(RefinerConfig{de, de}, rng, se);

  const int hs = cfg.head_shared;
  const int ha = cfg.head_adapter;
  m.head.w1 = randp(rng, {hs, de}, se);
  m.head.b1 = zerop({hs});
  m.head.ln1_g = onesp({hs});
  m.head.ln1_b = zerop({hs});
  m.head.w2 = randp(rng, {hs, hs}, 1.0 / std::sqrt(static_cast<double>(hs)));
  m.head.b2 = zerop({hs});
  m.head.ln2_g = onesp({hs});
  m.head.ln2_b = zerop({hs});
  const double ss = 1.0 / std::sqrt(static_cast<double>(hs));
  const double sv = 1.0 / std::sqrt(static_cast<double>(ha));
  for (int k = 0; k < cfg.targets; ++k) {
    m.head.adapter_w1.push_back(randp(rng, {ha, hs}, ss));
    m.head.adapter_b1.push_back(zerop({ha}));
    m.head.adapter_w2.push_back(randp(rng, {ha}, sv));
  }
  m.head.bias = zerop({cfg.targets});
  return m;
}

CrmfModel CrmfModel::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  const int de = cfg.d_e;
  CrmfModel m;
  m.cfg = cfg;
  m.e_mod = zerop({3, d});
  m.temporal.fw = lstm_zeros(d, d / 2);
  m.temporal.bw = lstm_zeros(d, d / 2);
  m.temporal.mha = mha_zeros(d);
  m.temporal.conv_kernel = zerop({3, d});
  m.temporal.conv_bias = zerop({d});
  m.temporal.proj_w = zerop({d, d});
  m.temporal.proj_b = zerop({d});
  m.pre.resize(static_cast<std::size_t>(cfg.pre_layers));
  for (auto& layer : m.pre) {
    layer.mha = mha_zeros(d);
    layer.ffn_w1 = zerop({4 * d, d});
    layer.ffn_b1 = zerop({4 * d});
    layer.ffn_w2 = zerop({d, 4 * d});
    layer.ffn_b2 = zerop({d});
    layer.ln1_g = onesp({d});
    layer.ln1_b = zerop({d});
    layer.ln2_g = onesp({d});
    layer.ln2_b = zerop({d});
  }
  m.pool_w = zerop({d});
  m.w_h = zerop({de, d});
  m.w_s = zerop({de, d});
  m.w_e = zerop({de, d});
  ExpertStackConfig ecfg{de, cfg.expert_layers, cfg.dropout, cfg.curvature};
  m.expert_h = ExpertStack::zeros(ecfg);
  m.expert_s = ExpertStack::zeros(ecfg);
  m.expert_e = ExpertStack::zeros(ecfg);
  AttentionConfig acfg{de, cfg.attn_tokens, cfg.attn_heads,
                       cfg.attn_temperature, cfg.curvature};
  Rng dummy(0);
  m.att_h = IntraAttention::init(acfg, dummy, 0.0);
  m.att_s = IntraAttention::init(acfg, dummy, 0.0);
  m.att_e = IntraAttention::init(acfg, dummy, 0.0);
  m.router = Router::zeros(RouterConfig{d, cfg.router_hidden, -0.01, 0.01});
  m.refiner = Refiner::zeros(RefinerConfig{de, de});
  const int hs = cfg.head_shared;
  const int ha = cfg.head_adapter;
  m.head.w1 = zerop({hs, de});
  m.head.b1 = zerop({hs});
  m.head.ln1_g = onesp({hs});
  m.head.ln1_b = zerop({hs});
  m.head.w2 = zerop({hs, hs});
  m.head.b2 = zerop({hs});
  m.head.ln2_g = onesp({hs});
  m.head.ln2_b = zerop({hs});
  for (int k = 0; k < cfg.targets; ++k) {
    m.head.adapter_w1.push_back(zerop({ha, hs}));
    m.head.adapter_b1.push_back(zerop({ha}));
    m.head.adapter_w2.push_back(zerop({ha}));
  }
  m.head.bias = zerop({cfg.targets});
  return m;
}

std::vector<std::pair<std::string, Tensor>> CrmfModel::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto put = [&](std::string name, const Tensor& t) {
    out.emplace_back(std::move(name), t);
  };
  put("e_mod", e_mod);
  auto put_lstm = [&](const std::string& pfx, const LstmDirParams& p) {
    put(pfx + ".wx", p.wx);
    put(pfx + ".wh", p.wh);
    put(pfx + ".b", p.b);
  };
  auto put_mha = [&](const std::string& pfx, const MhaParams& p) {
    put(pfx + ".wq", p.wq);
    put(pfx + ".bq", p.bq);
    put(pfx + ".wk", p.wk);
    put(pfx + ".bk", p.bk);
    put(pfx + ".wv", p.wv);
    put(pfx + ".bv", p.bv);
    put(pfx + ".wo", p.wo);
    put(pfx + ".bo", p.bo);
  };
  put_lstm("temporal.lstm.fw", temporal.fw);
  put_lstm("temporal.lstm.bw", temporal.bw);
  put_mha("temporal.mha", temporal.mha);
  put("temporal.conv.kernel", temporal.conv_kernel);
  put("temporal.conv.bias", temporal.conv_bias);
  put("temporal.proj.w", temporal.proj_w);
  put("temporal.proj.b", temporal.proj_b);
  for (std::size_t l = 0; l < pre.size(); ++l) {
    const std::string pfx = "pre." + std::to_string(l);
    put_mha(pfx + ".mha", pre[l].mha);
    put(pfx + ".ffn.w1", pre[l].ffn_w1);
    put(pfx + ".ffn.b1", pre[l].ffn_b1);
    put(pfx + ".ffn.w2", pre[l].ffn_w2);
    put(pfx + ".ffn.b2", pre[l].ffn_b2);
    put(pfx + ".ln1.g", pre[l].ln1_g);
    put(pfx + ".ln1.b", pre[l].ln1_b);
    put(pfx + ".ln2.g", pre[l].ln2_g);
    put(pfx + ".ln2.b", pre[l].ln2_b);
  }
  put("pool.w", pool_w);
  put("proj.w_h", w_h);
  put("proj.w_s", w_s);
  put("proj.w_e", w_e);
  auto put_expert = [&](const std::string& pfx, const ExpertStack& e) {
    for (std::size_t l = 0; l < e.w.size(); ++l) {
      put(pfx + "." + std::to_string(l) + ".w", e.w[l]);
      put(pfx + "." + std::to_string(l) + ".b", e.b[l]);
    }
  };
  put_expert("expert.hyp", expert_h);
  put_expert("expert.sph", expert_s);
  put_expert("expert.euc", expert_e);
  auto put_att = [&](const std::string& pfx, const IntraAttention& a) {
    put(pfx + ".wq", a.wq);
    put(pfx + ".wk", a.wk);
    put(pfx + ".wv", a.wv);
  };
  put_att("att.hyp", att_h);
  put_att("att.sph", att_s);
  put_att("att.euc", att_e);
  put("router.w1", router.w1);
  put("router.b1", router.b1);
  put("router.w2", router.w2);
  put("router.b2", router.b2);
  put("refiner.w1", refiner.w1);
  put("refiner.b1", refiner.b1);
  put("refiner.w2", refiner.w2);
  put("refiner.b2", refiner.b2);
  put("refiner.ln.g", refiner.ln_gain);
  put("refiner.ln.b", refiner.ln_bias);
  put("head.w1", head.w1);
  put("head.b1", head.b1);
  put("head.ln1.g", head.ln1_g);
  put("head.ln1.b", head.ln1_b);
  put("head.w2", head.w2);
  put("head.b2", head.b2);
  put("head.ln2.g", head.ln2_g);
  put("head.ln2.b", head.ln2_b);
  for (std::size_t k = 0; k < head.adapter_w1.size(); ++k) {
    const std::string pfx = "head.adapter." + std::to_string(k);
    put(pfx + ".w1", head.adapter_w1[k]);
    put(pfx + ".b1", head.adapter_b1[k]);
    put(pfx + ".w2", head.adapter_w2[k]);
  }
  put("head.bias", head.bias);
  return out;
}

std::vector<Tensor> CrmfModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor> CrmfModel::adapter_weights() const {
  std::vector<Tensor> out;
  for (const auto& w : head.adapter_w1) out.push_back(w);
  for (const auto& w : head.adapter_w2) out.push_back(w);
  return out;
}

std::int64_t CrmfModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) n += t.size();
  return n;
}

Tensor temporal_encode(const Tensor& frames, const TemporalParams& p,
                       int heads) {
  if (frames.ndim() != 2 || frames.dim(0) < 1)
    throw std::invalid_argument(
        "temporal_encode: frames must be [T,d] with T >= 1");
  Tensor fwd = lstm_direction(frames, p.fw, false);
  Tensor bwd = lstm_direction(frames, p.bw, true);
  const std::vector<Tensor> halves = {fwd, bwd};
  Tensor f_lstm = concat_cols(halves);
  Tensor f_attn = mha_forward(f_lstm, p.mha, heads);
  Tensor f_conv = depthwise_conv3(f_attn, p.conv_kernel, p.conv_bias);
  Tensor fused = add(add(f_lstm, f_attn), f_conv);
  return linear_rows(fused, p.proj_w, p.proj_b);
}

Tensor prefuse(const Tensor& text, const Tensor& audio, const Tensor& video,
               const CrmfModel& m) {
  for (const Tensor* t : {&text, &audio, &video})
    if (t->ndim() != 2 || t->dim(0) < 1 || t->dim(1) != m.cfg.d_model)
      throw std::invalid_argument(
          "prefuse: every modality must be a nonempty [N, d_model] sequence");
  const std::vector<Tensor> tagged = {
      add_rowvec(text, row_of(m.e_mod, 0)),
      add_rowvec(audio, row_of(m.e_mod, 1)),
      add_rowvec(video, row_of(m.e_mod, 2)),
  };
  Tensor h = concat_rows(tagged);
  for (const auto& layer : m.pre) {
    Tensor a = mha_forward(h, layer.mha, m.cfg.pre_heads);
    h = layer_norm(add(h, a), layer.ln1_g, layer.ln1_b);
    Tensor f = linear_rows(gelu(linear_rows(h, layer.ffn_w1, layer.ffn_b1)),
                           layer.ffn_w2, layer.ffn_b2);
    h = layer_norm(add(h, f), layer.ln2_g, layer.ln2_b);
  }
  Tensor alpha = softmax_lastdim(matvec(h, m.pool_w));  // [N]
  return matvec(transpose(h), alpha);
}

ManifoldTriple project_manifolds(const Tensor& z_pre, const CrmfModel& m) {
  const double c = m.cfg.curvature;
  ManifoldTriple t;
  t.x_h = manifold::project_to_ball(
      manifold::exp0_ball(matvec(m.w_h, z_pre), c), c);
  t.x_s = manifold::project_to_sphere(matvec(m.w_s, z_pre));
  t.x_e = matvec(m.w_e, z_pre);
  return t;
}

Tensor predict_head(const Tensor& z_refined, const HeadParams& head) {
  Tensor h1 = gelu(layer_norm(linear(head.w1, z_refined, head.b1),
                              head.ln1_g, head.ln1_b));
  Tensor h2 = gelu(layer_norm(linear(head.w2, h1, head.b2), head.ln2_g,
                              head.ln2_b));
  std::vector<Tensor> ys;
  const int k_targets = head.bias.dim(0);
  ys.reserve(static_cast<std::size_t>(k_targets));
  for (int k = 0; k < k_targets; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    Tensor a = gelu(linear(head.adapter_w1[ku], h2, head.adapter_b1[ku]));
    ys.push_back(add(dot(head.adapter_w2[ku], a),
                     index_element(head.bias, k)));
  }
  return stack_scalar_list(ys);
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("crmf_forward[") + name +
                             "]: " + e.what());
  }
}

double tangent_norm_value(const Tensor& v) {
  double s = 0.0;
  for (double x : v.raw()) s += x * x;
  return std::sqrt(s);
}

}  // namespace

ForwardOutput crmf_forward(const CrmfModel& m, const FeatureBundle& bundle,
                           const ForwardOptions& opt) {
  if (opt.forced_geometry < -1 || opt.forced_geometry > 2)
    throw std::invalid_argument("crmf_forward: forced_geometry out of range");
  const double c = m.cfg.curvature;

  Tensor h_v = stage("temporal_encode", [&] {
    return temporal_encode(bundle.video, m.temporal, m.cfg.temporal_heads);
  });
  Tensor z_pre = stage("prefuse", [&] {
    return prefuse(bundle.text, bundle.audio, h_v, m);
  });

  ForwardOutput out;
  Tensor z_fused;
  if (opt.forced_geometry >= 0) {
    // Single-geometry ablation: the router is bypassed and only the chosen
    // expert runs; its tangent image is the fusion result with weight 1.
    std::vector<double> onehot(3, 0.0);
    onehot[static_cast<std::size_t>(opt.forced_geometry)] = 1.0;
    out.routing = Tensor::from_data({3}, onehot);
    out.routing_entropy = 0.0;
    Tensor tangent = stage("experts", [&]() -> Tensor {
      switch (opt.forced_geometry) {
        case 0: {
          Tensor x = manifold::project_to_ball(
              manifold::exp0_ball(matvec(m.w_h, z_pre), c), c);
          Tensor e = hyperbolic_expert(x, m.expert_h, opt.train, opt.rng);
          Tensor a =
              intra_manifold_attention(e, m.att_h, GeometryKind::kHyperbolic);
          return manifold::log0_ball(a, c);
        }
        case 1: {
          Tensor x = manifold::project_to_sphere(matvec(m.w_s, z_pre));
          Tensor e = spherical_expert(x, m.expert_s, opt.train, opt.rng);
          Tensor a =
              intra_manifold_attention(e, m.att_s, GeometryKind::kSpherical);
          return manifold::sphere_log(manifold::north_pole(a.dim(0)), a);
        }
        default: {
          Tensor x = matvec(m.w_e, z_pre);
          Tensor e = euclidean_expert(x, m.expert_e, opt.train, opt.rng);
          return intra_manifold_attention(e, m.att_e,
                                          GeometryKind::kEuclidean);
        }
      }
    });
    out.tangent_norms[static_cast<std::size_t>(opt.forced_geometry)] =
        tangent_norm_value(tangent);
    z_fused = tangent;
  } else {
    ManifoldTriple proj = stage("project_manifolds",
                                [&] { return project_manifolds(z_pre, m); });
    Tensor a_h = stage("expert_hyperbolic", [&] {
      return intra_manifold_attention(
          hyperbolic_expert(proj.x_h, m.expert_h, opt.train, opt.rng),
          m.att_h, GeometryKind::kHyperbolic);
    });
    Tensor a_s = stage("expert_spherical", [&] {
      return intra_manifold_attention(
          spherical_expert(proj.x_s, m.expert_s, opt.train, opt.rng),
          m.att_s, GeometryKind::kSpherical);
    });
    Tensor a_e = stage("expert_euclidean", [&] {
      return intra_manifold_attention(
          euclidean_expert(proj.x_e, m.expert_e, opt.train, opt.rng),
          m.att_e, GeometryKind::kEuclidean);
    });
    Tensor r = stage("route", [&] { return route(z_pre, m.router, opt.routing); });
    out.routing = r;
    z_fused = stage("tangent_fuse",
                    [&] { return tangent_fuse(a_h, a_s, a_e, r, c); });
    {
      NoGradGuard ng;
      out.tangent_norms[0] = tangent_norm_value(manifold::log0_ball(a_h, c));
      out.tangent_norms[1] = tangent_norm_value(
          manifold::sphere_log(manifold::north_pole(a_s.dim(0)), a_s));
      out.tangent_norms[2] = tangent_norm_value(a_e);
      double ent = 0.0;
      for (double ri : r.raw())
        if (ri > 1e-12) ent -= ri * std::log(ri);
      out.routing_entropy = ent;
    }
  }

  Tensor z_ref = stage("refine", [&] { return refine(z_fused, m.refiner); });
  out.pred = stage("predict_head", [&] { return predict_head(z_ref, m.head); });
  return out;
}

}  // namespace geomoe
