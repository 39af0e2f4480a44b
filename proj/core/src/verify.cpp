#include "geomoe/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <vector>

#include "geomoe/experts.hpp"
#include "geomoe/gradcheck.hpp"
#include "geomoe/labeling.hpp"
#include "geomoe/linalg.hpp"
#include "geomoe/losses.hpp"
#include "geomoe/manifolds.hpp"
#include "geomoe/metrics.hpp"
#include "geomoe/model.hpp"
#include "geomoe/rng.hpp"
#include "geomoe/routing.hpp"
#include "geomoe/tensor.hpp"
#include "geomoe/train.hpp"

namespace geomoe {

namespace {

using Clock = std::chrono::steady_clock;

struct Timer {
  Clock::time_point t0 = Clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

double vnorm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double tnorm(const Tensor& t) { return vnorm(t.raw()); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace

// ---------------------------------------------------------------- manifolds

std::vector<CheckResult> verify_manifolds() {
  constexpr int kTrials = 10000;
  constexpr double kIdTol = 1e-10;
  constexpr double kRoundTol = 1e-9;
  const double c = manifold::kDefaultCurvature;
  const double rmax = (1.0 - manifold::kBallMargin) / std::sqrt(c);
  NoGradGuard ng;
  std::vector<CheckResult> out;

  auto dim_of = [](int trial) { return 2 + trial % 15; };

  {  // ball projection: margin respected, interior points untouched
    Timer t;
    Rng rng(101);
    double worst_margin = 0.0, worst_inner = 0.0;
    for (int i = 0; i < kTrials; ++i) {
      const int d = dim_of(i);
      auto v = rng.normal_vec(static_cast<std::size_t>(d));
      const double target = 3.0 * rng.uniform01();
      const double n = vnorm(v);
      for (auto& x : v) x *= target / (n + 1e-300);
      Tensor raw = Tensor::from_data({d}, v);
      Tensor p = manifold::project_to_ball(raw, c);
      worst_margin = std::max(worst_margin, tnorm(p) - rmax);
      if (target < rmax) worst_inner = std::max(worst_inner, max_abs_diff(p, raw));
    }
    out.push_back({"manifold: ball projection margin + passthrough",
                   worst_margin <= 1e-12 && worst_inner == 0.0,
                   "max norm excess " + fmt(worst_margin) +
                       ", interior drift " + fmt(worst_inner),
                   t.elapsed()});
  }

  auto rand_ball_point = [&](Rng& rng, int d, double max_frac) {
    auto v = rng.normal_vec(static_cast<std::size_t>(d));
    const double r = max_frac * rmax * rng.uniform01();
    const double n = vnorm(v) + 1e-300;
    for (auto& x : v) x *= r / n;
    return Tensor::from_data({d}, v);
  };

  {  // gyrogroup left identity and left inverse
    Timer t;
    Rng rng(102);
    double worst_id = 0.0, worst_inv = 0.0;
    for (int i = 0; i < kTrials; ++i) {
      const int d = dim_of(i);
      Tensor x = rand_ball_point(rng, d, 0.999);
      Tensor zero = Tensor::zeros({d});
      worst_id = std::max(worst_id,
                          max_abs_diff(manifold::mobius_add(zero, x, c), x));
      worst_inv = std::max(
          worst_inv, tnorm(manifold::mobius_add(neg(x), x, c)));
    }
    out.push_back({"manifold: Mobius left identity / left inverse",
                   worst_id <= kIdTol && worst_inv <= kIdTol,
                   "identity " + fmt(worst_id) + ", inverse " + fmt(worst_inv),
                   t.elapsed()});
  }

  {  // ball exp/log round trips
    Timer t;
    Rng rng(103);
    double worst_pt = 0.0, worst_tan = 0.0;
    for (int i = 0; i < kTrials; ++i) {
      const int d = dim_of(i);
      Tensor x = rand_ball_point(rng, d, 0.99);
      worst_pt = std::max(
          worst_pt,
          max_abs_diff(manifold::exp0_ball(manifold::log0_ball(x, c), c), x));
      auto v = rng.normal_vec(static_cast<std::size_t>(d));
      const double r = 4.0 * rng.uniform01();
      const double n = vnorm(v) + 1e-300;
      for (auto& e : v) e *= r / n;
      Tensor tv = Tensor::from_data({d}, v);
      worst_tan = std::max(
          worst_tan,
          max_abs_diff(manifold::log0_ball(manifold::exp0_ball(tv, c), c), tv));
    }
    out.push_back({"manifold: ball exp/log round trips",
                   worst_pt <= kRoundTol && worst_tan <= kRoundTol,
                   "point " + fmt(worst_pt) + ", tangent " + fmt(worst_tan),
                   t.elapsed()});
  }

  {  // sphere projection produces unit vectors
    Timer t;
    Rng rng(104);
    double worst = 0.0;
    for (int i = 0; i < kTrials; ++i) {
      const int d = dim_of(i);
      auto v = rng.normal_vec(static_cast<std::size_t>(d));
      const double s = 0.05 + 5.0 * rng.uniform01();
      for (auto& x : v) x *= s;
      Tensor p = manifold::project_to_sphere(Tensor::from_data({d}, v));
      worst = std::max(worst, std::abs(tnorm(p) - 1.0));
    }
    out.push_back({"manifold: sphere projection unit norm", worst <= kIdTol,
                   "max |norm-1| " + fmt(worst), t.elapsed()});
  }

  {  // sphere exp/log round trips away from the cut locus
    Timer t;
    Rng rng(105);
    double worst_pt = 0.0, worst_tan = 0.0;
    for (int i = 0; i < kTrials; ++i) {
      const int d = dim_of(i);
      Tensor p = manifold::north_pole(d);
      std::vector<double> v;
      for (;;) {
        v = rng.normal_vec(static_cast<std::size_t>(d));
        const double n = vnorm(v) + 1e-300;
        for (auto& x : v) x /= n;
        if (v[static_cast<std::size_t>(d - 1)] > -0.9) break;
      }
      Tensor x = Tensor::from_data({d}, v);
      worst_pt = std::max(
          worst_pt,
          max_abs_diff(manifold::sphere_exp(p, manifold::sphere_log(p, x)), x));
      auto w = rng.normal_vec(static_cast<std::size_t>(d));
      w[static_cast<std::size_t>(d - 1)] = 0.0;  // tangent at the north pole
      const double r = 3.0 * rng.uniform01();
      const double n = vnorm(w) + 1e-300;
      for (auto& e : w) e *= r / n;
      Tensor tv = Tensor::from_data({d}, w);
      worst_tan = std::max(
          worst_tan,
          max_abs_diff(manifold::sphere_log(p, manifold::sphere_exp(p, tv)),
                       tv));
    }
    out.push_back({"manifold: sphere exp/log round trips",
                   worst_pt <= kRoundTol && worst_tan <= kRoundTol,
                   "point " + fmt(worst_pt) + ", tangent " + fmt(worst_tan),
                   t.elapsed()});
  }

  {  // tangent projection orthogonality
    Timer t;
    Rng rng(106);
    double worst = 0.0;
    for (int i = 0; i < kTrials; ++i) {
      const int d = dim_of(i);
      auto pv = rng.normal_vec(static_cast<std::size_t>(d));
      const double pn = vnorm(pv) + 1e-300;
      for (auto& x : pv) x /= pn;
      Tensor p = Tensor::from_data({d}, pv);
      Tensor v = Tensor::from_data({d},
                                   rng.normal_vec(static_cast<std::size_t>(d)));
      Tensor tp = manifold::tangent_project(v, p);
      double ip = 0.0;
      for (int j = 0; j < d; ++j) ip += tp.at(j) * p.at(j);
      worst = std::max(worst, std::abs(ip));
    }
    out.push_back({"manifold: tangent projection orthogonality",
                   worst <= kIdTol, "max |<v,p>| " + fmt(worst), t.elapsed()});
  }
  return out;
}

// ---------------------------------------------------------------- gradients

namespace {

Tensor scalarize(const Tensor& t) {
  const int n = static_cast<int>(t.size());
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 1.2 + std::sin(1.7 * i + 0.3);
  return dot(reshape(t, {n}), Tensor::from_data({n}, w));
}

double gc(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
          std::int64_t cap = -1) {
  for (auto& l : leaves) l.set_requires_grad(true);
  return check_gradients_multi(f, leaves, 1e-5, cap);
}

// Uniform entries in [-bound, bound]; optionally pushed away from zero so
// kinked activations (relu, clamp edges) see no boundary within the probe h.
Tensor ru(Rng& rng, Shape shape, double bound, double away = 0.0) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (auto& x : v) {
    x = bound * (2.0 * rng.uniform01() - 1.0);
    if (away > 0.0 && std::abs(x) < away) x = x < 0.0 ? x - away : x + away;
  }
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor ball_pt(Rng& rng, int d, double r) {
  auto v = rng.normal_vec(static_cast<std::size_t>(d));
  const double n = vnorm(v) + 1e-300;
  for (auto& x : v) x *= r / n;
  return Tensor::from_data({d}, v);
}

Tensor sphere_pt(Rng& rng, int d) {
  std::vector<double> v;
  for (;;) {
    v = rng.normal_vec(static_cast<std::size_t>(d));
    const double n = vnorm(v) + 1e-300;
    for (auto& x : v) x /= n;
    if (v[static_cast<std::size_t>(d - 1)] > -0.5) break;
  }
  return Tensor::from_data({d}, v);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.d_e = 8;
  cfg.pre_layers = 1;
  cfg.pre_heads = 2;
  cfg.temporal_heads = 2;
  cfg.expert_layers = 1;
  cfg.dropout = 0.0;
  cfg.attn_tokens = 2;
  cfg.attn_heads = 2;
  cfg.router_hidden = 8;
  cfg.head_shared = 16;
  cfg.head_adapter = 8;
  return cfg;
}

// Combined six-component loss on a fixed two-clip batch; pure in the leaves
// (balancer statistics frozen).
Tensor tiny_model_loss(const CrmfModel& model, AdaptiveBalancer& balancer,
                       const std::vector<FeatureBundle>& clips,
                       const Tensor& targets, const LossConfig& lc) {
  const int k = model.cfg.targets;
  std::vector<Tensor> preds, rs, ents;
  for (const auto& b : clips) {
    ForwardOutput o = crmf_forward(model, b, {});
    preds.push_back(reshape(o.pred, {1, k}));
    rs.push_back(reshape(o.routing, {1, 3}));
    ents.push_back(routing_entropy_loss(o.routing, lc.lambda_entropy));
  }
  Tensor pred = concat_rows(preds);
  Tensor entropy = mul_scalar(add(ents[0], ents[1]), 0.5);
  const auto adapters = model.adapter_weights();
  const std::array<Tensor, kLossComponents> comps = {
      huber_loss(pred, targets, lc.huber_delta),
      corr_boost_loss(pred, targets, lc.lambda_corr),
      cov_align_loss(pred, targets, lc.lambda_cov),
      entropy,
      load_balance_loss(concat_rows(rs), lc.lambda_balance),
      head_regularization(adapters, lc.head_reg_coeff),
  };
  return balancer.combine(comps, /*update_state=*/false);
}

}  // namespace

std::vector<CheckResult> verify_gradients() {
  constexpr double kTol = 1e-4;
  std::vector<CheckResult> out;
  std::vector<std::pair<std::string, double>> rows;
  auto push_group = [&](const char* group, Timer& t) {
    double worst = 0.0;
    std::string worst_name = "-";
    for (auto& [name, err] : rows)
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    std::ostringstream detail;
    detail << rows.size() << " ops, worst " << fmt(worst) << " (" << worst_name
           << ")";
    out.push_back({std::string("gradients: ") + group, worst <= kTol,
                   detail.str(), t.elapsed()});
    rows.clear();
  };

  {  // core tensor operations
    Timer t;
    Rng rng(201);
    Tensor a = ru(rng, {3, 4}, 1.0);
    Tensor b = ru(rng, {3, 4}, 1.0);
    Tensor bpos = add_scalar(ru(rng, {3, 4}, 0.3), 2.0);
    Tensor m1 = ru(rng, {3, 4}, 1.0);
    Tensor m2 = ru(rng, {4, 5}, 1.0);
    Tensor vx = ru(rng, {4}, 1.0);
    Tensor vy = ru(rng, {4}, 1.0);
    Tensor away = ru(rng, {3, 4}, 1.0, 0.05);
    Tensor small = ru(rng, {3, 4}, 0.8);
    Tensor posit = add_scalar(ru(rng, {3, 4}, 0.4), 1.5);
    Tensor sc = Tensor::scalar(0.37);
    auto c1 = [&](const char* name, const std::function<Tensor()>& f,
                  std::vector<Tensor> leaves) {
      rows.emplace_back(name, gc(f, std::move(leaves)));
    };
    c1("add", [&] { return scalarize(add(a, b)); }, {a, b});
    c1("sub", [&] { return scalarize(sub(a, b)); }, {a, b});
    c1("mul", [&] { return scalarize(mul(a, b)); }, {a, b});
    c1("div", [&] { return scalarize(div(a, bpos)); }, {a, bpos});
    c1("neg", [&] { return scalarize(neg(a)); }, {a});
    c1("add_scalar", [&] { return scalarize(add_scalar(a, 0.7)); }, {a});
    c1("mul_scalar", [&] { return scalarize(mul_scalar(a, -1.3)); }, {a});
    c1("scale", [&] { return scalarize(scale(a, sc)); }, {a, sc});
    c1("add_rowvec", [&] { return scalarize(add_rowvec(a, vx)); }, {a, vx});
    c1("matmul", [&] { return scalarize(matmul(m1, m2)); }, {m1, m2});
    c1("matvec", [&] { return scalarize(matvec(m1, vx)); }, {m1, vx});
    c1("transpose", [&] { return scalarize(transpose(m1)); }, {m1});
    c1("outer", [&] { return scalarize(outer(vx, vy)); }, {vx, vy});
    c1("relu", [&] { return scalarize(relu(away)); }, {away});
    c1("gelu", [&] { return scalarize(gelu(a)); }, {a});
    c1("tanh", [&] { return scalarize(tanh(a)); }, {a});
    c1("sigmoid", [&] { return scalarize(sigmoid(a)); }, {a});
    c1("exp", [&] { return scalarize(exp(a)); }, {a});
    c1("log", [&] { return scalarize(log(posit)); }, {posit});
    c1("sqrt", [&] { return scalarize(sqrt(posit)); }, {posit});
    c1("square", [&] { return scalarize(square(a)); }, {a});
    c1("sin", [&] { return scalarize(sin(a)); }, {a});
    c1("cos", [&] { return scalarize(cos(a)); }, {a});
    c1("acos", [&] { return scalarize(acos(small)); }, {small});
    c1("atanh_stable", [&] { return scalarize(atanh_stable(small)); },
       {small});
    c1("clamp", [&] { return scalarize(clamp(small, -1.0, 1.0)); }, {small});
    c1("softmax_lastdim", [&] { return scalarize(softmax_lastdim(a)); }, {a});
    Tensor g = add_scalar(ru(rng, {4}, 0.2), 1.0);
    Tensor bb = ru(rng, {4}, 0.2);
    c1("layer_norm", [&] { return scalarize(layer_norm(a, g, bb)); },
       {a, g, bb});
    c1("concat_rows",
       [&] {
         const std::vector<Tensor> parts = {a, b};
         return scalarize(concat_rows(parts));
       },
       {a, b});
    c1("concat_cols",
       [&] {
         const std::vector<Tensor> parts = {a, b};
         return scalarize(concat_cols(parts));
       },
       {a, b});
    c1("slice_rows", [&] { return scalarize(slice_rows(a, 1, 3)); }, {a});
    c1("slice_cols", [&] { return scalarize(slice_cols(a, 1, 3)); }, {a});
    c1("reshape", [&] { return scalarize(reshape(a, {4, 3})); }, {a});
    c1("index_element", [&] { return index_element(vx, 2); }, {vx});
    c1("sum", [&] { return sum(a); }, {a});
    c1("mean", [&] { return mean(a); }, {a});
    c1("sum_axis0", [&] { return scalarize(sum_axis0(a)); }, {a});
    c1("mean_axis0", [&] { return scalarize(mean_axis0(a)); }, {a});
    c1("dot", [&] { return dot(vx, vy); }, {vx, vy});
    Tensor cx = ru(rng, {5, 4}, 1.0);
    Tensor ck = ru(rng, {3, 4}, 0.6);
    Tensor cb = ru(rng, {4}, 0.3);
    c1("depthwise_conv3",
       [&] { return scalarize(depthwise_conv3(cx, ck, cb)); }, {cx, ck, cb});
    push_group("tensor ops", t);
  }

  {  // manifold operations
    Timer t;
    Rng rng(202);
    const double c = manifold::kDefaultCurvature;
    Tensor xb = ball_pt(rng, 4, 0.4);
    Tensor yb = ball_pt(rng, 4, 0.3);
    Tensor tv = ru(rng, {4}, 0.8);
    Tensor mm = ru(rng, {4, 4}, 0.4);
    Tensor xs = sphere_pt(rng, 4);
    Tensor pole = manifold::north_pole(4);
    Tensor ts = ru(rng, {4}, 0.6);
    auto c1 = [&](const char* name, const std::function<Tensor()>& f,
                  std::vector<Tensor> leaves) {
      rows.emplace_back(name, gc(f, std::move(leaves)));
    };
    c1("mobius_add",
       [&] { return scalarize(manifold::mobius_add(xb, yb, c)); }, {xb, yb});
    c1("exp0_ball", [&] { return scalarize(manifold::exp0_ball(tv, c)); },
       {tv});
    c1("log0_ball", [&] { return scalarize(manifold::log0_ball(xb, c)); },
       {xb});
    c1("mobius_matvec",
       [&] { return scalarize(manifold::mobius_matvec(mm, xb, c)); },
       {mm, xb});
    c1("mobius_nonlinearity",
       [&] {
         return scalarize(manifold::mobius_nonlinearity(
             xb, [](const Tensor& u) { return gelu(u); }, c));
       },
       {xb});
    c1("project_to_ball",
       [&] { return scalarize(manifold::project_to_ball(xb, c)); }, {xb});
    c1("project_to_sphere",
       [&] { return scalarize(manifold::project_to_sphere(tv)); }, {tv});
    c1("sphere_log",
       [&] { return scalarize(manifold::sphere_log(pole, xs)); }, {xs});
    c1("sphere_exp",
       [&] { return scalarize(manifold::sphere_exp(pole, ts)); }, {ts});
    c1("tangent_project",
       [&] { return scalarize(manifold::tangent_project(ts, xs)); },
       {ts, xs});
    push_group("manifold ops", t);
  }

  {  // experts, attention, routing, refiner, losses
    Timer t;
    Rng rng(203);
    const int de = 6;
    ExpertStackConfig ecfg{de, 2, 0.0, manifold::kDefaultCurvature};
    ExpertStack eh = ExpertStack::init(ecfg, rng, 0.4);
    ExpertStack es = ExpertStack::init(ecfg, rng, 0.4);
    ExpertStack ee = ExpertStack::init(ecfg, rng, 0.4);
    auto with_params = [&](const ExpertStack& st, Tensor x) {
      std::vector<Tensor> leaves = {x};
      for (const auto& w : st.w) leaves.push_back(w);
      for (const auto& b : st.b) leaves.push_back(b);
      return leaves;
    };
    Tensor xb = ball_pt(rng, de, 0.35);
    Tensor xs = sphere_pt(rng, de);
    Tensor xe = ru(rng, {de}, 0.8);
    rows.emplace_back("hyperbolic_expert",
                      gc([&] { return scalarize(hyperbolic_expert(xb, eh)); },
                         with_params(eh, xb)));
    rows.emplace_back("spherical_expert",
                      gc([&] { return scalarize(spherical_expert(xs, es)); },
                         with_params(es, xs)));
    rows.emplace_back("euclidean_expert",
                      gc([&] { return scalarize(euclidean_expert(xe, ee)); },
                         with_params(ee, xe)));

    AttentionConfig acfg{de, 2, 1, 1.0, manifold::kDefaultCurvature};
    IntraAttention att = IntraAttention::init(acfg, rng, 0.5);
    auto att_leaves = [&](Tensor x) {
      return std::vector<Tensor>{x, att.wq, att.wk, att.wv};
    };
    rows.emplace_back(
        "intra_attention_hyperbolic",
        gc([&] {
             return scalarize(intra_manifold_attention(
                 xb, att, GeometryKind::kHyperbolic));
           },
           att_leaves(xb)));
    rows.emplace_back(
        "intra_attention_spherical",
        gc([&] {
             return scalarize(intra_manifold_attention(
                 xs, att, GeometryKind::kSpherical));
           },
           att_leaves(xs)));
    rows.emplace_back(
        "intra_attention_euclidean",
        gc([&] {
             return scalarize(intra_manifold_attention(
                 xe, att, GeometryKind::kEuclidean));
           },
           att_leaves(xe)));

    Router router = Router::init(RouterConfig{de, 5, -0.01, 0.01}, rng, 0.5);
    Tensor z = ru(rng, {de}, 0.8);
    rows.emplace_back(
        "route",
        gc([&] { return scalarize(route(z, router)); },
           {z, router.w1, router.b1, router.w2, router.b2}));
    Tensor r3 = softmax_lastdim(ru(rng, {3}, 0.5));
    rows.emplace_back("routing_entropy_loss",
                      gc([&] { return routing_entropy_loss(r3, -0.01); },
                         {r3}));
    Tensor br = softmax_lastdim(ru(rng, {4, 3}, 0.5));
    rows.emplace_back(
        "load_balance_loss",
        gc([&] { return load_balance_loss(br, 0.01); }, {br}));
    rows.emplace_back(
        "tangent_fuse",
        gc([&] { return scalarize(tangent_fuse(xb, xs, xe, r3)); },
           {xb, xs, xe, r3}));
    Refiner ref = Refiner::init(RefinerConfig{de, de}, rng, 0.4);
    rows.emplace_back(
        "refine", gc([&] { return scalarize(refine(xe, ref)); },
                     {xe, ref.w1, ref.b1, ref.w2, ref.b2, ref.ln_gain,
                      ref.ln_bias}));

    Tensor pred = ru(rng, {4, 3}, 1.0);
    Tensor targ = ru(rng, {4, 3}, 1.0);
    rows.emplace_back("huber_loss",
                      gc([&] { return huber_loss(pred, targ, 1.0); },
                         {pred, targ}));
    rows.emplace_back("corr_boost_loss",
                      gc([&] { return corr_boost_loss(pred, targ, 0.1); },
                         {pred, targ}));
    rows.emplace_back("cov_align_loss",
                      gc([&] { return cov_align_loss(pred, targ, 0.01); },
                         {pred, targ}));
    Tensor aw = ru(rng, {3, 4}, 0.7);
    rows.emplace_back("head_regularization",
                      gc(
                          [&] {
                            const std::vector<Tensor> ws = {aw};
                            return head_regularization(ws, 1e-2);
                          },
                          {aw}));
    AdaptiveBalancer bal(3);
    std::vector<Tensor> comps = {Tensor::scalar(1.07), Tensor::scalar(0.83),
                                 Tensor::scalar(1.41)};
    std::vector<Tensor> bal_leaves = comps;
    bal_leaves.push_back(bal.alpha());
    rows.emplace_back(
        "balancer_combine",
        gc([&] { return bal.combine(comps, false); }, bal_leaves));
    push_group("experts / routing / losses", t);
  }

  {  // full model loss at the tiny configuration, 10 seeds
    Timer t;
    const ModelConfig cfg = tiny_config();
    const LossConfig lc;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      CrmfModel model = CrmfModel::init(cfg, rng);
      std::vector<FeatureBundle> clips(2);
      for (auto& b : clips) {
        b.text = ru(rng, {3, cfg.d_model}, 1.0);
        b.audio = ru(rng, {2, cfg.d_model}, 1.0);
        b.video = ru(rng, {4, cfg.d_model}, 1.0);
      }
      Tensor targets = ru(rng, {2, cfg.targets}, 1.0);
      AdaptiveBalancer balancer(kLossComponents);

      std::vector<Tensor> leaves;
      const std::vector<std::string> wanted = {
          "e_mod",           "temporal.lstm.fw.wx", "temporal.lstm.bw.wh",
          "temporal.mha.wq", "temporal.conv.kernel", "temporal.proj.w",
          "pre.0.mha.wv",    "pre.0.ffn.w1",        "pre.0.ln1.g",
          "pool.w",          "proj.w_h",            "proj.w_s",
          "proj.w_e",        "expert.hyp.0.w",      "expert.sph.0.w",
          "expert.euc.0.b",  "att.hyp.wq",          "att.sph.wv",
          "att.euc.wk",      "router.w1",           "refiner.w1",
          "head.w1",         "head.adapter.0.w1",   "head.bias"};
      for (const auto& [name, tensor] : model.named_parameters())
        if (std::find(wanted.begin(), wanted.end(), name) != wanted.end())
          leaves.push_back(tensor);
      leaves.push_back(balancer.alpha());

      const double err = check_gradients_multi(
          [&] { return tiny_model_loss(model, balancer, clips, targets, lc); },
          leaves, 1e-5, /*max_coords_per_leaf=*/24);
      worst = std::max(worst, err);
    }
    out.push_back({"gradients: full model loss (d_model=16, 10 seeds)",
                   worst <= kTol, "worst " + fmt(worst), t.elapsed()});
  }
  return out;
}

// ------------------------------------------------------------------ metrics

namespace {

// Independent midrank: 1 + (#smaller) + (#equal - 1) / 2 by direct counting.
std::vector<double> oracle_midranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (x[j] < x[i]) ++less;
      if (x[j] == x[i]) ++equal;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double oracle_pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double oracle_spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = oracle_midranks(x);
  const auto ry = oracle_midranks(y);
  return oracle_pearson(rx, ry);
}

double oracle_kendall(std::span<const double> x, std::span<const double> y) {
  double conc = 0.0, disc = 0.0, tx = 0.0, ty = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0)
        ++tx;
      else if (dy == 0.0)
        ++ty;
      else if (dx * dy > 0.0)
        ++conc;
      else
        ++disc;
    }
  const double den =
      std::sqrt((conc + disc + tx) * (conc + disc + ty));
  if (den == 0.0) return 0.0;
  return (conc - disc) / den;
}

double oracle_cindex(std::span<const double> pred,
                     std::span<const double> truth) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      if (truth[i] == truth[j]) continue;
      den += 1.0;
      const double dp = pred[i] - pred[j];
      const double dt = truth[i] - truth[j];
      if (dp == 0.0)
        num += 0.5;
      else if (dp * dt > 0.0)
        num += 1.0;
    }
  return num / den;
}

}  // namespace

std::vector<CheckResult> verify_metrics() {
  std::vector<CheckResult> out;
  {
    Timer t;
    Rng rng(301);
    double worst = 0.0;
    int degenerate_skips = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 10 + static_cast<int>(rng.uniform_int(0, 30));
      std::vector<double> x(static_cast<std::size_t>(n)),
          y(static_cast<std::size_t>(n));
      for (auto& v : x)
        v = static_cast<double>(rng.uniform_int(0, 6));  // ties guaranteed
      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = rng.uniform01() < 0.5
                   ? static_cast<double>(rng.uniform_int(0, 6))
                   : x[i] + rng.normal();
      const double s = spearman(x, y);
      const double k = kendall_tau_b(x, y);
      worst = std::max(worst, std::abs(s - oracle_spearman(x, y)));
      worst = std::max(worst, std::abs(k - oracle_kendall(x, y)));
      bool comparable = false;
      for (std::size_t i = 1; i < y.size() && !comparable; ++i)
        comparable = y[i] != y[0];
      if (comparable)
        worst = std::max(worst, std::abs(c_index(x, y) - oracle_cindex(x, y)));
      else
        ++degenerate_skips;
    }
    out.push_back({"metrics: oracle agreement on tie-containing vectors",
                   worst <= 1e-12,
                   "max |diff| " + fmt(worst) + " over 1000 vectors (" +
                       std::to_string(degenerate_skips) +
                       " all-tied truth vectors skip c-index)",
                   t.elapsed()});
  }
  {
    Timer t;
    const std::vector<double> a = {1.0, 2.0, 3.0};
    const std::vector<double> b = {1.0, 3.0, 2.0};
    const std::vector<double> tie = {1.0, 1.0, 2.0};
    const bool pass = spearman(a, b) == 0.5 &&
                      std::abs(kendall_tau_b(a, b) - 1.0 / 3.0) < 1e-15 &&
                      std::abs(c_index(a, b) - 2.0 / 3.0) < 1e-15 &&
                      std::abs(kendall_tau_b(a, tie) -
                               2.0 / std::sqrt(6.0)) < 1e-15;
    out.push_back({"metrics: hand cases (0.5, 1/3, 2/3, 2/sqrt(6))", pass,
                   "spearman " + fmt(spearman(a, b)) + ", tau-b " +
                       fmt(kendall_tau_b(a, b)) + ", c-index " +
                       fmt(c_index(a, b)),
                   t.elapsed()});
  }
  return out;
}

// ------------------------------------------------------------ winsorization

std::vector<CheckResult> verify_winsorization() {
  std::vector<CheckResult> out;
  Timer t;
  const double theta = 1.5, s = 1.5;
  // Inside the threshold the map is the identity; outside it approaches
  // theta + s. The x = 3 value has the closed form theta + s*tanh(1).
  const double at_three = theta + s * std::tanh(1.0);
  const bool fixed = soft_winsorize(1.0, theta, s) == 1.0 &&
                     std::abs(soft_winsorize(3.0, theta, s) - at_three) <=
                         1e-6 &&
                     std::abs(soft_winsorize(50.0, theta, s) - 3.0) <= 1e-6 &&
                     soft_winsorize(-1.0, theta, s) == -1.0 &&
                     std::abs(soft_winsorize(-3.0, theta, s) + at_three) <=
                         1e-6;
  out.push_back({"winsorization: fixed points and asymptote", fixed,
                 "w(3) = " + fmt(soft_winsorize(3.0, theta, s)) +
                     " (closed form " + fmt(at_three) + ")",
                 t.elapsed()});

  Timer t2;
  bool monotone = true;
  double prev = soft_winsorize(-8.0, theta, s);
  for (int i = 1; i < 10000; ++i) {
    const double x = -8.0 + 16.0 * static_cast<double>(i) / 9999.0;
    const double w = soft_winsorize(x, theta, s);
    if (!(w > prev)) {
      monotone = false;
      break;
    }
    prev = w;
  }
  out.push_back({"winsorization: strict monotonicity on 10^4-point grid",
                 monotone, monotone ? "strictly increasing on [-8, 8]"
                                    : "monotonicity violated",
                 t2.elapsed()});
  return out;
}

// ------------------------------------------------------------------ labeling

std::vector<CheckResult> verify_labeling_recovery() {
  std::vector<CheckResult> out;
  Timer t;
  const int n = 60, targets = 3;
  Rng rng(401);
  Matrix u(n, 2), v(2, targets);
  for (auto& x : u.a) x = rng.normal();
  for (auto& x : v.a) x = 2.0 * rng.normal();
  Matrix theta_star = matmul(u, v);

  const auto records = simulate_comparisons(theta_star, 40, 402);
  // The mean-normalized log-likelihood keeps gradients O(1/records), so the
  // production-default lambda would shrink this small problem to zero.
  SolverConfig cfg;
  cfg.lambda = 3e-4;
  cfg.max_iters = 20000;
  const FitResult fit = fit_mnl(records, n, targets, cfg);

  double worst_rho = 1.0;
  for (int k = 0; k < targets; ++k) {
    std::vector<double> est(static_cast<std::size_t>(n)),
        truth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      est[static_cast<std::size_t>(i)] = fit.theta(i, k);
      truth[static_cast<std::size_t>(i)] = theta_star(i, k);
    }
    worst_rho = std::min(worst_rho, spearman(est, truth));
  }
  bool trace_ok = !fit.objective_trace.empty();
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    if (fit.objective_trace[i] > fit.objective_trace[i - 1] + 1e-12)
      trace_ok = false;
  double worst_center = 0.0;
  for (int k = 0; k < targets; ++k) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += fit.theta(i, k);
    worst_center = std::max(worst_center, std::abs(m / n));
  }
  bool none_isolated = true;
  for (bool iso : fit.isolated)
    if (iso) none_isolated = false;
  const bool pass =
      worst_rho >= 0.9 && trace_ok && worst_center <= 1e-10 && none_isolated;
  out.push_back(
      {"labeling: planted rank-2 recovery (N=60, T=3, 40 cmp/item)", pass,
       "min per-target spearman " + fmt(worst_rho) + ", objective " +
           (trace_ok ? "non-increasing" : "INCREASED") + ", centering " +
           fmt(worst_center) + ", " + std::to_string(fit.iterations) +
           " iterations",
       t.elapsed()});
  return out;
}

// ---------------------------------------------------------------------- svt

std::vector<CheckResult> verify_svt() {
  std::vector<CheckResult> out;
  {
    Timer t;
    Matrix d(3, 3);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    d(2, 2) = 0.2;
    const Matrix shrunk = svt(d, 0.5);
    Matrix expected(3, 3);
    expected(0, 0) = 2.5;
    expected(1, 1) = 0.5;
    double worst = 0.0;
    for (std::size_t i = 0; i < shrunk.a.size(); ++i)
      worst = std::max(worst, std::abs(shrunk.a[i] - expected.a[i]));
    out.push_back({"svt: diagonal shrinkage exact", worst <= 1e-12,
                   "max |diff| " + fmt(worst), t.elapsed()});
  }
  {
    Timer t;
    Rng rng(501);
    // prox objective: F(Z) = 0.5 ||Z - Y||_F^2 + tau ||Z||_*
    auto objective = [](const Matrix& z, const Matrix& y, double tau) {
      double q = 0.0;
      for (std::size_t i = 0; i < z.a.size(); ++i) {
        const double d0 = z.a[i] - y.a[i];
        q += d0 * d0;
      }
      return 0.5 * q + tau * nuclear_norm(z);
    };
    bool pass = true;
    double worst_gap = 0.0;
    for (int trial = 0; trial < 100 && pass; ++trial) {
      const int rows = 3 + static_cast<int>(rng.uniform_int(0, 5));
      const int cols = 3 + static_cast<int>(rng.uniform_int(0, 5));
      Matrix y(rows, cols);
      for (auto& x : y.a) x = rng.normal();
      const double tau = trial % 3 == 0 ? 0.1 : (trial % 3 == 1 ? 0.5 : 1.5);
      const Matrix x = svt(y, tau);
      const double fx = objective(x, y, tau);
      for (int cand = 0; cand < 50; ++cand) {
        Matrix z = x;
        const double eps = cand % 4 == 0   ? 1e-3
                           : cand % 4 == 1 ? 1e-2
                           : cand % 4 == 2 ? 0.1
                                           : 1.0;
        if (cand == 48) {
          z = y;  // candidate: no shrinkage at all
        } else if (cand == 49) {
          for (auto& e : z.a) e = 0.0;  // candidate: total shrinkage
        } else {
          for (auto& e : z.a) e += eps * rng.normal();
        }
        const double fz = objective(z, y, tau);
        worst_gap = std::max(worst_gap, fx - fz);
        if (fx > fz + 1e-9) pass = false;
      }
    }
    out.push_back({"svt: proximal optimality on 100 random matrices", pass,
                   "max objective gap vs candidates " + fmt(worst_gap),
                   t.elapsed()});
  }
  return out;
}

std::vector<CheckResult> run_verification_suite() {
  std::vector<CheckResult> all;
  for (auto&& group :
       {verify_manifolds(), verify_gradients(), verify_metrics(),
        verify_winsorization(), verify_labeling_recovery(), verify_svt()})
    for (auto& check : group) all.push_back(std::move(check));
  return all;
}

}  // namespace geomoe
