#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "geomoe/checkpoint.hpp"
#include "geomoe/data.hpp"
#include "geomoe/model.hpp"
#include "geomoe/optim.hpp"
#include "geomoe/train.hpp"
#include "json.hpp"

using namespace geomoe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int c = 0;
    path = fs::temp_directory_path() /
           ("geomoe_train_" + std::to_string(::getpid()) + "_" +
            std::to_string(c++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& name = "") const {
    return (name.empty() ? path : path / name).string();
  }
};

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.d_model = 16;
  mc.d_e = 8;
  mc.pre_layers = 1;
  mc.pre_heads = 2;
  mc.temporal_heads = 2;
  mc.expert_layers = 1;
  mc.dropout = 0.0;
  mc.attn_tokens = 2;
  mc.attn_heads = 2;
  mc.router_hidden = 8;
  mc.head_shared = 16;
  mc.head_adapter = 8;
  return mc;
}

SyntheticSpec tiny_data_spec() {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.clips = 30;
  spec.users = 6;
  spec.dim = 16;
  return spec;
}

}  // namespace

TEST_CASE("adamw single step matches the hand-derived update") {
  Tensor p = Tensor::from_data({1}, {1.0}, true);
  p.node()->grad = {0.5};
  AdamW opt({p});
  REQUIRE(opt.step(0.1));

  // decay first: 1 - 0.1*0.01 = 0.999
  // m = 0.05, v = 0.00025 -> mhat = 0.5, vhat = 0.25
  // p = 0.999 - 0.1 * 0.5 / (0.5 + 1e-8)
  const double expect = 0.999 - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(p.at(0) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw skips the whole step on a non-finite gradient") {
  Tensor a = Tensor::from_data({1}, {1.0}, true);
  Tensor b = Tensor::from_data({1}, {2.0}, true);
  a.node()->grad = {0.5};
  b.node()->grad = {std::numeric_limits<double>::quiet_NaN()};
  AdamW opt({a, b});
  CHECK_FALSE(opt.step(0.1));
  CHECK(a.at(0) == 1.0);  // untouched, not even the decay
  CHECK(b.at(0) == 2.0);
  CHECK(opt.step_count() == 0);
  CHECK(opt.skipped_steps() == 1);
  CHECK(opt.moment1()[0][0] == 0.0);

  CHECK_THROWS(opt.step(0.0));
}

TEST_CASE("onecycle schedule: floor, peak at warmup end, floor at the tail") {
  const double peak = 1.0;
  CHECK(onecycle_lr(0, 100, peak) == doctest::Approx(peak / 1e4));
  CHECK(onecycle_lr(15, 100, peak) == doctest::Approx(peak));  // 15% warmup
  CHECK(onecycle_lr(100, 100, peak) == doctest::Approx(peak / 1e4));
  CHECK(onecycle_lr(5000, 100, peak) == doctest::Approx(peak / 1e4));

  for (int s = 1; s <= 15; ++s)
    CHECK(onecycle_lr(s, 100, peak) > onecycle_lr(s - 1, 100, peak));
  for (int s = 16; s < 100; ++s)
    CHECK(onecycle_lr(s, 100, peak) < onecycle_lr(s - 1, 100, peak));
}

TEST_CASE("target stats are the column moments of the training targets") {
  FeatureBundle a, b;
  a.targets = {1.0, 10.0};
  b.targets = {3.0, 10.0};
  std::vector<FeatureBundle> data = {a, b};
  TargetStats st = compute_target_stats(data);
  CHECK(st.mean[0] == doctest::Approx(2.0));
  CHECK(st.stddev[0] == doctest::Approx(1.0));
  CHECK(st.mean[1] == doctest::Approx(10.0));
  CHECK(st.stddev[1] == doctest::Approx(0.0));
}

TEST_CASE("trainable parameter list is the model plus the balancer alpha") {
  Rng rng(1);
  CrmfModel model = CrmfModel::init(tiny_model_config(), rng);
  AdaptiveBalancer bal(kLossComponents);
  auto params = trainable_parameters(model, bal);
  CHECK(params.size() == model.parameters().size() + 1);
  CHECK(params.back().node() == bal.alpha().node());
  for (const auto& p : params) CHECK(p.requires_grad());
}

TEST_CASE("checkpoints restore parameters, optimizer, balancer and rng") {
  TempDir tmp;
  Rng rng(42);
  CrmfModel model = CrmfModel::init(tiny_model_config(), rng);
  AdaptiveBalancer bal(kLossComponents);
  auto params = trainable_parameters(model, bal);
  AdamW opt(params);

  // a few fake steps to populate optimizer and balancer state
  for (int s = 0; s < 3; ++s) {
    for (auto& p : params) {
      p.zero_grad();
      auto& g = p.node()->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i)
        g[i] = 0.01 * static_cast<double>((i + s) % 5);
    }
    opt.step(1e-3);
    std::vector<Tensor> comps;
    for (int k = 0; k < kLossComponents; ++k)
      comps.push_back(Tensor::scalar(0.1 * (k + s + 1)));
    bal.combine(comps);
  }

  TrainProgress prog;
  prog.epoch = 2;
  prog.global_step = opt.step_count();
  prog.best_val = 0.123;
  prog.patience_left = 3;
  save_checkpoint(tmp.str("state.ckpt"), model, &opt, &bal, &rng, prog);

  // identical state writes identical bytes
  save_checkpoint(tmp.str("again.ckpt"), model, &opt, &bal, &rng, prog);
  std::ifstream f1(tmp.str("state.ckpt"), std::ios::binary);
  std::ifstream f2(tmp.str("again.ckpt"), std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  LoadedCheckpoint ck = load_checkpoint(tmp.str("state.ckpt"));
  CHECK(ck.progress.epoch == 2);
  CHECK(ck.progress.best_val == doctest::Approx(0.123));
  CHECK(ck.progress.patience_left == 3);
  REQUIRE(ck.has_optimizer);
  REQUIRE(ck.has_balancer);
  CHECK(ck.rng_state == rng.serialize());

  CrmfModel restored = model_from_checkpoint(ck);
  auto orig = model.named_parameters();
  auto redo = restored.named_parameters();
  REQUIRE(orig.size() == redo.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == redo[i].first);
    CHECK(orig[i].second.raw() == redo[i].second.raw());
  }

  AdaptiveBalancer bal2(kLossComponents);
  restore_balancer(bal2, ck);
  CHECK(bal2.steps() == bal.steps());
  CHECK(bal2.ema_mean() == bal.ema_mean());
  CHECK(bal2.ema_sq() == bal.ema_sq());
  CHECK(bal2.alpha().raw() == bal.alpha().raw());

  auto params2 = trainable_parameters(restored, bal2);
  AdamW opt2(params2);
  restore_optimizer(opt2, ck);
  CHECK(opt2.step_count() == opt.step_count());
  CHECK(opt2.moment1() == opt.moment1());
  CHECK(opt2.moment2() == opt.moment2());

  // one more identical step on both moves them identically
  for (auto ps : {&params, &params2})
    for (auto& p : *ps) {
      p.zero_grad();
      auto& g = p.node()->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] = 0.02;
    }
  opt.step(1e-3);
  opt2.step(1e-3);
  for (size_t i = 0; i < params.size(); ++i)
    CHECK(params[i].raw() == params2[i].raw());
}

TEST_CASE("checkpoint loading rejects a truncated file") {
  TempDir tmp;
  std::ofstream(tmp.str("junk.ckpt"), std::ios::binary) << "GMOECKPTxx";
  CHECK_THROWS(load_checkpoint(tmp.str("junk.ckpt")));
}

TEST_CASE("two-epoch training run writes checkpoints and a complete log") {
  TempDir tmp;
  SyntheticData data = synth_generate(tiny_data_spec());
  std::vector<FeatureBundle> train(data.bundles.begin(),
                                   data.bundles.begin() + 24);
  std::vector<FeatureBundle> val(data.bundles.begin() + 24,
                                 data.bundles.end());

  Rng rng(9);
  CrmfModel model = CrmfModel::init(tiny_model_config(), rng);
  AdaptiveBalancer bal(kLossComponents);
  auto params = trainable_parameters(model, bal);
  AdamW opt(params);

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.accum = 2;
  cfg.seed = 9;
  cfg.peak_lr = 1e-3;
  cfg.out_dir = tmp.str("run");

  TrainProgress prog;
  TrainResult res = train_loop(model, opt, bal, rng, train, val, cfg, prog);

  REQUIRE(res.epochs.size() == 2);
  CHECK(prog.epoch == 2);
  CHECK(res.best_epoch >= 0);
  for (const auto& ep : res.epochs) {
    CHECK(std::isfinite(ep.train_loss));
    CHECK(std::isfinite(ep.val_macro_spearman));
    CHECK(ep.lr_last > 0.0);
    const double rsum =
        ep.routing_mean[0] + ep.routing_mean[1] + ep.routing_mean[2];
    CHECK(rsum == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(opt.step_count() > 0);

  CHECK(fs::exists(tmp.path / "run" / "best.ckpt"));
  CHECK(fs::exists(tmp.path / "run" / "last.ckpt"));

  std::ifstream log(tmp.str("run/train_log.jsonl"));
  REQUIRE(log.good());
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_macro_spearman"));
    CHECK(j.contains("balancer_beta"));
    ++lines;
  }
  CHECK(lines == 2);

  // a fresh model evaluates to a structurally complete report
  MetricReport rep = evaluate(model, val);
  CHECK(rep.per_target.size() == static_cast<size_t>(kNumTargets));
  CHECK(std::isfinite(rep.macro.spearman));
}

TEST_CASE("run_epochs slices training without moving the schedule horizon") {
  SyntheticData data = synth_generate(tiny_data_spec());
  std::vector<FeatureBundle> train(data.bundles.begin(),
                                   data.bundles.begin() + 24);
  std::vector<FeatureBundle> val(data.bundles.begin() + 24,
                                 data.bundles.end());

  Rng rng(9);
  CrmfModel model = CrmfModel::init(tiny_model_config(), rng);
  AdaptiveBalancer bal(kLossComponents);
  auto params = trainable_parameters(model, bal);
  AdamW opt(params);

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.run_epochs = 1;
  cfg.batch = 4;
  cfg.accum = 2;
  cfg.seed = 9;

  TrainProgress prog;
  TrainResult res = train_loop(model, opt, bal, rng, train, val, cfg, prog);
  CHECK(res.epochs.size() == 1);
  CHECK(prog.epoch == 1);

  // second slice continues from epoch 1
  TrainResult res2 = train_loop(model, opt, bal, rng, train, val, cfg, prog);
  CHECK(res2.epochs.size() == 1);
  CHECK(res2.epochs[0].epoch == 1);
  CHECK(prog.epoch == 2);
}
