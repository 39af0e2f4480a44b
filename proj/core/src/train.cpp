#include "geomoe/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace geomoe {

TargetStats compute_target_stats(std::span<const FeatureBundle> data) {
  if (data.empty())
    throw std::invalid_argument("compute_target_stats: empty split");
  const std::size_t k = data.front().targets.size();
  if (k == 0)
    throw std::invalid_argument("compute_target_stats: unlabeled bundles");
  TargetStats st;
  st.mean.assign(k, 0.0);
  st.stddev.assign(k, 0.0);
  for (const auto& b : data) {
    if (b.targets.size() != k)
      throw std::invalid_argument(
          "compute_target_stats: inconsistent target widths");
    for (std::size_t j = 0; j < k; ++j) st.mean[j] += b.targets[j];
  }
  for (auto& m : st.mean) m /= static_cast<double>(data.size());
  for (const auto& b : data)
    for (std::size_t j = 0; j < k; ++j) {
      const double d = b.targets[j] - st.mean[j];
      st.stddev[j] += d * d;
    }
  for (auto& s : st.stddev)
    s = std::sqrt(s / static_cast<double>(data.size()));
  return st;
}

std::vector<Tensor> trainable_parameters(const CrmfModel& model,
                                         AdaptiveBalancer& balancer) {
  std::vector<Tensor> params = model.parameters();
  params.push_back(balancer.alpha());
  return params;
}

MetricReport evaluate(const CrmfModel& model,
                      std::span<const FeatureBundle> data,
                      RoutingMode routing, int forced_geometry) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty split");
  const int k = model.cfg.targets;
  std::vector<double> pred, truth;
  pred.reserve(data.size() * static_cast<std::size_t>(k));
  truth.reserve(pred.capacity());
  NoGradGuard ng;
  ForwardOptions opt;
  opt.train = false;
  opt.routing = routing;
  opt.forced_geometry = forced_geometry;
  for (const auto& b : data) {
    if (static_cast<int>(b.targets.size()) != k)
      throw std::invalid_argument("evaluate: clip '" + b.clip_id +
                                  "' lacks the " + std::to_string(k) +
                                  " target values");
    ForwardOutput out = crmf_forward(model, b, opt);
    for (int j = 0; j < k; ++j) pred.push_back(out.pred.at(j));
    truth.insert(truth.end(), b.targets.begin(), b.targets.end());
  }
  return macro_report(pred, truth, static_cast<int>(data.size()), k);
}

namespace {

struct MicroBatchLoss {
  Tensor total;
  std::array<double, kLossComponents> components{};
  std::array<double, 3> routing_sum{};
};

MicroBatchLoss micro_batch_loss(CrmfModel& model, AdaptiveBalancer& balancer,
                                Rng& rng,
                                std::span<const FeatureBundle> train_set,
                                std::span<const std::vector<double>> targets,
                                std::span<const std::size_t> batch_idx,
                                const TrainConfig& cfg) {
  const int k = model.cfg.targets;
  ForwardOptions fopt;
  fopt.train = true;
  fopt.routing = cfg.routing;
  fopt.forced_geometry = cfg.forced_geometry;
  fopt.rng = &rng;

  std::vector<Tensor> pred_rows, target_rows, r_rows;
  std::vector<Tensor> entropy_terms;
  MicroBatchLoss out;
  for (std::size_t idx : batch_idx) {
    ForwardOutput fwd = crmf_forward(model, train_set[idx], fopt);
    pred_rows.push_back(reshape(fwd.pred, {1, k}));
    target_rows.push_back(
        Tensor::from_data({1, k}, targets[idx]));
    r_rows.push_back(reshape(fwd.routing, {1, 3}));
    entropy_terms.push_back(
        routing_entropy_loss(fwd.routing, cfg.loss.lambda_entropy));
    for (int g = 0; g < 3; ++g)
      out.routing_sum[static_cast<std::size_t>(g)] +=
          fwd.routing.at(g);
  }
  Tensor pred = concat_rows(pred_rows);
  Tensor target = concat_rows(target_rows);
  Tensor batch_r = concat_rows(r_rows);

  Tensor entropy = Tensor::scalar(0.0);
  for (const auto& e : entropy_terms) entropy = add(entropy, e);
  entropy = mul_scalar(entropy, 1.0 / static_cast<double>(batch_idx.size()));

  const auto adapters = model.adapter_weights();
  const std::array<Tensor, kLossComponents> comps = {
      huber_loss(pred, target, cfg.loss.huber_delta),
      corr_boost_loss(pred, target, cfg.loss.lambda_corr),
      cov_align_loss(pred, target, cfg.loss.lambda_cov),
      entropy,
      load_balance_loss(batch_r, cfg.loss.lambda_balance),
      head_regularization(adapters, cfg.loss.head_reg_coeff),
  };
  for (int c = 0; c < kLossComponents; ++c)
    out.components[static_cast<std::size_t>(c)] =
        comps[static_cast<std::size_t>(c)].item();
  out.total = balancer.combine(comps);
  return out;
}

}  // namespace

TrainResult train_loop(CrmfModel& model, AdamW& opt,
                       AdaptiveBalancer& balancer, Rng& rng,
                       std::span<const FeatureBundle> train_set,
                       std::span<const FeatureBundle> val_set,
                       const TrainConfig& cfg, TrainProgress& progress) {
  if (train_set.empty())
    throw std::invalid_argument("train_loop: empty training split");
  if (cfg.batch < 2)
    throw std::invalid_argument(
        "train_loop: batch must be >= 2 (correlation losses need rows)");
  if (cfg.accum < 1 || cfg.epochs < 1)
    throw std::invalid_argument("train_loop: accum and epochs must be >= 1");

  const int k = model.cfg.targets;
  const TargetStats stats = compute_target_stats(train_set);

  // Training targets, winsorized in sigma units of the training split; raw
  // targets are kept for every evaluation.
  std::vector<std::vector<double>> train_targets(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto& y = train_set[i].targets;
    if (static_cast<int>(y.size()) != k)
      throw std::invalid_argument("train_loop: clip '" +
                                  train_set[i].clip_id +
                                  "' lacks target values");
    auto& out = train_targets[i];
    out.resize(y.size());
    for (std::size_t j = 0; j < y.size(); ++j)
      out[j] = cfg.winsorize
                   ? winsorize_raw(y[j], stats.mean[j], stats.stddev[j],
                                   cfg.loss.winsor_theta,
                                   cfg.loss.winsor_scale)
                   : y[j];
  }

  // Micro-batch count is a function of the split size alone, so the LR
  // schedule is identical in a resumed run.
  const std::size_t n = train_set.size();
  std::size_t micro_per_epoch = n / static_cast<std::size_t>(cfg.batch);
  const std::size_t rem = n % static_cast<std::size_t>(cfg.batch);
  if (rem >= 2) ++micro_per_epoch;  // a trailing singleton is dropped
  if (micro_per_epoch == 0)
    throw std::invalid_argument("train_loop: fewer than batch-size clips");
  const std::size_t macro_per_epoch =
      (micro_per_epoch + static_cast<std::size_t>(cfg.accum) - 1) /
      static_cast<std::size_t>(cfg.accum);
  const std::int64_t total_macro =
      static_cast<std::int64_t>(macro_per_epoch) * cfg.epochs;

  if (progress.epoch == 0) {
    progress.patience_left = cfg.patience;
    progress.best_val = std::numeric_limits<double>::lowest();
  }

  const bool logging = !cfg.out_dir.empty();
  if (logging) std::filesystem::create_directories(cfg.out_dir);
  auto ckpt_path = [&](const char* name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
  };

  TrainResult result;
  result.best_val = progress.best_val;

  const int last_epoch =
      cfg.run_epochs < 0
          ? cfg.epochs
          : std::min(cfg.epochs, progress.epoch + cfg.run_epochs);
  for (int epoch = progress.epoch; epoch < last_epoch; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    EpochStats es;
    es.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t micro_done = 0;
    std::size_t clips_seen = 0;
    opt.zero_grad();
    std::size_t micro_in_macro = 0;

    for (std::size_t start = 0; start < n && n - start >= 2;
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.batch));
      std::span<const std::size_t> batch_idx(order.data() + start,
                                             stop - start);
      MicroBatchLoss micro;
      try {
        micro = micro_batch_loss(model, balancer, rng, train_set,
                                 train_targets, batch_idx, cfg);
      } catch (const std::exception& e) {
        throw std::runtime_error(
            "train_loop: aborted at epoch " + std::to_string(epoch) +
            ", micro-batch " + std::to_string(micro_done) + ": " + e.what());
      }
      const double value = micro.total.item();
      if (!std::isfinite(value))
        throw std::runtime_error("train_loop: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", micro-batch " +
                                 std::to_string(micro_done));
      if (micro_done == 0) es.first_micro_loss = value;
      loss_sum += value;
      for (int c = 0; c < kLossComponents; ++c)
        es.component_means[static_cast<std::size_t>(c)] +=
            micro.components[static_cast<std::size_t>(c)];
      for (int g = 0; g < 3; ++g)
        es.routing_mean[static_cast<std::size_t>(g)] +=
            micro.routing_sum[static_cast<std::size_t>(g)];
      clips_seen += batch_idx.size();

      backward(mul_scalar(micro.total, 1.0 / static_cast<double>(cfg.accum)));
      ++micro_done;
      ++micro_in_macro;
      const bool epoch_ends = stop >= n || n - stop < 2;
      if (micro_in_macro == static_cast<std::size_t>(cfg.accum) ||
          epoch_ends) {
        const double lr =
            onecycle_lr(progress.global_step, total_macro, cfg.peak_lr);
        opt.step(lr);
        opt.zero_grad();
        ++progress.global_step;
        micro_in_macro = 0;
        es.lr_last = lr;
      }
      if (epoch_ends) break;
    }

    es.train_loss = loss_sum / static_cast<double>(micro_done);
    for (auto& c : es.component_means) c /= static_cast<double>(micro_done);
    for (auto& g : es.routing_mean) g /= static_cast<double>(clips_seen);
    es.balancer_beta = balancer.last_weights();
    es.skipped_steps = opt.skipped_steps();

    if (!val_set.empty()) {
      const MetricReport rep =
          evaluate(model, val_set, cfg.routing, cfg.forced_geometry);
      es.val_macro_spearman = rep.macro.spearman;
    }

    progress.epoch = epoch + 1;
    bool improved = false;
    if (!val_set.empty()) {
      if (es.val_macro_spearman > progress.best_val) {
        progress.best_val = es.val_macro_spearman;
        progress.patience_left = cfg.patience;
        result.best_val = progress.best_val;
        result.best_epoch = epoch;
        improved = true;
      } else {
        --progress.patience_left;
      }
    }

    if (logging) {
      if (improved)
        save_checkpoint(ckpt_path("best.ckpt"), model, &opt, &balancer, &rng,
                        progress);
      save_checkpoint(ckpt_path("last.ckpt"), model, &opt, &balancer, &rng,
                      progress);
      nlohmann::ordered_json line;
      line["epoch"] = es.epoch;
      line["lr"] = es.lr_last;
      line["train_loss"] = es.train_loss;
      for (int c = 0; c < kLossComponents; ++c)
        line[kLossNames[static_cast<std::size_t>(c)]] =
            es.component_means[static_cast<std::size_t>(c)];
      line["balancer_beta"] = es.balancer_beta;
      line["routing_mean"] = es.routing_mean;
      line["val_macro_spearman"] = es.val_macro_spearman;
      line["skipped_steps"] = es.skipped_steps;
      std::ofstream log(ckpt_path("train_log.jsonl"), std::ios::app);
      log << line.dump() << "\n";
    }

    result.epochs.push_back(std::move(es));
    if (!val_set.empty() && progress.patience_left < 0) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace geomoe
