#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geomoe/checkpoint.hpp"
#include "geomoe/data.hpp"
#include "geomoe/losses.hpp"
#include "geomoe/metrics.hpp"
#include "geomoe/model.hpp"
#include "geomoe/optim.hpp"
#include "geomoe/routing.hpp"

namespace geomoe {

// Loss components flowing through the adaptive balancer, in order.
inline constexpr int kLossComponents = 6;
inline constexpr std::array<const char*, kLossComponents> kLossNames = {
    "huber", "corr", "cov", "entropy", "balance", "head_reg"};

struct TrainConfig {
  int epochs = 30;     // schedule horizon; fixes the onecycle lr trajectory
  int run_epochs = -1; // epochs to run this invocation (-1 = to the horizon),
                       // for time-sliced training resumed from checkpoints
  int batch = 4;
  int accum = 8;  // micro-batches per optimizer step (effective batch 32)
  int patience = 5;
  double peak_lr = 3e-4;
  std::uint64_t seed = 1;
  LossConfig loss;
  RoutingMode routing = RoutingMode::kLearned;
  int forced_geometry = -1;     // single-geometry ablation when >= 0
  bool winsorize = true;        // soft-clip training targets (never eval)
  std::string out_dir;          // checkpoints + log destination; "" = none
};

// Per-target moments of the training split, used for winsorization.
struct TargetStats {
  std::vector<double> mean, stddev;
};

TargetStats compute_target_stats(std::span<const FeatureBundle> data);

struct EpochStats {
  int epoch = 0;
  double lr_last = 0.0;
  double train_loss = 0.0;  // mean combined loss over micro-batches
  double first_micro_loss = 0.0;
  std::array<double, kLossComponents> component_means{};
  std::vector<double> balancer_beta;
  double val_macro_spearman = 0.0;
  std::array<double, 3> routing_mean{};
  std::int64_t skipped_steps = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  double best_val = 0.0;
  int best_epoch = -1;
  bool early_stopped = false;
};

// Model parameters plus the balancer logits: the exact tensor list the
// optimizer and the checkpoints must share.
std::vector<Tensor> trainable_parameters(const CrmfModel& model,
                                         AdaptiveBalancer& balancer);

// Eval-mode predictions against raw targets.
MetricReport evaluate(const CrmfModel& model,
                      std::span<const FeatureBundle> data,
                      RoutingMode routing = RoutingMode::kLearned,
                      int forced_geometry = -1);

// Runs epochs progress.epoch .. cfg.epochs-1 (so a restored checkpoint
// resumes mid-run bit-exactly: rng, optimizer moments and balancer EMA all
// continue). Writes best.ckpt / last.ckpt and a train_log.jsonl under
// cfg.out_dir when set. Aborts with diagnostics if the loss leaves the
// finite range.
TrainResult train_loop(CrmfModel& model, AdamW& opt,
                       AdaptiveBalancer& balancer, Rng& rng,
                       std::span<const FeatureBundle> train_set,
                       std::span<const FeatureBundle> val_set,
                       const TrainConfig& cfg, TrainProgress& progress);

}  // namespace geomoe
