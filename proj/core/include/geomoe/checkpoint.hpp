#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "geomoe/losses.hpp"
#include "geomoe/model.hpp"
#include "geomoe/optim.hpp"
#include "geomoe/rng.hpp"

namespace geomoe {

struct TrainProgress {
  int epoch = 0;                // epochs completed
  std::int64_t global_step = 0; // optimizer macro-steps taken
  double best_val = std::numeric_limits<double>::lowest();
  int patience_left = 5;
};

// Single-file checkpoint: magic "GMOECKPT", u32 version, u32 header length,
// JSON header (model config, named parameter table with shapes and offsets,
// optimizer/balancer/rng/progress state), then a little-endian float64
// payload holding parameters followed by both optimizer moment arrays in the
// same order. Saving the same state twice produces identical bytes.
void save_checkpoint(const std::string& path, const CrmfModel& model,
                     const AdamW* opt = nullptr,
                     const AdaptiveBalancer* balancer = nullptr,
                     const Rng* rng = nullptr,
                     const TrainProgress& progress = {});

struct LoadedCheckpoint {
  ModelConfig config;
  std::vector<std::pair<std::string, std::vector<double>>> params;
  TrainProgress progress;

  bool has_optimizer = false;
  std::int64_t opt_steps = 0;
  std::int64_t opt_skipped = 0;
  std::vector<std::vector<double>> moment1, moment2;

  bool has_balancer = false;
  std::int64_t balancer_steps = 0;
  std::vector<double> balancer_mu, balancer_q;

  std::string rng_state;  // empty when the checkpoint carried none
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Rebuilds a model from the stored config and fills every named parameter;
// missing, unknown, or misshapen entries raise errors naming the parameter.
CrmfModel model_from_checkpoint(const LoadedCheckpoint& ckpt);

// The optimizer must have been constructed over the same parameter list
// (model parameters, then the balancer alpha when present).
void restore_optimizer(AdamW& opt, const LoadedCheckpoint& ckpt);
void restore_balancer(AdaptiveBalancer& balancer,
                      const LoadedCheckpoint& ckpt);

}  // namespace geomoe
