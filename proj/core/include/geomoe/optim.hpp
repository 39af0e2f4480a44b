#pragma once

#include <cstdint>
#include <vector>

#include "geomoe/tensor.hpp"

namespace geomoe {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: decay shrinks the parameter directly and
// never enters the moment estimates.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});

  // One update from the gradients currently stored on the parameters.
  // A non-finite gradient anywhere skips the whole step (state untouched)
  // and returns false.
  bool step(double lr);

  void zero_grad();

  std::int64_t step_count() const { return t_; }
  std::int64_t skipped_steps() const { return skipped_; }
  const std::vector<Tensor>& params() const { return params_; }
  const AdamWConfig& config() const { return cfg_; }

  // Checkpoint plumbing.
  std::vector<std::vector<double>>& moment1() { return m_; }
  std::vector<std::vector<double>>& moment2() { return v_; }
  const std::vector<std::vector<double>>& moment1() const { return m_; }
  const std::vector<std::vector<double>>& moment2() const { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  void set_skipped_steps(std::int64_t s) { skipped_ = s; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
  std::int64_t skipped_ = 0;
};

// OneCycle schedule: cosine ramp floor -> peak over the first 15% of steps,
// cosine decay peak -> floor over the rest, floor = peak / 1e4.
// Steps past `total` clamp to the floor.
double onecycle_lr(std::int64_t step, std::int64_t total, double peak);

}  // namespace geomoe
