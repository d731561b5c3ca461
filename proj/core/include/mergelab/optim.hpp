#pragma once

#include <cstdint>
#include <vector>

#include "mergelab/tensor.hpp"

namespace mergelab::nn {

// Linear warmup followed by half-cosine decay, stepped per optimizer step.
struct ScheduleConfig {
  double lr_warmup_start = 0.004;
  double lr_peak = 0.1;
  double lr_min = 1e-5;
  double warmup_fraction = 0.05;
  std::int64_t total_steps = 0;

  std::int64_t warmup_steps() const {
    return static_cast<std::int64_t>(warmup_fraction * static_cast<double>(total_steps));
  }

  void validate() const;
};

// Learning rate for a step in [0, total_steps). Warmup covers the first
// floor(warmup_fraction * total_steps) steps, reaching lr_peak on its last
// step; the cosine phase then decays from lr_peak to lr_min at the final step.
double lr_at(const ScheduleConfig& cfg, std::int64_t step);

// SGD with classic momentum and coupled weight decay:
//   g' = g + weight_decay * theta;  v = momentum * v + g';  theta -= lr * v
void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, OptimState& state, double lr,
              double momentum, double weight_decay);

}  // namespace mergelab::nn
