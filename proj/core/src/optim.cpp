#include "mergelab/optim.hpp"

#include <cmath>
#include <numbers>

namespace mergelab::nn {

void ScheduleConfig::validate() const {
  if (!(lr_warmup_start > 0.0 && lr_warmup_start <= lr_peak)) {
    raise(ErrorKind::config, "schedule: need 0 < lr_warmup_start <= lr_peak");
  }
  if (!(lr_min <= lr_peak)) raise(ErrorKind::config, "schedule: need lr_min <= lr_peak");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    raise(ErrorKind::config, "schedule: need 0 <= warmup_fraction < 1");
  }
  if (total_steps < 1) raise(ErrorKind::config, "schedule: total_steps must be positive");
}

double lr_at(const ScheduleConfig& cfg, std::int64_t step) {
  cfg.validate();
  if (step < 0 || step >= cfg.total_steps) {
    raise(ErrorKind::range, "lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(cfg.total_steps) + ")");
  }
  const std::int64_t warmup = cfg.warmup_steps();
  if (step < warmup) {
    if (warmup == 1) return cfg.lr_warmup_start;
    const double t = static_cast<double>(step) / static_cast<double>(warmup - 1);
    return cfg.lr_warmup_start + (cfg.lr_peak - cfg.lr_warmup_start) * t;
  }
  const std::int64_t cosine_steps = cfg.total_steps - warmup;
  if (cosine_steps == 1) return cfg.lr_peak;
  const double p = static_cast<double>(step - warmup) / static_cast<double>(cosine_steps - 1);
  return cfg.lr_min + 0.5 * (cfg.lr_peak - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * p));
}

void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, OptimState& state, double lr,
              double momentum, double weight_decay) {
  if (grads.size() != params.size() || state.momentum.size() != params.size()) {
    raise(ErrorKind::structure, "sgd_step: gradient/state count does not match parameter count");
  }
  if (!(lr > 0.0)) raise(ErrorKind::input, "sgd_step: lr must be positive");
  const float flr = static_cast<float>(lr);
  const float fmom = static_cast<float>(momentum);
  const float fwd = static_cast<float>(weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i].tensor;
    const Tensor& g = grads[i];
    Tensor& v = state.momentum[i];
    if (!theta.same_shape(g) || !theta.same_shape(v)) {
      raise(ErrorKind::structure, "sgd_step: shape mismatch at '" + params[i].name + "' (param " +
                                      shape_to_string(theta.shape) + ", grad " +
                                      shape_to_string(g.shape) + ")");
    }
    float* tp = theta.ptr();
    const float* gp = g.ptr();
    float* vp = v.ptr();
    const std::int64_t n = theta.size();
    for (std::int64_t j = 0; j < n; ++j) {
      const float gv = gp[j] + fwd * tp[j];
      vp[j] = fmom * vp[j] + gv;
      tp[j] -= flr * vp[j];
    }
  }
  state.step_counter += 1;
}

}  // namespace mergelab::nn
