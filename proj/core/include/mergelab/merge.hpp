#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mergelab/tensor.hpp"

namespace mergelab::merge {

struct LayoutEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::int64_t offset = 0;
};

// A ParamSet concatenated into one contiguous float vector plus the layout
// needed to reconstruct it bit-exactly.
struct FlatVector {
  std::vector<float> values;
  std::vector<LayoutEntry> layout;

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
};

FlatVector flatten(const nn::ParamSet& params);
nn::ParamSet unflatten(const FlatVector& flat);

bool same_layout(const FlatVector& a, const FlatVector& b);

// result = (1 - alpha) * a + alpha * b, elementwise in float32.
// alpha = 0 returns a bit-exactly, alpha = 1 returns b bit-exactly.
// By convention endpoint a is the first task's model (alpha = 0 end).
FlatVector interpolate(const FlatVector& a, const FlatVector& b, double alpha);

// Per-entry route to the same result; kept separate so the two code paths can
// be checked against each other.
nn::ParamSet interpolate_params(const nn::ParamSet& a, const nn::ParamSet& b, double alpha);

std::vector<double> default_alphas();  // 0.0, 0.1, ..., 1.0

struct SweepSpec {
  std::vector<double> alphas = default_alphas();
  std::string endpoint_a_id;
  std::string endpoint_b_id;

  void validate() const;
};

// One interpolated parameter set per alpha over in-memory endpoints.
std::vector<std::pair<double, nn::ParamSet>> sweep(const nn::ParamSet& endpoint_a,
                                                   const nn::ParamSet& endpoint_b,
                                                   const std::vector<double>& alphas);

}  // namespace mergelab::merge
