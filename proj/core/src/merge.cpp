// Built with -ffp-contract=off: the symmetry property
// interpolate(a, b, t) == interpolate(b, a, 1-t) relies on the two products
// being rounded individually before the commutative add.

#include "mergelab/merge.hpp"

#include <algorithm>
#include <cmath>

namespace mergelab::merge {

FlatVector flatten(const nn::ParamSet& params) {
  FlatVector flat;
  flat.layout.reserve(params.size());
  std::int64_t offset = 0;
  for (const auto& e : params) {
    flat.layout.push_back(LayoutEntry{e.name, e.tensor.shape, offset});
    offset += e.tensor.size();
  }
  flat.values.reserve(static_cast<std::size_t>(offset));
  for (const auto& e : params) {
    flat.values.insert(flat.values.end(), e.tensor.data.begin(), e.tensor.data.end());
  }
  return flat;
}

nn::ParamSet unflatten(const FlatVector& flat) {
  nn::ParamSet params;
  for (const LayoutEntry& le : flat.layout) {
    const std::int64_t n = nn::shape_numel(le.shape);
    if (le.offset < 0 || le.offset + n > flat.size()) {
      raise(ErrorKind::structure, "unflatten: entry '" + le.name + "' overruns the value array");
    }
    nn::Tensor t;
    t.shape = le.shape;
    t.data.assign(flat.values.begin() + le.offset, flat.values.begin() + le.offset + n);
    params.add(le.name, std::move(t));
  }
  if (params.total_count() != flat.size()) {
    raise(ErrorKind::structure, "unflatten: layout covers " + std::to_string(params.total_count()) +
                                    " of " + std::to_string(flat.size()) + " values");
  }
  return params;
}

bool same_layout(const FlatVector& a, const FlatVector& b) {
  if (a.layout.size() != b.layout.size() || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.layout.size(); ++i) {
    if (a.layout[i].name != b.layout[i].name) return false;
    if (a.layout[i].shape != b.layout[i].shape) return false;
    if (a.layout[i].offset != b.layout[i].offset) return false;
  }
  return true;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    raise(ErrorKind::input, "interpolate: alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
}

void check_layouts(const FlatVector& a, const FlatVector& b) {
  if (same_layout(a, b)) return;
  const std::size_t n = std::min(a.layout.size(), b.layout.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.layout[i].name != b.layout[i].name || a.layout[i].shape != b.layout[i].shape ||
        a.layout[i].offset != b.layout[i].offset) {
      raise(ErrorKind::structure, "interpolate: layouts differ at entry '" + a.layout[i].name +
                                      "' vs '" + b.layout[i].name + "'");
    }
  }
  raise(ErrorKind::structure, "interpolate: layouts differ in entry count (" +
                                  std::to_string(a.layout.size()) + " vs " +
                                  std::to_string(b.layout.size()) + ")");
}

void lerp_span(const float* a, const float* b, float* out, std::int64_t n, double alpha) {
  if (alpha == 0.0) {
    std::copy(a, a + n, out);
    return;
  }
  if (alpha == 1.0) {
    std::copy(b, b + n, out);
    return;
  }
  const float wa = static_cast<float>(1.0 - alpha);
  const float wb = static_cast<float>(alpha);
  for (std::int64_t i = 0; i < n; ++i) {
    const float pa = wa * a[i];
    const float pb = wb * b[i];
    out[i] = pa + pb;
  }
}

}  // namespace

FlatVector interpolate(const FlatVector& a, const FlatVector& b, double alpha) {
  check_alpha(alpha);
  check_layouts(a, b);
  FlatVector out;
  out.layout = a.layout;
  out.values.resize(a.values.size());
  lerp_span(a.values.data(), b.values.data(), out.values.data(), a.size(), alpha);
  return out;
}

nn::ParamSet interpolate_params(const nn::ParamSet& a, const nn::ParamSet& b, double alpha) {
  check_alpha(alpha);
  if (!a.same_layout(b)) {
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      if (a[i].name != b[i].name || a[i].tensor.shape != b[i].tensor.shape) {
        raise(ErrorKind::structure, "interpolate: parameter sets differ at entry '" + a[i].name +
                                        "' vs '" + b[i].name + "'");
      }
    }
    raise(ErrorKind::structure, "interpolate: parameter sets differ in entry count");
  }
  nn::ParamSet out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    nn::Tensor t = nn::Tensor::zeros(a[i].tensor.shape);
    lerp_span(a[i].tensor.ptr(), b[i].tensor.ptr(), t.ptr(), t.size(), alpha);
    out.add(a[i].name, std::move(t));
  }
  return out;
}

std::vector<double> default_alphas() {
  std::vector<double> alphas;
  alphas.reserve(11);
  for (int i = 0; i <= 10; ++i) alphas.push_back(static_cast<double>(i) / 10.0);
  return alphas;
}

void SweepSpec::validate() const {
  if (alphas.empty()) raise(ErrorKind::config, "sweep: empty alpha grid");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) {
      raise(ErrorKind::config, "sweep: alpha " + std::to_string(alphas[i]) + " outside [0, 1]");
    }
    if (i > 0 && !(alphas[i] > alphas[i - 1])) {
      raise(ErrorKind::config, "sweep: alphas must be strictly increasing");
    }
  }
}

std::vector<std::pair<double, nn::ParamSet>> sweep(const nn::ParamSet& endpoint_a,
                                                   const nn::ParamSet& endpoint_b,
                                                   const std::vector<double>& alphas) {
  const FlatVector fa = flatten(endpoint_a);
  const FlatVector fb = flatten(endpoint_b);
  check_layouts(fa, fb);
  std::vector<std::pair<double, nn::ParamSet>> out;
  out.reserve(alphas.size());
  for (double alpha : alphas) {
    out.emplace_back(alpha, unflatten(interpolate(fa, fb, alpha)));
  }
  return out;
}

}  // namespace mergelab::merge
