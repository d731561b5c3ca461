#include "mergelab/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

#include "mergelab/rng.hpp"

namespace mergelab {

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

}  // namespace mergelab

namespace mergelab::nn {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d <= 0) raise(ErrorKind::structure, "tensor dimension must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::int64_t> shape_in, std::vector<float> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    raise(ErrorKind::structure, "tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_to_string(shape));
  }
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  std::int64_t n = shape_numel(shape);
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(static_cast<std::size_t>(n), 0.0f);
  return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, float value) {
  Tensor t = zeros(std::move(shape));
  for (float& x : t.data) x = value;
  return t;
}

bool Tensor::all_finite() const {
  for (float x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void ParamSet::add(std::string name, Tensor tensor) {
  if (find(name) != nullptr) {
    raise(ErrorKind::structure, "duplicate parameter name '" + name + "'");
  }
  entries_.push_back(Entry{std::move(name), std::move(tensor)});
}

const Tensor* ParamSet::find(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

std::int64_t ParamSet::total_count() const {
  std::int64_t n = 0;
  for (const Entry& e : entries_) n += e.tensor.size();
  return n;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].tensor.shape != other.entries_[i].tensor.shape) return false;
  }
  return true;
}

bool ParamSet::same_values(const ParamSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i].tensor.data;
    const auto& b = other.entries_[i].tensor.data;
    for (std::size_t j = 0; j < a.size(); ++j) {
      // Bit comparison, not value comparison: -0.0f != 0.0f here.
      if (std::bit_cast<std::uint32_t>(a[j]) != std::bit_cast<std::uint32_t>(b[j])) return false;
    }
  }
  return true;
}

OptimState OptimState::like(const ParamSet& params) {
  OptimState st;
  st.momentum.reserve(params.size());
  for (const auto& e : params) {
    st.momentum.push_back(Tensor::zeros(e.tensor.shape));
  }
  st.step_counter = 0;
  return st;
}

}  // namespace mergelab::nn
