#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mergelab/errors.hpp"

namespace mergelab::nn {

// Dense row-major float32 tensor. Plain value type: copy/move do what vectors do.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_in, std::vector<float> data_in);

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, float value);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_to_string(const std::vector<std::int64_t>& shape);

// Ordered, named collection of tensors: the unit of training, checkpointing
// and merging. Entry order is fixed by the architecture that built it.
class ParamSet {
public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(std::string name, Tensor tensor);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  const Tensor* find(std::string_view name) const;
  std::int64_t total_count() const;

  // Same names, same order, same shapes.
  bool same_layout(const ParamSet& other) const;
  // Layout plus bit-identical data.
  bool same_values(const ParamSet& other) const;

private:
  std::vector<Entry> entries_;
};

// SGD momentum buffers mirroring a ParamSet, plus the update counter.
struct OptimState {
  std::vector<Tensor> momentum;
  std::int64_t step_counter = 0;

  static OptimState like(const ParamSet& params);
};

}  // namespace mergelab::nn
