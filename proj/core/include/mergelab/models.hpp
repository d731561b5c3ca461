#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mergelab/autodiff.hpp"
#include "mergelab/tensor.hpp"

namespace mergelab::models {

enum class ArchName { slim_resnet18, tiny_convnet };

std::string arch_name_to_string(ArchName a);
ArchName arch_name_from_string(const std::string& s);

struct ArchConfig {
  ArchName arch = ArchName::slim_resnet18;
  std::int64_t num_classes = 100;
  std::int64_t base_width = 0;  // 0 = architecture default (20 resnet, 8 convnet)

  std::int64_t effective_base_width() const;
  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

// Input contract shared by both architectures: 3 x 32 x 32 images.
inline constexpr std::int64_t kInputChannels = 3;
inline constexpr std::int64_t kInputSize = 32;

// Result of wiring a parameter set onto a tape: the logits plus the tape
// handle of each parameter, in ParamSet order (for reading gradients).
struct ForwardBinding {
  nn::Value logits;
  std::vector<nn::Value> param_values;
};

// Builds the forward graph for `arch` on `tape`. With `trainable` the
// parameters become tape leaves that accumulate gradients; otherwise they are
// constants (cheaper evaluation).
ForwardBinding bind_forward(nn::Tape& tape, const ArchConfig& arch, const nn::ParamSet& params,
                            nn::Tensor images, bool trainable);

// Deterministic initialization: identical (cfg, init_seed) pairs produce
// bit-identical parameter sets. Weights are fan-in-scaled uniform, biases and
// norm shifts zero, norm gains one.
nn::ParamSet build_params(const ArchConfig& cfg, std::uint64_t init_seed);

// A parameter set bound to its architecture.
struct Model {
  ArchConfig cfg;
  nn::ParamSet params;

  nn::Value forward(nn::Tape& tape, nn::Tensor images, bool trainable = false) const;
};

Model build_model(const ArchConfig& cfg, std::uint64_t init_seed);

}  // namespace mergelab::models
