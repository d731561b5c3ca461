#pragma once

// Synthetic CIFAR-format classification data for tests: per-class low-frequency
// color prototypes with random shifts, amplitude jitter and heavy pixel noise.
// The signal/noise knobs control how separable the classes are, so the base
// task lands at a moderate accuracy instead of saturating.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "mergelab/data.hpp"

namespace mergelab::testsupport {

struct SyntheticSpec {
  int num_classes = 10;
  int train_per_class = 400;
  int test_per_class = 100;
  std::uint64_t seed = 2024;
  double signal = 0.35;
  double noise = 0.9;
};

struct SyntheticData {
  std::vector<data::ImageRecord> train;
  std::vector<data::ImageRecord> test;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

// Writes records in the CIFAR-10 binary layout (label byte + 3072 pixels).
void write_cifar10_file(const std::vector<data::ImageRecord>& records,
                        const std::filesystem::path& path);

}  // namespace mergelab::testsupport
