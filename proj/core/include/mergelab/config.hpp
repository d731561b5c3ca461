#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mergelab/data.hpp"
#include "mergelab/lab.hpp"

namespace mergelab::io {

struct DatasetConfig {
  data::CifarVariant variant = data::CifarVariant::cifar100;
  std::filesystem::path dir;
  std::vector<std::string> train_files;  // defaults derived from variant
  std::vector<std::string> test_files;
};

std::vector<std::string> default_train_files(data::CifarVariant v);
std::vector<std::string> default_test_files(data::CifarVariant v);

// Parsed, validated experiment file. Unknown keys are rejected at every
// nesting level; all numeric fields are range-checked before any compute.
struct ExperimentConfig {
  DatasetConfig dataset;
  models::ArchConfig arch;

  std::int64_t epochs = 50;
  std::int64_t batch_size = 128;
  nn::ScheduleConfig schedule;  // total_steps stays 0; derived per stage
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;  // single-stage commands (pretrain/adapt)

  lab::ProtocolSpec protocol;
  int patch_size = 5;
  double train_apply_prob = 0.5;
  std::uint64_t noise_content_seed = 12345;
  std::uint64_t chunk_split_seed = 7;
  std::uint64_t pretrain_seed = 0;

  std::filesystem::path output_dir = "results";
};

ExperimentConfig parse_config(const std::string& text, const std::string& source_name);
ExperimentConfig load_config(const std::filesystem::path& path);

// Loads the dataset named by the config and fills a LabContext over it.
// Record vectors live in the returned holder.
struct LoadedData {
  std::vector<data::ImageRecord> train;
  std::vector<data::ImageRecord> test;
};

LoadedData load_dataset(const ExperimentConfig& cfg);
lab::LabContext make_lab_context(const ExperimentConfig& cfg, const LoadedData& data,
                                 CheckpointStore* store);

}  // namespace mergelab::io
