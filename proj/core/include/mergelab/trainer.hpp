#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mergelab/data.hpp"
#include "mergelab/models.hpp"
#include "mergelab/optim.hpp"
#include "mergelab/tensor.hpp"

namespace mergelab::train {

// Data selection plus cue: one task of a protocol.
struct TaskSpec {
  enum class Selector { full, chunk };
  Selector selector = Selector::full;
  int chunk_index = -1;
  data::CueSpec cue;
  std::string label;  // e.g. "T_color"
};

struct TrainConfig {
  std::int64_t epochs = 50;
  std::int64_t batch_size = 128;
  nn::ScheduleConfig schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  // Stream index of this stage within its scenario (pretrain 1, first
  // adaptation 2, second adaptation 3). Combined with `seed` and the epoch it
  // determines shuffling, augmentation and cue coins.
  int stage_index = 1;
  TaskSpec task;

  void validate() const;
  std::uint64_t stream_seed() const;  // mix(seed, stage_index)
};

struct CheckpointMeta {
  models::ArchConfig arch;
  std::uint64_t seed = 0;
  std::vector<std::string> task_history;
  int stage_index = 0;
  std::int64_t epochs_trained = 0;
  std::string parent_id;   // empty for a fresh initialization
  std::string created_at;  // wall-clock, not part of the content id
};

struct Checkpoint {
  nn::ParamSet params;
  CheckpointMeta meta;
  std::string id;  // content hash over params + semantic meta
};

std::string checkpoint_content_id(const nn::ParamSet& params, const CheckpointMeta& meta);

// Untrained model wrapped as a checkpoint (empty task history).
Checkpoint fresh_checkpoint(const models::ArchConfig& arch, std::uint64_t init_seed);

// Per-epoch diagnostics for a completed stage.
struct StageStats {
  std::vector<double> epoch_mean_loss;
  std::int64_t steps = 0;
};

// Helper: steps for `epochs` passes over n samples with the last partial
// batch kept.
std::int64_t steps_for(std::int64_t n_samples, std::int64_t batch_size, std::int64_t epochs);

// Fills in schedule.total_steps for a stage over `view`.
nn::ScheduleConfig schedule_for(const nn::ScheduleConfig& base, std::int64_t n_samples,
                                std::int64_t batch_size, std::int64_t epochs);

// Runs one training stage (shuffled mini-batch SGD under the warmup+cosine
// schedule) and returns a new checkpoint; `init` is never modified. Fully
// deterministic in (init, cfg, view).
Checkpoint train_stage(const Checkpoint& init, const TrainConfig& cfg, const data::DatasetView& view,
                       StageStats* stats = nullptr);

enum class Scenario { incremental, parallel };

std::string scenario_to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct StagePlan {
  TrainConfig cfg;
  const data::DatasetView* view = nullptr;
};

// Produces the two endpoint checkpoints of a scenario. Parallel trains both
// tasks from `base`; incremental trains task2 from the task1 endpoint. The
// task1 endpoint is endpoint_a in both scenarios.
std::pair<Checkpoint, Checkpoint> run_scenario(Scenario scenario, const Checkpoint& base,
                                               const StagePlan& task1, const StagePlan& task2);

}  // namespace mergelab::train
