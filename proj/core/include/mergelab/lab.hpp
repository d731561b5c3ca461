#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mergelab/checkpoint_io.hpp"
#include "mergelab/data.hpp"
#include "mergelab/merge.hpp"
#include "mergelab/trainer.hpp"

namespace mergelab::lab {

enum class ProtocolName {
  task_specific,    // T_color then T_noise, full data
  shared,           // T_color twice, full data
  reverse,          // T_noise then T_color, full data
  chunking,         // pretrain chunk 1; chunk 2 + color; chunk 3 + noise
  chunking_shared,  // pretrain chunk 1; chunk 2 + color; chunk 3 + color
};

std::string protocol_to_string(ProtocolName p);
ProtocolName protocol_from_string(const std::string& s);

enum class EvalCondition { color_cue, noise_cue, no_cue };

std::string condition_to_string(EvalCondition c);
EvalCondition condition_from_string(const std::string& s);

// The shared-cue protocols report only the color-cue column; the rest report
// all three conditions.
std::vector<EvalCondition> default_conditions(ProtocolName p);

struct ProtocolSpec {
  ProtocolName name = ProtocolName::task_specific;
  std::vector<train::Scenario> scenarios = {train::Scenario::incremental, train::Scenario::parallel};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  // Chunking re-pretrains under each run seed; the main protocols reuse one
  // fixed pre-trained checkpoint across seeds.
  std::optional<bool> pretrain_per_seed;
  std::vector<EvalCondition> eval_conditions;  // empty = protocol default
  std::vector<double> alphas = merge::default_alphas();

  bool effective_pretrain_per_seed() const;
  std::vector<EvalCondition> effective_conditions() const;
  void validate() const;
};

struct ResultRow {
  std::string protocol;
  std::string scenario;
  std::string condition;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // fraction in [0, 1]
};

struct AggregateKey {
  std::string scenario;
  std::string condition;
  double alpha = 0.0;

  auto operator<=>(const AggregateKey&) const = default;
};

struct AggregateCell {
  double mean = 0.0;
  std::optional<double> stderr_;  // absent when n == 1
  int n = 0;
};

struct SweepResult {
  std::string protocol;
  std::string run_id;
  std::vector<ResultRow> rows;
  std::map<AggregateKey, AggregateCell> aggregates;
};

// Mean and standard error (sample std / sqrt(n)) per (scenario, condition,
// alpha) cell. Raises if any cell is missing a seed.
void aggregate(SweepResult& result);

// Everything a protocol run needs besides the protocol itself.
struct LabContext {
  models::ArchConfig arch;
  std::int64_t epochs = 50;
  std::int64_t batch_size = 128;
  nn::ScheduleConfig schedule;  // total_steps ignored; filled per stage
  double momentum = 0.9;
  double weight_decay = 5e-4;

  const std::vector<data::ImageRecord>* train_records = nullptr;
  const std::vector<data::ImageRecord>* test_records = nullptr;

  int patch_size = 5;
  double train_apply_prob = 0.5;
  std::uint64_t noise_content_seed = 12345;
  std::uint64_t chunk_split_seed = 7;
  std::uint64_t pretrain_seed = 0;

  io::CheckpointStore* store = nullptr;  // optional stage cache / persistence
};

// Cue content for an evaluation condition, applied deterministically
// (p = 1 for cue conditions, p = 0 for no_cue).
data::CueSpec condition_cue(EvalCondition c, const LabContext& ctx);

// Top-1 accuracy over the full test set, no augmentation.
double evaluate(const nn::ParamSet& params, const models::ArchConfig& arch,
                const data::CueSpec& condition, const std::vector<data::ImageRecord>& test_records);

// Content hash identifying a (protocol, context) run; used for run
// directories and idempotent re-runs.
std::string run_content_id(const ProtocolSpec& spec, const LabContext& ctx);

// Full protocol: pre-train, adapt per scenario and seed, sweep the alpha
// grid, evaluate each merged model under every condition, aggregate.
SweepResult run_protocol(const ProtocolSpec& spec, const LabContext& ctx);

// Single stages for the CLI. Pre-training honors the protocol's data
// selection (full set, or chunk 1 for the chunking protocols).
train::Checkpoint run_pretrain(const ProtocolSpec& spec, const LabContext& ctx, std::uint64_t seed);

// One cue-adaptation stage on the full training set. task_label is
// "T_color" or "T_noise".
train::Checkpoint run_adapt(const LabContext& ctx, const train::Checkpoint& base,
                            const std::string& task_label, std::uint64_t seed);

}  // namespace mergelab::lab
