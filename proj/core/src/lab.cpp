#include "mergelab/lab.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "mergelab/autodiff.hpp"
#include "mergelab/rng.hpp"

namespace mergelab::lab {

std::string protocol_to_string(ProtocolName p) {
  switch (p) {
    case ProtocolName::task_specific: return "task_specific";
    case ProtocolName::shared: return "shared";
    case ProtocolName::reverse: return "reverse";
    case ProtocolName::chunking: return "chunking";
    case ProtocolName::chunking_shared: return "chunking_shared";
  }
  raise(ErrorKind::config, "unknown protocol enum value");
}

ProtocolName protocol_from_string(const std::string& s) {
  if (s == "task_specific") return ProtocolName::task_specific;
  if (s == "shared") return ProtocolName::shared;
  if (s == "reverse") return ProtocolName::reverse;
  if (s == "chunking") return ProtocolName::chunking;
  if (s == "chunking_shared") return ProtocolName::chunking_shared;
  raise(ErrorKind::config, "unknown protocol '" + s + "'");
}

std::string condition_to_string(EvalCondition c) {
  switch (c) {
    case EvalCondition::color_cue: return "color_cue";
    case EvalCondition::noise_cue: return "noise_cue";
    case EvalCondition::no_cue: return "no_cue";
  }
  raise(ErrorKind::config, "unknown eval condition enum value");
}

EvalCondition condition_from_string(const std::string& s) {
  if (s == "color_cue") return EvalCondition::color_cue;
  if (s == "noise_cue") return EvalCondition::noise_cue;
  if (s == "no_cue") return EvalCondition::no_cue;
  raise(ErrorKind::config, "unknown eval condition '" + s + "'");
}

std::vector<EvalCondition> default_conditions(ProtocolName p) {
  if (p == ProtocolName::shared || p == ProtocolName::chunking_shared) {
    return {EvalCondition::color_cue};
  }
  return {EvalCondition::color_cue, EvalCondition::noise_cue, EvalCondition::no_cue};
}

bool ProtocolSpec::effective_pretrain_per_seed() const {
  if (pretrain_per_seed.has_value()) return *pretrain_per_seed;
  return name == ProtocolName::chunking || name == ProtocolName::chunking_shared;
}

std::vector<EvalCondition> ProtocolSpec::effective_conditions() const {
  return eval_conditions.empty() ? default_conditions(name) : eval_conditions;
}

void ProtocolSpec::validate() const {
  if (scenarios.empty()) raise(ErrorKind::config, "protocol: no scenarios selected");
  if (seeds.empty()) raise(ErrorKind::config, "protocol: no seeds");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < seeds.size(); ++j) {
      if (seeds[i] == seeds[j]) raise(ErrorKind::config, "protocol: duplicate seed");
    }
  }
  merge::SweepSpec sw;
  sw.alphas = alphas;
  sw.validate();
}

void aggregate(SweepResult& result) {
  result.aggregates.clear();
  std::map<AggregateKey, std::vector<double>> cells;
  std::map<AggregateKey, std::vector<std::uint64_t>> cell_seeds;
  for (const ResultRow& r : result.rows) {
    AggregateKey key{r.scenario, r.condition, r.alpha};
    cells[key].push_back(r.accuracy);
    cell_seeds[key].push_back(r.seed);
  }
  std::size_t expected = 0;
  for (const auto& [key, accs] : cells) {
    if (expected == 0) expected = accs.size();
    if (accs.size() != expected) {
      raise(ErrorKind::compute, "aggregate: cell (" + key.scenario + ", " + key.condition + ", " +
                                    std::to_string(key.alpha) + ") has " +
                                    std::to_string(accs.size()) + " rows, expected " +
                                    std::to_string(expected));
    }
    AggregateCell cell;
    cell.n = static_cast<int>(accs.size());
    double sum = 0.0;
    for (double a : accs) sum += a;
    cell.mean = sum / static_cast<double>(cell.n);
    if (cell.n > 1) {
      double ss = 0.0;
      for (double a : accs) ss += (a - cell.mean) * (a - cell.mean);
      const double sample_std = std::sqrt(ss / static_cast<double>(cell.n - 1));
      cell.stderr_ = sample_std / std::sqrt(static_cast<double>(cell.n));
    }
    result.aggregates[key] = cell;
  }
}

data::CueSpec condition_cue(EvalCondition c, const LabContext& ctx) {
  switch (c) {
    case EvalCondition::color_cue:
      return data::make_color_cue(static_cast<int>(ctx.arch.num_classes), ctx.patch_size,
                                  data::CuePosition::top_left, 1.0);
    case EvalCondition::noise_cue:
      return data::make_noise_cue(static_cast<int>(ctx.arch.num_classes), ctx.patch_size,
                                  data::CuePosition::bottom_right, 1.0, ctx.noise_content_seed);
    case EvalCondition::no_cue: return data::no_cue();
  }
  raise(ErrorKind::config, "unknown eval condition enum value");
}

double evaluate(const nn::ParamSet& params, const models::ArchConfig& arch,
                const data::CueSpec& condition, const std::vector<data::ImageRecord>& test_records) {
  if (test_records.empty()) raise(ErrorKind::input, "evaluate: empty test set");
  constexpr std::int64_t kEvalBatch = 256;
  data::DatasetView view(test_records, /*augment_enabled=*/false, condition, /*rng_seed=*/0);
  auto stream = view.epoch(0);

  std::int64_t correct = 0, total = 0;
  std::vector<data::DatasetView::Sample> samples;
  samples.reserve(kEvalBatch);
  data::DatasetView::Sample s;
  bool more = true;
  while (more) {
    samples.clear();
    while (static_cast<std::int64_t>(samples.size()) < kEvalBatch && (more = stream.next(s))) {
      samples.push_back(s);
    }
    if (samples.empty()) break;
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    nn::Tensor batch =
        nn::Tensor::zeros({n, models::kInputChannels, models::kInputSize, models::kInputSize});
    float* out = batch.ptr();
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& px = samples[i].pixels;
      float* dst = out + i * data::kImageBytes;
      for (int j = 0; j < data::kImageBytes; ++j) {
        dst[j] = static_cast<float>(px[j]) * (1.0f / 255.0f);
      }
    }
    nn::Tape tape;
    nn::Value logits =
        models::bind_forward(tape, arch, params, std::move(batch), /*trainable=*/false).logits;
    const nn::Tensor& lv = logits.val();
    const std::int64_t classes = lv.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
      const float* row = lv.ptr() + i * classes;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < classes; ++j) {
        if (row[j] > row[best]) best = j;
      }
      if (best == samples[i].label) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

struct TaskSetup {
  train::TaskSpec spec;
  std::vector<std::int32_t> indices;  // record subset (empty = all)
};

struct ProtocolPlan {
  TaskSetup pretrain;
  TaskSetup task1;
  TaskSetup task2;
};

ProtocolPlan make_plan(const ProtocolSpec& spec, const LabContext& ctx) {
  const int classes = static_cast<int>(ctx.arch.num_classes);
  const auto color_tl = [&](double p) {
    return data::make_color_cue(classes, ctx.patch_size, data::CuePosition::top_left, p);
  };
  const auto noise_br = [&](double p) {
    return data::make_noise_cue(classes, ctx.patch_size, data::CuePosition::bottom_right, p,
                                ctx.noise_content_seed);
  };
  const double p = ctx.train_apply_prob;

  ProtocolPlan plan;
  plan.pretrain.spec.selector = train::TaskSpec::Selector::full;
  plan.pretrain.spec.cue = data::no_cue();
  plan.pretrain.spec.label = "pretrain";

  const bool chunked =
      spec.name == ProtocolName::chunking || spec.name == ProtocolName::chunking_shared;
  if (chunked) {
    data::ChunkSplit split = data::chunk_split(*ctx.train_records, 3, ctx.chunk_split_seed);
    plan.pretrain.indices = split.chunk_indices(0);
    plan.pretrain.spec.selector = train::TaskSpec::Selector::chunk;
    plan.pretrain.spec.chunk_index = 0;
    plan.pretrain.spec.label = "pretrain@chunk1";
    plan.task1.indices = split.chunk_indices(1);
    plan.task1.spec.selector = train::TaskSpec::Selector::chunk;
    plan.task1.spec.chunk_index = 1;
    plan.task2.indices = split.chunk_indices(2);
    plan.task2.spec.selector = train::TaskSpec::Selector::chunk;
    plan.task2.spec.chunk_index = 2;
  }

  switch (spec.name) {
    case ProtocolName::task_specific:
      plan.task1.spec.cue = color_tl(p);
      plan.task1.spec.label = "T_color";
      plan.task2.spec.cue = noise_br(p);
      plan.task2.spec.label = "T_noise";
      break;
    case ProtocolName::shared:
      plan.task1.spec.cue = color_tl(p);
      plan.task1.spec.label = "T_color";
      plan.task2.spec.cue = color_tl(p);
      plan.task2.spec.label = "T_color";
      break;
    case ProtocolName::reverse:
      plan.task1.spec.cue = noise_br(p);
      plan.task1.spec.label = "T_noise";
      plan.task2.spec.cue = color_tl(p);
      plan.task2.spec.label = "T_color";
      break;
    case ProtocolName::chunking:
      plan.task1.spec.cue = color_tl(p);
      plan.task1.spec.label = "T_color@chunk2";
      plan.task2.spec.cue = noise_br(p);
      plan.task2.spec.label = "T_noise@chunk3";
      break;
    case ProtocolName::chunking_shared:
      plan.task1.spec.cue = color_tl(p);
      plan.task1.spec.label = "T_color@chunk2";
      plan.task2.spec.cue = color_tl(p);
      plan.task2.spec.label = "T_color@chunk3";
      break;
  }
  return plan;
}

data::DatasetView view_for(const TaskSetup& task, const LabContext& ctx, std::uint64_t seed,
                           int stage_index) {
  const std::uint64_t view_seed = mix_seed(seed, static_cast<std::uint64_t>(stage_index));
  if (task.indices.empty()) {
    return data::DatasetView(*ctx.train_records, /*augment_enabled=*/true, task.spec.cue, view_seed);
  }
  return data::DatasetView(*ctx.train_records, task.indices, /*augment_enabled=*/true,
                           task.spec.cue, view_seed);
}

train::TrainConfig config_for(const TaskSetup& task, const LabContext& ctx, std::uint64_t seed,
                              int stage_index, std::int64_t n_samples) {
  train::TrainConfig cfg;
  cfg.epochs = ctx.epochs;
  cfg.batch_size = ctx.batch_size;
  cfg.schedule = train::schedule_for(ctx.schedule, n_samples, ctx.batch_size, ctx.epochs);
  cfg.momentum = ctx.momentum;
  cfg.weight_decay = ctx.weight_decay;
  cfg.seed = seed;
  cfg.stage_index = stage_index;
  cfg.task = task.spec;
  return cfg;
}

std::string stage_cache_key(const std::string& parent_id, const train::TrainConfig& cfg,
                            const data::DatasetView& view) {
  Fnv1a64 h;
  h.update(parent_id.data(), parent_id.size());
  h.update_value(cfg.epochs);
  h.update_value(cfg.batch_size);
  h.update_value(cfg.schedule.lr_warmup_start);
  h.update_value(cfg.schedule.lr_peak);
  h.update_value(cfg.schedule.lr_min);
  h.update_value(cfg.schedule.warmup_fraction);
  h.update_value(cfg.schedule.total_steps);
  h.update_value(cfg.momentum);
  h.update_value(cfg.weight_decay);
  h.update_value(cfg.seed);
  h.update_value(cfg.stage_index);
  h.update(cfg.task.label.data(), cfg.task.label.size());
  h.update_value(view.fingerprint());
  return to_hex(h.digest());
}

// train_stage with memoization: in-process map first, then the optional
// on-disk store.
class StageRunner {
public:
  explicit StageRunner(const LabContext& ctx) : ctx_(ctx) {}

  const train::Checkpoint& run(const train::Checkpoint& init, const train::TrainConfig& cfg,
                               const data::DatasetView& view) {
    const std::string key = stage_cache_key(init.id, cfg, view);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    if (ctx_.store != nullptr) {
      if (auto id = ctx_.store->find_stage(key)) {
        return memo_.emplace(key, ctx_.store->load(*id)).first->second;
      }
    }
    train::Checkpoint ck = train::train_stage(init, cfg, view);
    if (ctx_.store != nullptr) {
      ctx_.store->save(ck);
      ctx_.store->record_stage(key, ck.id);
    }
    return memo_.emplace(key, std::move(ck)).first->second;
  }

private:
  const LabContext& ctx_;
  std::unordered_map<std::string, train::Checkpoint> memo_;
};

}  // namespace

std::string run_content_id(const ProtocolSpec& spec, const LabContext& ctx) {
  Fnv1a64 h;
  const std::string proto = protocol_to_string(spec.name);
  h.update(proto.data(), proto.size());
  for (train::Scenario s : spec.scenarios) {
    const std::string t = train::scenario_to_string(s);
    h.update(t.data(), t.size());
  }
  for (std::uint64_t s : spec.seeds) h.update_value(s);
  h.update_value(spec.effective_pretrain_per_seed());
  for (EvalCondition c : spec.effective_conditions()) h.update_value(static_cast<int>(c));
  for (double a : spec.alphas) h.update_value(a);

  const std::string arch = models::arch_name_to_string(ctx.arch.arch);
  h.update(arch.data(), arch.size());
  h.update_value(ctx.arch.num_classes);
  h.update_value(ctx.arch.effective_base_width());
  h.update_value(ctx.epochs);
  h.update_value(ctx.batch_size);
  h.update_value(ctx.schedule.lr_warmup_start);
  h.update_value(ctx.schedule.lr_peak);
  h.update_value(ctx.schedule.lr_min);
  h.update_value(ctx.schedule.warmup_fraction);
  h.update_value(ctx.momentum);
  h.update_value(ctx.weight_decay);
  h.update_value(ctx.patch_size);
  h.update_value(ctx.train_apply_prob);
  h.update_value(ctx.noise_content_seed);
  h.update_value(ctx.chunk_split_seed);
  h.update_value(ctx.pretrain_seed);
  if (ctx.train_records) h.update_value(data::records_fingerprint(*ctx.train_records));
  if (ctx.test_records) h.update_value(data::records_fingerprint(*ctx.test_records));
  return to_hex(h.digest());
}

train::Checkpoint run_pretrain(const ProtocolSpec& spec, const LabContext& ctx, std::uint64_t seed) {
  ctx.arch.validate();
  if (ctx.train_records == nullptr) raise(ErrorKind::config, "run_pretrain: train records required");
  const ProtocolPlan plan = make_plan(spec, ctx);
  train::Checkpoint init = train::fresh_checkpoint(ctx.arch, seed);
  data::DatasetView view = view_for(plan.pretrain, ctx, seed, /*stage_index=*/1);
  train::TrainConfig cfg = config_for(plan.pretrain, ctx, seed, /*stage_index=*/1, view.size());
  return train::train_stage(init, cfg, view);
}

train::Checkpoint run_adapt(const LabContext& ctx, const train::Checkpoint& base,
                            const std::string& task_label, std::uint64_t seed) {
  if (ctx.train_records == nullptr) raise(ErrorKind::config, "run_adapt: train records required");
  TaskSetup task;
  task.spec.selector = train::TaskSpec::Selector::full;
  task.spec.label = task_label;
  const int classes = static_cast<int>(ctx.arch.num_classes);
  if (task_label == "T_color") {
    task.spec.cue = data::make_color_cue(classes, ctx.patch_size, data::CuePosition::top_left,
                                         ctx.train_apply_prob);
  } else if (task_label == "T_noise") {
    task.spec.cue = data::make_noise_cue(classes, ctx.patch_size, data::CuePosition::bottom_right,
                                         ctx.train_apply_prob, ctx.noise_content_seed);
  } else {
    raise(ErrorKind::input, "unknown task label '" + task_label + "' (expected T_color or T_noise)");
  }
  const int stage_index = base.meta.stage_index + 1;
  data::DatasetView view = view_for(task, ctx, seed, stage_index);
  train::TrainConfig cfg = config_for(task, ctx, seed, stage_index, view.size());
  return train::train_stage(base, cfg, view);
}

SweepResult run_protocol(const ProtocolSpec& spec, const LabContext& ctx) {
  spec.validate();
  ctx.arch.validate();
  if (ctx.train_records == nullptr || ctx.test_records == nullptr) {
    raise(ErrorKind::config, "run_protocol: train and test records are required");
  }

  const ProtocolPlan plan = make_plan(spec, ctx);
  const std::vector<EvalCondition> conditions = spec.effective_conditions();
  std::vector<std::pair<EvalCondition, data::CueSpec>> eval_cues;
  for (EvalCondition c : conditions) eval_cues.emplace_back(c, condition_cue(c, ctx));

  SweepResult result;
  result.protocol = protocol_to_string(spec.name);
  result.run_id = run_content_id(spec, ctx);

  StageRunner stages(ctx);
  const bool per_seed_pretrain = spec.effective_pretrain_per_seed();

  auto pretrain_for = [&](std::uint64_t seed) -> const train::Checkpoint& {
    const std::uint64_t pt_seed = per_seed_pretrain ? seed : ctx.pretrain_seed;
    // The fresh initialization shares the pretrain seed; one model per lineage.
    train::Checkpoint init = train::fresh_checkpoint(ctx.arch, pt_seed);
    data::DatasetView view = view_for(plan.pretrain, ctx, pt_seed, /*stage_index=*/1);
    train::TrainConfig cfg = config_for(plan.pretrain, ctx, pt_seed, /*stage_index=*/1, view.size());
    return stages.run(init, cfg, view);
  };

  for (std::uint64_t seed : spec.seeds) {
    const train::Checkpoint& base = pretrain_for(seed);
    data::DatasetView view1 = view_for(plan.task1, ctx, seed, /*stage_index=*/2);
    data::DatasetView view2 = view_for(plan.task2, ctx, seed, /*stage_index=*/3);
    train::TrainConfig cfg1 = config_for(plan.task1, ctx, seed, 2, view1.size());
    train::TrainConfig cfg2 = config_for(plan.task2, ctx, seed, 3, view2.size());

    for (train::Scenario scenario : spec.scenarios) {
      const train::Checkpoint& endpoint_a = stages.run(base, cfg1, view1);
      const train::Checkpoint& endpoint_b = scenario == train::Scenario::incremental
                                                ? stages.run(endpoint_a, cfg2, view2)
                                                : stages.run(base, cfg2, view2);

      auto merged = merge::sweep(endpoint_a.params, endpoint_b.params, spec.alphas);
      for (const auto& [alpha, params] : merged) {
        for (const auto& [cond, cue] : eval_cues) {
          ResultRow row;
          row.protocol = result.protocol;
          row.scenario = train::scenario_to_string(scenario);
          row.condition = condition_to_string(cond);
          row.alpha = alpha;
          row.seed = seed;
          row.accuracy = evaluate(params, ctx.arch, cue, *ctx.test_records);
          result.rows.push_back(std::move(row));
        }
      }
    }
  }

  aggregate(result);
  return result;
}

}  // namespace mergelab::lab
