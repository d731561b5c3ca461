#include "mergelab/trainer.hpp"

#include <cmath>
#include <ctime>

#include "mergelab/rng.hpp"

namespace mergelab::train {

namespace {

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return std::string(buf);
}

void fill_batch(nn::Tensor& batch, std::vector<std::int32_t>& labels,
                const std::vector<data::DatasetView::Sample>& samples) {
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  batch = nn::Tensor::zeros({n, models::kInputChannels, models::kInputSize, models::kInputSize});
  labels.resize(samples.size());
  float* out = batch.ptr();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& px = samples[i].pixels;
    float* dst = out + i * data::kImageBytes;
    for (int j = 0; j < data::kImageBytes; ++j) {
      dst[j] = static_cast<float>(px[j]) * (1.0f / 255.0f);
    }
    labels[i] = samples[i].label;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) raise(ErrorKind::config, "train: epochs must be >= 1");
  if (batch_size < 1) raise(ErrorKind::config, "train: batch_size must be >= 1");
  schedule.validate();
}

std::uint64_t TrainConfig::stream_seed() const {
  return mix_seed(seed, static_cast<std::uint64_t>(stage_index));
}

std::string checkpoint_content_id(const nn::ParamSet& params, const CheckpointMeta& meta) {
  Fnv1a64 h;
  const std::string arch = models::arch_name_to_string(meta.arch.arch);
  h.update(arch.data(), arch.size());
  h.update_value(meta.arch.num_classes);
  h.update_value(meta.arch.effective_base_width());
  h.update_value(meta.seed);
  for (const auto& t : meta.task_history) h.update(t.data(), t.size());
  h.update_value(meta.stage_index);
  h.update_value(meta.epochs_trained);
  h.update(meta.parent_id.data(), meta.parent_id.size());
  for (const auto& e : params) {
    h.update(e.name.data(), e.name.size());
    h.update(e.tensor.data.data(), e.tensor.data.size() * sizeof(float));
  }
  return to_hex(h.digest());
}

Checkpoint fresh_checkpoint(const models::ArchConfig& arch, std::uint64_t init_seed) {
  Checkpoint ck;
  ck.params = models::build_params(arch, init_seed);
  ck.meta.arch = arch;
  ck.meta.seed = init_seed;
  ck.meta.stage_index = 0;
  ck.meta.epochs_trained = 0;
  ck.meta.created_at = now_iso8601();
  ck.id = checkpoint_content_id(ck.params, ck.meta);
  return ck;
}

std::int64_t steps_for(std::int64_t n_samples, std::int64_t batch_size, std::int64_t epochs) {
  const std::int64_t per_epoch = (n_samples + batch_size - 1) / batch_size;
  return per_epoch * epochs;
}

nn::ScheduleConfig schedule_for(const nn::ScheduleConfig& base, std::int64_t n_samples,
                                std::int64_t batch_size, std::int64_t epochs) {
  nn::ScheduleConfig s = base;
  s.total_steps = steps_for(n_samples, batch_size, epochs);
  return s;
}

Checkpoint train_stage(const Checkpoint& init, const TrainConfig& cfg, const data::DatasetView& view,
                       StageStats* stats) {
  cfg.validate();
  if (view.size() < 1) raise(ErrorKind::input, "train_stage: empty dataset view");
  const std::int64_t expected_steps = steps_for(view.size(), cfg.batch_size, cfg.epochs);
  if (cfg.schedule.total_steps != expected_steps) {
    raise(ErrorKind::config, "train_stage: schedule.total_steps=" +
                                 std::to_string(cfg.schedule.total_steps) + " but " +
                                 std::to_string(cfg.epochs) + " epochs x " +
                                 std::to_string(view.size()) + " samples at batch " +
                                 std::to_string(cfg.batch_size) + " require " +
                                 std::to_string(expected_steps));
  }

  nn::ParamSet params = init.params;  // private working copy; init stays untouched
  nn::OptimState opt = nn::OptimState::like(params);
  if (stats) {
    stats->epoch_mean_loss.clear();
    stats->steps = 0;
  }

  std::vector<double> loss_tail;
  std::int64_t global_step = 0;
  std::vector<data::DatasetView::Sample> samples;
  samples.reserve(cfg.batch_size);
  nn::Tensor batch;
  std::vector<std::int32_t> labels;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto stream = view.epoch(epoch);
    double epoch_loss = 0.0;
    std::int64_t epoch_batches = 0;
    bool more = true;
    while (more) {
      samples.clear();
      data::DatasetView::Sample s;
      while (static_cast<std::int64_t>(samples.size()) < cfg.batch_size && (more = stream.next(s))) {
        samples.push_back(s);
      }
      if (samples.empty()) break;

      fill_batch(batch, labels, samples);
      nn::Tape tape;
      models::ForwardBinding fb =
          models::bind_forward(tape, init.meta.arch, params, std::move(batch), true);
      nn::Value loss = tape.cross_entropy(fb.logits, labels);
      const double loss_value = static_cast<double>(loss.val().data[0]);

      loss_tail.push_back(loss_value);
      if (loss_tail.size() > 10) loss_tail.erase(loss_tail.begin());
      if (!std::isfinite(loss_value)) {
        std::string tail;
        for (double v : loss_tail) tail += " " + std::to_string(v);
        raise(ErrorKind::compute,
              "train_stage: non-finite loss at step " + std::to_string(global_step) + " (lr " +
                  std::to_string(nn::lr_at(cfg.schedule, global_step)) + "); loss tail:" + tail);
      }

      tape.backward(loss);
      std::vector<nn::Tensor> grads;
      grads.reserve(fb.param_values.size());
      for (nn::Value pv : fb.param_values) grads.push_back(tape.grad(pv));

      const double lr = nn::lr_at(cfg.schedule, global_step);
      nn::sgd_step(params, grads, opt, lr, cfg.momentum, cfg.weight_decay);
      ++global_step;
      epoch_loss += loss_value;
      ++epoch_batches;
    }
    if (stats) stats->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_batches));
  }
  if (stats) stats->steps = global_step;

  Checkpoint out;
  out.params = std::move(params);
  out.meta.arch = init.meta.arch;
  out.meta.seed = cfg.seed;
  out.meta.task_history = init.meta.task_history;
  out.meta.task_history.push_back(cfg.task.label);
  out.meta.stage_index = cfg.stage_index;
  out.meta.epochs_trained = cfg.epochs;
  out.meta.parent_id = init.id;
  out.meta.created_at = now_iso8601();
  out.id = checkpoint_content_id(out.params, out.meta);
  return out;
}

std::string scenario_to_string(Scenario s) {
  return s == Scenario::incremental ? "incremental" : "parallel";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "incremental") return Scenario::incremental;
  if (s == "parallel") return Scenario::parallel;
  raise(ErrorKind::config, "unknown scenario '" + s + "' (expected incremental or parallel)");
}

std::pair<Checkpoint, Checkpoint> run_scenario(Scenario scenario, const Checkpoint& base,
                                               const StagePlan& task1, const StagePlan& task2) {
  if (task1.view == nullptr || task2.view == nullptr) {
    raise(ErrorKind::input, "run_scenario: both tasks need a dataset view");
  }
  Checkpoint endpoint_a = train_stage(base, task1.cfg, *task1.view);
  Checkpoint endpoint_b = scenario == Scenario::incremental
                              ? train_stage(endpoint_a, task2.cfg, *task2.view)
                              : train_stage(base, task2.cfg, *task2.view);
  return {std::move(endpoint_a), std::move(endpoint_b)};
}

}  // namespace mergelab::train
