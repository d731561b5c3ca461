#include "mergelab/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace mergelab::io {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& source, const std::string& where, const std::string& what) {
  raise(ErrorKind::config, source + ": " + (where.empty() ? "$" : where) + ": " + what);
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& source, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      fail(source, where, "unknown key '" + key + "'");
    }
  }
}

class Field {
public:
  Field(const json& obj, std::string source, std::string where)
      : obj_(obj), source_(std::move(source)), where_(std::move(where)) {}

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!obj_.contains(key)) return fallback;
    return read<T>(key);
  }

  template <typename T>
  T require(const std::string& key) const {
    if (!obj_.contains(key)) fail(source_, where_, "missing required key '" + key + "'");
    return read<T>(key);
  }

  const json& child(const std::string& key) const { return obj_.at(key); }
  std::string path(const std::string& key) const { return where_ + "." + key; }

private:
  template <typename T>
  T read(const std::string& key) const {
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(source_, path(key), std::string("wrong type: ") + e.what());
    }
  }

  const json& obj_;
  std::string source_;
  std::string where_;
};

data::CifarVariant variant_from_string(const std::string& s, const std::string& source,
                                       const std::string& where) {
  if (s == "cifar10") return data::CifarVariant::cifar10;
  if (s == "cifar100") return data::CifarVariant::cifar100;
  fail(source, where, "unknown dataset variant '" + s + "' (expected cifar10 or cifar100)");
}

}  // namespace

std::vector<std::string> default_train_files(data::CifarVariant v) {
  if (v == data::CifarVariant::cifar100) return {"train.bin"};
  return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
          "data_batch_5.bin"};
}

std::vector<std::string> default_test_files(data::CifarVariant v) {
  if (v == data::CifarVariant::cifar100) return {"test.bin"};
  return {"test_batch.bin"};
}

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::config, source_name + ": parse error at byte " + std::to_string(e.byte) +
                                 ": " + e.what());
  }
  if (!root.is_object()) raise(ErrorKind::config, source_name + ": top level must be an object");

  ExperimentConfig cfg;
  reject_unknown_keys(root,
                      {"dataset", "arch", "train", "protocol", "cue", "chunk_split_seed",
                       "pretrain_seed", "output_dir"},
                      source_name, "");
  Field top(root, source_name, "");

  {
    if (!top.has("dataset")) raise(ErrorKind::config, source_name + ": missing 'dataset' section");
    const json& d = top.child("dataset");
    if (!d.is_object()) fail(source_name, "dataset", "must be an object");
    reject_unknown_keys(d, {"variant", "path", "train_files", "test_files"}, source_name, "dataset");
    Field f(d, source_name, "dataset");
    cfg.dataset.variant =
        variant_from_string(f.require<std::string>("variant"), source_name, "dataset.variant");
    cfg.dataset.dir = f.require<std::string>("path");
    cfg.dataset.train_files =
        f.get<std::vector<std::string>>("train_files", default_train_files(cfg.dataset.variant));
    cfg.dataset.test_files =
        f.get<std::vector<std::string>>("test_files", default_test_files(cfg.dataset.variant));
    if (cfg.dataset.train_files.empty() || cfg.dataset.test_files.empty()) {
      fail(source_name, "dataset", "train_files and test_files must be non-empty");
    }
  }

  {
    if (!top.has("arch")) raise(ErrorKind::config, source_name + ": missing 'arch' section");
    const json& a = top.child("arch");
    if (!a.is_object()) fail(source_name, "arch", "must be an object");
    reject_unknown_keys(a, {"name", "num_classes", "base_width"}, source_name, "arch");
    Field f(a, source_name, "arch");
    cfg.arch.arch = models::arch_name_from_string(f.require<std::string>("name"));
    cfg.arch.num_classes = f.require<std::int64_t>("num_classes");
    cfg.arch.base_width = f.get<std::int64_t>("base_width", 0);
    try {
      cfg.arch.validate();
    } catch (const Error& e) {
      fail(source_name, "arch", e.what());
    }
  }

  if (top.has("train")) {
    const json& t = top.child("train");
    if (!t.is_object()) fail(source_name, "train", "must be an object");
    reject_unknown_keys(t, {"epochs", "batch_size", "momentum", "weight_decay", "seed", "schedule"},
                        source_name, "train");
    Field f(t, source_name, "train");
    cfg.epochs = f.get<std::int64_t>("epochs", cfg.epochs);
    cfg.batch_size = f.get<std::int64_t>("batch_size", cfg.batch_size);
    cfg.momentum = f.get<double>("momentum", cfg.momentum);
    cfg.weight_decay = f.get<double>("weight_decay", cfg.weight_decay);
    cfg.seed = f.get<std::uint64_t>("seed", cfg.seed);
    if (cfg.epochs < 1) fail(source_name, "train.epochs", "must be >= 1");
    if (cfg.batch_size < 1) fail(source_name, "train.batch_size", "must be >= 1");
    if (f.has("schedule")) {
      const json& s = f.child("schedule");
      if (!s.is_object()) fail(source_name, "train.schedule", "must be an object");
      reject_unknown_keys(s, {"lr_warmup_start", "lr_peak", "lr_min", "warmup_fraction"},
                          source_name, "train.schedule");
      Field g(s, source_name, "train.schedule");
      cfg.schedule.lr_warmup_start = g.get<double>("lr_warmup_start", cfg.schedule.lr_warmup_start);
      cfg.schedule.lr_peak = g.get<double>("lr_peak", cfg.schedule.lr_peak);
      cfg.schedule.lr_min = g.get<double>("lr_min", cfg.schedule.lr_min);
      cfg.schedule.warmup_fraction = g.get<double>("warmup_fraction", cfg.schedule.warmup_fraction);
      nn::ScheduleConfig check = cfg.schedule;
      check.total_steps = 1;  // field-level validation only
      try {
        check.validate();
      } catch (const Error& e) {
        fail(source_name, "train.schedule", e.what());
      }
    }
  }

  if (top.has("protocol")) {
    const json& p = top.child("protocol");
    if (!p.is_object()) fail(source_name, "protocol", "must be an object");
    reject_unknown_keys(p, {"name", "scenarios", "seeds", "pretrain_per_seed", "eval_conditions",
                            "alphas"},
                        source_name, "protocol");
    Field f(p, source_name, "protocol");
    cfg.protocol.name = lab::protocol_from_string(f.require<std::string>("name"));
    if (f.has("scenarios")) {
      cfg.protocol.scenarios.clear();
      for (const std::string& s : f.require<std::vector<std::string>>("scenarios")) {
        cfg.protocol.scenarios.push_back(train::scenario_from_string(s));
      }
    }
    cfg.protocol.seeds = f.get<std::vector<std::uint64_t>>("seeds", cfg.protocol.seeds);
    if (f.has("pretrain_per_seed")) {
      cfg.protocol.pretrain_per_seed = f.require<bool>("pretrain_per_seed");
    }
    if (f.has("eval_conditions")) {
      for (const std::string& s : f.require<std::vector<std::string>>("eval_conditions")) {
        cfg.protocol.eval_conditions.push_back(lab::condition_from_string(s));
      }
    }
    cfg.protocol.alphas = f.get<std::vector<double>>("alphas", cfg.protocol.alphas);
    try {
      cfg.protocol.validate();
    } catch (const Error& e) {
      fail(source_name, "protocol", e.what());
    }
  }

  if (top.has("cue")) {
    const json& c = top.child("cue");
    if (!c.is_object()) fail(source_name, "cue", "must be an object");
    reject_unknown_keys(c, {"patch_size", "apply_prob", "noise_content_seed"}, source_name, "cue");
    Field f(c, source_name, "cue");
    cfg.patch_size = f.get<int>("patch_size", cfg.patch_size);
    cfg.train_apply_prob = f.get<double>("apply_prob", cfg.train_apply_prob);
    cfg.noise_content_seed = f.get<std::uint64_t>("noise_content_seed", cfg.noise_content_seed);
    if (cfg.patch_size < 1 || cfg.patch_size > data::kImageSize) {
      fail(source_name, "cue.patch_size", "must be in [1, 32]");
    }
    if (cfg.train_apply_prob < 0.0 || cfg.train_apply_prob > 1.0) {
      fail(source_name, "cue.apply_prob", "must be in [0, 1]");
    }
  }

  Field f(root, source_name, "");
  cfg.chunk_split_seed = f.get<std::uint64_t>("chunk_split_seed", cfg.chunk_split_seed);
  cfg.pretrain_seed = f.get<std::uint64_t>("pretrain_seed", cfg.pretrain_seed);
  cfg.output_dir = f.get<std::string>("output_dir", cfg.output_dir.string());
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::config, "cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.string());
}

LoadedData load_dataset(const ExperimentConfig& cfg) {
  LoadedData d;
  d.train = data::load_cifar_files(cfg.dataset.dir, cfg.dataset.train_files, cfg.dataset.variant);
  d.test = data::load_cifar_files(cfg.dataset.dir, cfg.dataset.test_files, cfg.dataset.variant);
  return d;
}

lab::LabContext make_lab_context(const ExperimentConfig& cfg, const LoadedData& data,
                                 CheckpointStore* store) {
  lab::LabContext ctx;
  ctx.arch = cfg.arch;
  ctx.epochs = cfg.epochs;
  ctx.batch_size = cfg.batch_size;
  ctx.schedule = cfg.schedule;
  ctx.momentum = cfg.momentum;
  ctx.weight_decay = cfg.weight_decay;
  ctx.train_records = &data.train;
  ctx.test_records = &data.test;
  ctx.patch_size = cfg.patch_size;
  ctx.train_apply_prob = cfg.train_apply_prob;
  ctx.noise_content_seed = cfg.noise_content_seed;
  ctx.chunk_split_seed = cfg.chunk_split_seed;
  ctx.pretrain_seed = cfg.pretrain_seed;
  ctx.store = store;
  return ctx;
}

}  // namespace mergelab::io
