// mergelab CLI: train cue tasks, interpolate checkpoints, run full merging
// protocols and report accuracy-vs-alpha tables and curves.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mergelab/checkpoint_io.hpp"
#include "mergelab/config.hpp"
#include "mergelab/lab.hpp"
#include "mergelab/merge.hpp"
#include "mergelab/report.hpp"

namespace fs = std::filesystem;
using namespace mergelab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::config || e.kind() == ErrorKind::input ? kExitUsage : kExitRuntime;
}

// "0:1:0.1" (inclusive range) or "0,0.25,0.5" (explicit list).
std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> alphas;
  if (text.find(':') != std::string::npos) {
    double start = 0, end = 0, step = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &end, &step) != 3 || step <= 0) {
      raise(ErrorKind::input, "bad alpha range '" + text + "', expected start:end:step");
    }
    for (int i = 0;; ++i) {
      const double a = start + static_cast<double>(i) * step;
      if (a > end + 1e-9) break;
      alphas.push_back(a < end ? a : end);
    }
  } else {
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
      alphas.push_back(std::stod(part));
    }
  }
  merge::SweepSpec check;
  check.alphas = alphas;
  check.validate();
  return alphas;
}

struct PretrainArgs {
  std::string config_path;
  std::string out_dir;
};

int cmd_pretrain(const PretrainArgs& args) {
  io::ExperimentConfig cfg = io::load_config(args.config_path);
  io::LoadedData dataset = io::load_dataset(cfg);
  lab::LabContext ctx = io::make_lab_context(cfg, dataset, nullptr);
  train::Checkpoint ck = lab::run_pretrain(cfg.protocol, ctx, cfg.pretrain_seed);
  fs::create_directories(args.out_dir);
  const fs::path path = fs::path(args.out_dir) / ("pretrain-" + ck.id + ".ckpt");
  io::save_checkpoint(ck, path);
  std::cout << path.string() << "\n";
  return kExitOk;
}

struct AdaptArgs {
  std::string config_path;
  std::string from_ckpt;
  std::string task_label;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_adapt(const AdaptArgs& args) {
  io::ExperimentConfig cfg = io::load_config(args.config_path);
  if (!fs::exists(args.from_ckpt)) {
    raise(ErrorKind::io, "checkpoint not found: " + args.from_ckpt);
  }
  train::Checkpoint base = io::load_checkpoint(args.from_ckpt);
  io::LoadedData dataset = io::load_dataset(cfg);
  lab::LabContext ctx = io::make_lab_context(cfg, dataset, nullptr);
  const std::uint64_t seed = args.seed_set ? args.seed : cfg.seed;
  train::Checkpoint ck = lab::run_adapt(ctx, base, args.task_label, seed);
  const fs::path out_dir = args.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(args.out_dir);
  fs::create_directories(out_dir);
  const fs::path path = out_dir / (args.task_label + "-" + ck.id + ".ckpt");
  io::save_checkpoint(ck, path);
  std::cout << path.string() << "\n";
  return kExitOk;
}

struct RunProtocolArgs {
  std::string config_path;
};

int cmd_run_protocol(const RunProtocolArgs& args) {
  io::ExperimentConfig cfg = io::load_config(args.config_path);
  io::LoadedData dataset = io::load_dataset(cfg);
  io::CheckpointStore store(fs::path(cfg.output_dir) / "checkpoints");
  lab::LabContext ctx = io::make_lab_context(cfg, dataset, &store);

  const std::string run_id = lab::run_content_id(cfg.protocol, ctx);
  const fs::path run_dir = fs::path(cfg.output_dir) / ("run-" + run_id);
  if (fs::exists(run_dir / "rows.csv")) {
    std::cout << run_dir.string() << " (cached)\n";
    return kExitOk;
  }
  lab::SweepResult result = lab::run_protocol(cfg.protocol, ctx);
  const fs::path written = io::write_run(result, cfg.output_dir);
  std::cout << written.string() << "\n";
  return kExitOk;
}

struct SweepArgs {
  std::string config_path;
  std::string ckpt_a;
  std::string ckpt_b;
  std::string alphas = "0:1:0.1";
  std::vector<std::string> conditions;
  std::string out_file;
};

int cmd_sweep(const SweepArgs& args) {
  io::ExperimentConfig cfg = io::load_config(args.config_path);
  for (const std::string& p : {args.ckpt_a, args.ckpt_b}) {
    if (!fs::exists(p)) raise(ErrorKind::io, "checkpoint not found: " + p);
  }
  train::Checkpoint a = io::load_checkpoint(args.ckpt_a);
  train::Checkpoint b = io::load_checkpoint(args.ckpt_b);
  const std::vector<double> alphas = parse_alphas(args.alphas);

  io::LoadedData dataset = io::load_dataset(cfg);
  lab::LabContext ctx = io::make_lab_context(cfg, dataset, nullptr);
  std::vector<lab::EvalCondition> conditions;
  for (const std::string& c : args.conditions) {
    conditions.push_back(lab::condition_from_string(c));
  }
  if (conditions.empty()) conditions.push_back(lab::EvalCondition::no_cue);

  std::ostringstream csv;
  csv << "alpha,eval_condition,accuracy\n";
  auto merged = merge::sweep(a.params, b.params, alphas);
  for (const auto& [alpha, params] : merged) {
    for (lab::EvalCondition c : conditions) {
      const double acc = lab::evaluate(params, ctx.arch, lab::condition_cue(c, ctx), dataset.test);
      char line[128];
      std::snprintf(line, sizeof(line), "%.2f,%s,%.6f\n", alpha,
                    lab::condition_to_string(c).c_str(), acc);
      csv << line;
    }
  }
  if (args.out_file.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(args.out_file, std::ios::trunc);
    if (!f) raise(ErrorKind::io, "cannot write " + args.out_file);
    f << csv.str();
    std::cout << args.out_file << "\n";
  }
  return kExitOk;
}

struct ReportArgs {
  std::string results_dir;
  std::string format = "csv";
  std::string out_dir;
};

int cmd_report(const ReportArgs& args) {
  if (args.format != "csv" && args.format != "svg") {
    raise(ErrorKind::input, "report: format must be csv or svg, got '" + args.format + "'");
  }
  std::vector<lab::SweepResult> runs = io::read_runs(args.results_dir);
  const fs::path out_dir = args.out_dir.empty() ? fs::path(args.results_dir) : fs::path(args.out_dir);
  fs::create_directories(out_dir);
  for (const lab::SweepResult& run : runs) {
    if (args.format == "csv") {
      const fs::path p = out_dir / (run.protocol + "_aggregate.csv");
      std::ofstream f(p, std::ios::trunc);
      if (!f) raise(ErrorKind::io, "cannot write " + p.string());
      io::write_aggregate_csv(run, f);
      std::cout << p.string() << "\n";
    } else {
      for (const fs::path& p : io::emit_curves(run, out_dir)) {
        std::cout << p.string() << "\n";
      }
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mergelab: cue-task training, checkpoint interpolation and merging protocols"};
  app.require_subcommand(1);

  PretrainArgs pretrain_args;
  CLI::App* pretrain = app.add_subcommand("pretrain", "Run the pre-training stage");
  pretrain->add_option("--config", pretrain_args.config_path, "Experiment config (JSON)")
      ->required();
  pretrain->add_option("--out", pretrain_args.out_dir, "Output directory")->required();

  AdaptArgs adapt_args;
  CLI::App* adapt = app.add_subcommand("adapt", "Run one cue-adaptation stage");
  adapt->add_option("--config", adapt_args.config_path, "Experiment config (JSON)")->required();
  adapt->add_option("--from", adapt_args.from_ckpt, "Parent checkpoint file")->required();
  adapt->add_option("--task", adapt_args.task_label, "Task label (T_color or T_noise)")->required();
  adapt->add_option("--out", adapt_args.out_dir, "Output directory (default: config output_dir)");
  adapt->add_option("--seed", adapt_args.seed, "Run seed (default: config train.seed)")
      ->each([&](const std::string&) { adapt_args.seed_set = true; });

  RunProtocolArgs run_args;
  CLI::App* runp = app.add_subcommand("run-protocol", "Run a full merging protocol");
  runp->add_option("--config", run_args.config_path, "Experiment config (JSON)")->required();

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "Ad-hoc interpolation sweep between two checkpoints");
  sweep->add_option("--config", sweep_args.config_path, "Experiment config (JSON, for the dataset)")
      ->required();
  sweep->add_option("--a", sweep_args.ckpt_a, "Endpoint A checkpoint (alpha = 0)")->required();
  sweep->add_option("--b", sweep_args.ckpt_b, "Endpoint B checkpoint (alpha = 1)")->required();
  sweep->add_option("--alphas", sweep_args.alphas, "Alpha grid, start:end:step or comma list");
  sweep->add_option("--eval", sweep_args.conditions,
                    "Eval conditions (color_cue, noise_cue, no_cue)")
      ->delimiter(',');
  sweep->add_option("--out", sweep_args.out_file, "Write CSV here instead of stdout");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Emit aggregate tables or curve SVGs");
  report->add_option("--results", report_args.results_dir, "Results directory")->required();
  report->add_option("--format", report_args.format, "csv or svg");
  report->add_option("--out", report_args.out_dir, "Output directory (default: results dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*pretrain) return cmd_pretrain(pretrain_args);
    if (*adapt) return cmd_adapt(adapt_args);
    if (*runp) return cmd_run_protocol(run_args);
    if (*sweep) return cmd_sweep(sweep_args);
    if (*report) return cmd_report(report_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
