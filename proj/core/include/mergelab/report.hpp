#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mergelab/lab.hpp"

namespace mergelab::io {

// Raw per-seed rows, accuracies as fractions:
//   protocol,scenario,eval_condition,alpha,seed,accuracy
void write_rows_csv(const lab::SweepResult& result, std::ostream& out);
lab::SweepResult read_rows_csv(std::istream& in, const std::string& source_name);

// Aggregated table, accuracies as percentages with 4 decimals:
//   protocol,scenario,eval_condition,alpha,mean,stderr,n_seeds
// stderr is empty (absent, not zero) for single-seed cells.
void write_aggregate_csv(const lab::SweepResult& result, std::ostream& out);

// Persists one run: rows.csv + aggregate.csv + meta.json under
// <out_dir>/run-<run_id>/. Returns the run directory.
std::filesystem::path write_run(const lab::SweepResult& result, const std::filesystem::path& out_dir);

// Loads every run-*/rows.csv below `results_dir` (or the directory itself if
// it contains rows.csv) and recomputes aggregates, one SweepResult per run.
std::vector<lab::SweepResult> read_runs(const std::filesystem::path& results_dir);

// Accuracy-vs-alpha curve for one evaluation condition: one polyline per
// scenario plus a standard-error band. Deterministic byte output.
std::string render_curves_svg(const lab::SweepResult& result, const std::string& condition);

// One SVG per condition present in the result, named
// <protocol>_<condition>.svg. Raises on an empty result.
std::vector<std::filesystem::path> emit_curves(const lab::SweepResult& result,
                                               const std::filesystem::path& out_dir);

}  // namespace mergelab::io
