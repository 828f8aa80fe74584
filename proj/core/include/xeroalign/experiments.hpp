#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xeroalign/kv_config.hpp"
#include "xeroalign/training.hpp"

namespace xeroalign {

/// Run config file: `data_dir` plus the TrainConfig keys.
struct RunConfig {
  std::filesystem::path data_dir;
  TrainConfig train;

  static RunConfig from_config(const KvConfig& cfg);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_kv() const;
};

struct RunResult {
  std::filesystem::path dir;
  Checkpoint checkpoint;
  EvalReport test;
};

/// Trains, evaluates on the test split and writes the run directory:
///   config.kv, checkpoint/, history.csv, steps.csv, report.json
RunResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir,
                         const Dataset* preloaded = nullptr, std::ostream* log = nullptr);

// Reloads checkpoint and data named in `dir/config.kv` and re-evaluates the test split.
EvalReport evaluate_run_dir(const std::filesystem::path& dir);

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single seed
  std::size_t n = 0;
};

struct TableRow {
  std::string name;  // "<mode>/<preset>" or "<mode>/<preset>/<align>"
  std::string mode;
  std::string preset;
  std::vector<std::string> align_languages;
  std::vector<std::string> run_dirs;
  std::vector<std::string> failures;  // "<run dir>: <message>"
  // Keyed by language; the source language included.
  std::map<std::string, CellStats> intent_accuracy;
  std::map<std::string, CellStats> slot_f1;
  // Mean over target languages of the per-language means.
  double avg_intent_accuracy = 0.0;
  double avg_slot_f1 = 0.0;
};

struct ResultsTable {
  std::string source_language;
  std::vector<std::string> target_languages;
  std::vector<TableRow> rows;
  // (xeroalign - zero_shot) / zero_shot of the target-average intent accuracy, per preset.
  std::map<std::string, double> relative_improvement;

  const TableRow* find(const std::string& name) const;
};

/// Matrix config file: `data_dir`, `modes`, `presets`, `seeds`, optional
/// `align_languages` (alignment modes only), plus shared TrainConfig keys.
struct MatrixConfig {
  std::filesystem::path data_dir;
  std::vector<TrainMode> modes;
  std::vector<std::string> presets;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> align_languages;
  TrainConfig base;

  static MatrixConfig from_config(const KvConfig& cfg);
  static MatrixConfig load(const std::filesystem::path& path);
};

struct MatrixCell {
  std::string name;  // run directory name
  RunConfig run;
};

std::vector<MatrixCell> matrix_cells(const MatrixConfig& config);

// Cells run on `jobs` worker threads; a failing cell is recorded, not fatal.
ResultsTable run_matrix(const MatrixConfig& config, const std::filesystem::path& out_dir, std::size_t jobs,
                        std::ostream* log = nullptr);
// Aggregates finished run directories (report.json) into a table.
ResultsTable aggregate_runs(const std::vector<std::filesystem::path>& run_dirs);
void write_table(const ResultsTable& table, const std::filesystem::path& out_dir, const std::string& stem = "table");
std::string render_table(const ResultsTable& table);

struct GridResult {
  std::string source_language;
  std::vector<std::string> languages;           // alignment / evaluation languages
  std::vector<std::vector<double>> accuracy;    // [align lang][source + eval langs]
  std::vector<double> row_average;              // mean over the target-language columns
  std::vector<double> baseline;                 // zero_shot, same columns
  std::vector<std::vector<double>> off_diagonal_gain;  // accuracy - baseline; NaN on the diagonal and source
};

// `config` uses the matrix keys except `modes`/`presets`/`align_languages`
// (one preset allowed). Needs >= 2 target languages.
GridResult run_grid_one_language(const MatrixConfig& config, const std::filesystem::path& out_dir, std::size_t jobs,
                                 std::ostream* log = nullptr);
void write_grid(const GridResult& grid, const std::filesystem::path& out_dir);

struct ReportOutcome {
  std::vector<std::filesystem::path> plotted;
  std::vector<std::string> missing;  // run dirs without history.csv / report.json
};

// Three SVGs per run (losses, accuracy, alignment distance) plus summary.json in `out_dir`.
ReportOutcome write_reports(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

struct HistoryRow {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double align_loss = 0.0;
  double total_loss = 0.0;
  double dev_source_intent_accuracy = 0.0;
  double dev_target_intent_accuracy = 0.0;
  double dev_target_slot_f1 = 0.0;
  double dev_align_mse = 0.0;
  double dev_align_cosine = 0.0;
};

std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path);

}  // namespace xeroalign
