// xeroalign: data generation, training runs, experiment matrices and reports.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/experiments.hpp"
#include "xeroalign/synth.hpp"

namespace fs = std::filesystem;
using namespace xeroalign;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Options {
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::vector<fs::path> run_dirs;
  bool quiet = false;
};

int cmd_gen_data(const Options& o) {
  SynthSpec spec = SynthSpec::load(o.config);
  if (o.seed) spec.seed = *o.seed;
  spec.validate();
  const auto out = synth_generate(spec);
  write_synth(out, o.out);
  std::cout << "wrote " << out.files.size() << " files to " << o.out.string() << "\n";
  return 0;
}

int cmd_run(const Options& o) {
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  const auto result = run_experiment(cfg, o.out, nullptr, o.quiet ? nullptr : &std::cerr);
  std::cout << "run " << o.out.string() << ": target intent accuracy " << result.test.avg_intent_accuracy
            << ", slot F1 " << result.test.avg_slot_f1 << "\n";
  return 0;
}

int cmd_matrix(const Options& o) {
  MatrixConfig cfg = MatrixConfig::load(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  const auto table = run_matrix(cfg, o.out, o.jobs, o.quiet ? nullptr : &std::cerr);
  std::cout << render_table(table);
  for (const auto& row : table.rows)
    if (!row.failures.empty()) return kExitRuntime;
  return 0;
}

int cmd_grid(const Options& o) {
  MatrixConfig cfg = MatrixConfig::load(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  run_grid_one_language(cfg, o.out, o.jobs, o.quiet ? nullptr : &std::cerr);
  std::ifstream txt(o.out / "grid.txt");
  std::cout << txt.rdbuf();
  return 0;
}

int cmd_report(const Options& o) {
  const auto outcome = write_reports(o.run_dirs, o.out);
  std::cout << "plotted " << outcome.plotted.size() << " files into " << o.out.string() << "\n";
  for (const auto& m : outcome.missing) std::cerr << "missing: " << m << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"XeroAlign desk-scale harness"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic parallel benchmark");
  gen->add_option("--config", o.config, "Data spec (key = value)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Override the data spec seed");

  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  run->add_option("--config", o.config, "Run config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", o.out, "Run directory")->required();
  run->add_option("--seed", o.seed, "Override the training seed");
  run->add_flag("--quiet", o.quiet, "No per-epoch progress");

  auto* matrix = app.add_subcommand("matrix", "Run a mode x preset x seed matrix and tabulate it");
  matrix->add_option("--config", o.config, "Matrix config")->required()->check(CLI::ExistingFile);
  matrix->add_option("--out", o.out, "Output directory")->required();
  matrix->add_option("--seed", o.seed, "Run a single seed instead of the configured list");
  matrix->add_option("--jobs", o.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  matrix->add_flag("--quiet", o.quiet, "No progress output");

  auto* grid = app.add_subcommand("grid-one-language", "Align on one target language at a time");
  grid->add_option("--config", o.config, "Grid config")->required()->check(CLI::ExistingFile);
  grid->add_option("--out", o.out, "Output directory")->required();
  grid->add_option("--seed", o.seed, "Run a single seed instead of the configured list");
  grid->add_option("--jobs", o.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  grid->add_flag("--quiet", o.quiet, "No progress output");

  auto* report = app.add_subcommand("report", "Plot run histories and write a summary");
  report->add_option("run_dirs", o.run_dirs, "Run directories")->required();
  report->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*run) return cmd_run(o);
    if (*matrix) return cmd_matrix(o);
    if (*grid) return cmd_grid(o);
    return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
