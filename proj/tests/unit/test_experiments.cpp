#include <gtest/gtest.h>

#include <cmath>
#include "json.hpp"
#include <sstream>

#include "test_util.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/experiments.hpp"

using namespace xeroalign;
using json = nlohmann::json;
using xeroalign::testing::read_file;
using xeroalign::testing::scratch_dir;
using xeroalign::testing::small_dataset;

namespace {

const std::filesystem::path& data_dir() {
  static const auto dir = small_dataset("experiments_data", 48, 16, 16);
  return dir;
}

MatrixConfig matrix(const std::string& extra) {
  return MatrixConfig::from_config(
      KvConfig::parse("data_dir = " + data_dir().string() + "\nepochs = 1\nbatch_size = 16\n" + extra, "matrix"));
}

std::size_t count_dirs(const std::filesystem::path& dir) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.is_directory();
  return n;
}

}  // namespace

TEST(RunConfig, RoundTripAndUnknownKeys) {
  const auto rc = RunConfig::from_config(KvConfig::parse("data_dir = d\nmode = zero_shot\nseed = 9\nepochs = 2\n"));
  EXPECT_EQ(rc.train.mode, TrainMode::kZeroShot);
  EXPECT_EQ(rc.train.seed, 9u);
  EXPECT_EQ(RunConfig::from_config(KvConfig::parse(rc.to_kv())).to_kv(), rc.to_kv());
  try {
    RunConfig::from_config(KvConfig::parse("data_dir = d\nepochz = 2\n", "cfg.kv"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epochz"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::from_config(KvConfig::parse("epochs = 2\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_config(KvConfig::parse("data_dir = d\nepochs = -2\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_config(KvConfig::parse("data_dir = d\nmode = fancy\n")), ConfigError);
}

TEST(RunExperiment, WritesRunDirectory) {
  RunConfig rc;
  rc.data_dir = data_dir();
  rc.train.epochs = 2;
  const auto out = scratch_dir("run_dir") / "r";
  std::ostringstream log;
  const auto result = run_experiment(rc, out, nullptr, &log);
  for (const char* f : {"config.kv", "history.csv", "steps.csv", "report.json", "checkpoint/params.bin"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  EXPECT_EQ(read_history_csv(out / "history.csv").size(), 2u);
  const auto rep = json::parse(read_file(out / "report.json"));
  EXPECT_EQ(rep.at("mode"), "xeroalign");
  EXPECT_EQ(report_to_json(report_from_json(rep.at("test").dump())), report_to_json(result.test));
  EXPECT_EQ(report_to_json(evaluate_run_dir(out)), report_to_json(result.test));
  std::size_t lines = 0;
  for (char c : log.str()) lines += c == '\n';
  EXPECT_EQ(lines, 2u);
}

TEST(Matrix, CellsTableAndRecomputedAverages) {
  const auto m = matrix("modes = target, zero_shot, xeroalign\nseeds = 1, 2, 3\n");
  ASSERT_EQ(matrix_cells(m).size(), 9u);
  const auto out = scratch_dir("matrix");
  const auto table = run_matrix(m, out, 1);
  EXPECT_EQ(count_dirs(out), 9u);
  for (const char* f : {"table.csv", "table.json", "table.txt"}) EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.target_languages, (std::vector<std::string>{"xa", "xb", "xc"}));
  for (const auto& row : table.rows) {
    EXPECT_TRUE(row.failures.empty());
    ASSERT_EQ(row.run_dirs.size(), 3u);
    double avg = 0.0;
    for (const auto& lang : table.target_languages) {
      std::vector<double> v;
      for (const auto& d : row.run_dirs) {
        const auto rep = report_from_json(json::parse(read_file(out / d / "report.json")).at("test").dump());
        v.push_back(rep.language(lang).intent_accuracy);
      }
      const double mean = (v[0] + v[1] + v[2]) / 3;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      EXPECT_NEAR(row.intent_accuracy.at(lang).mean, mean, 1e-9);
      EXPECT_NEAR(row.intent_accuracy.at(lang).stddev, std::sqrt(ss / 2), 1e-9);
      EXPECT_EQ(row.intent_accuracy.at(lang).n, 3u);
      avg += mean / 3;
    }
    EXPECT_NEAR(row.avg_intent_accuracy, avg, 1e-9);
  }
  const auto* zs = table.find("zero_shot/tiny");
  const auto* xa = table.find("xeroalign/tiny");
  ASSERT_TRUE(zs && xa);
  EXPECT_NEAR(table.relative_improvement.at("tiny"),
              (xa->avg_intent_accuracy - zs->avg_intent_accuracy) / zs->avg_intent_accuracy, 1e-12);
  const auto again = aggregate_runs({out / "zero_shot-tiny-s1", out / "zero_shot-tiny-s2", out / "zero_shot-tiny-s3"});
  EXPECT_NEAR(again.rows.at(0).avg_intent_accuracy, zs->avg_intent_accuracy, 1e-12);
  EXPECT_NE(render_table(table).find("zero_shot/tiny"), std::string::npos);
}

TEST(Matrix, ParallelJobsGiveIdenticalRuns) {
  const auto m = matrix("modes = zero_shot, xeroalign\nseeds = 1, 2\n");
  const auto a = scratch_dir("matrix_j1");
  const auto b = scratch_dir("matrix_j2");
  run_matrix(m, a, 1);
  run_matrix(m, b, 2);
  for (const auto& cell : matrix_cells(m)) {
    EXPECT_EQ(read_file(a / cell.name / "report.json"), read_file(b / cell.name / "report.json")) << cell.name;
    EXPECT_EQ(read_file(a / cell.name / "checkpoint" / "params.bin"),
              read_file(b / cell.name / "checkpoint" / "params.bin"));
  }
  EXPECT_EQ(read_file(a / "table.csv"), read_file(b / "table.csv"));
}

TEST(Matrix, FailedCellsAreRecorded) {
  // Alignment cells reject an unknown language; zero-shot cells still run.
  const auto m = matrix("modes = zero_shot, xeroalign\nseeds = 1\nalign_languages = zz\n");
  const auto out = scratch_dir("matrix_fail");
  const auto table = run_matrix(m, out, 1);
  const auto* zs = table.find("zero_shot/tiny");
  ASSERT_TRUE(zs);
  EXPECT_TRUE(zs->failures.empty());
  bool recorded = false;
  for (const auto& row : table.rows)
    for (const auto& f : row.failures) recorded = recorded || f.find("zz") != std::string::npos;
  EXPECT_TRUE(recorded);
}

TEST(Matrix, ConfigErrors) {
  EXPECT_THROW(matrix("mode = zero_shot\n"), ConfigError);
  EXPECT_THROW(matrix("seeds = 1, x\n"), ConfigError);
  EXPECT_THROW(matrix("presets = huge\n"), ConfigError);
  EXPECT_THROW(matrix("modes = zero_shot\nalign_languages = xa\nunknown_key = 1\n"), ConfigError);
}

TEST(Grid, ShapeAndGains) {
  const auto m = matrix("seeds = 1\n");
  const auto out = scratch_dir("grid");
  const auto grid = run_grid_one_language(m, out, 1);
  ASSERT_EQ(grid.languages, (std::vector<std::string>{"xa", "xb", "xc"}));
  ASSERT_EQ(grid.accuracy.size(), 3u);
  ASSERT_EQ(grid.baseline.size(), 4u);
  for (std::size_t a = 0; a < 3; ++a) {
    ASSERT_EQ(grid.accuracy[a].size(), 4u);
    ASSERT_EQ(grid.off_diagonal_gain[a].size(), 4u);
    EXPECT_TRUE(std::isnan(grid.off_diagonal_gain[a][0]));
    double avg = 0.0;
    for (std::size_t c = 1; c < 4; ++c) {
      avg += grid.accuracy[a][c] / 3;
      if (c == a + 1) {
        EXPECT_TRUE(std::isnan(grid.off_diagonal_gain[a][c]));
      } else {
        EXPECT_NEAR(grid.off_diagonal_gain[a][c], grid.accuracy[a][c] - grid.baseline[c], 1e-12);
      }
    }
    EXPECT_NEAR(grid.row_average[a], avg, 1e-12);
  }
  for (const char* f : {"grid.csv", "grid.json", "grid.txt"}) EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  EXPECT_EQ(count_dirs(out), 4u);
  EXPECT_THROW(run_grid_one_language(matrix("seeds = 1\npresets = tiny, small\n"), out, 1), ConfigError);
}

TEST(Reports, SvgsAndSummary) {
  const auto runs = scratch_dir("reports_runs");
  RunConfig rc;
  rc.data_dir = data_dir();
  rc.train.epochs = 2;
  rc.train.lambda = 0.0;
  run_experiment(rc, runs / "lambda0");
  rc.train.lambda = 1.0;
  run_experiment(rc, runs / "lambda1");
  std::filesystem::create_directories(runs / "empty");
  const auto out = scratch_dir("reports_out");
  const auto outcome = write_reports({runs / "lambda0", runs / "lambda1", runs / "empty"}, out);
  EXPECT_EQ(outcome.missing.size(), 1u);
  for (const char* run : {"lambda0", "lambda1"}) {
    for (const char* svg : {"losses.svg", "accuracy.svg", "alignment.svg"}) {
      const auto text = read_file(out / run / svg);
      EXPECT_EQ(text.rfind("<svg", 0), 0u) << run << "/" << svg;
    }
  }
  const auto summary = json::parse(read_file(out / "summary.json"));
  ASSERT_EQ(summary.at("runs").size(), 2u);
  for (const auto& entry : summary.at("runs")) {
    const auto dir = runs / entry.at("run").get<std::string>();
    EXPECT_EQ(entry.at("final"), json::parse(read_file(dir / "report.json")).at("test"));
  }
  for (const auto& row : read_history_csv(runs / "lambda0" / "history.csv")) EXPECT_EQ(row.align_loss, 0.0);
  bool nonzero = false;
  for (const auto& row : read_history_csv(runs / "lambda1" / "history.csv")) nonzero = nonzero || row.align_loss > 0;
  EXPECT_TRUE(nonzero);
}
