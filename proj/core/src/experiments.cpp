#include "xeroalign/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/svg_plot.hpp"

namespace xeroalign {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string history_csv(const History& h) {
  std::string out =
      "epoch,task_loss,align_loss,total_loss,dev_source_intent_accuracy,dev_target_intent_accuracy,"
      "dev_target_slot_f1,dev_align_mse,dev_align_cosine\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch + 1) + "," + g17(e.task_loss) + "," + g17(e.align_loss) + "," + g17(e.total_loss) +
           "," + g17(e.dev.source.intent_accuracy) + "," + g17(e.dev.avg_intent_accuracy) + "," +
           g17(e.dev.avg_slot_f1) + "," + g17(e.dev.avg_align_mse) + "," + g17(e.dev.avg_align_cosine) + "\n";
  }
  return out;
}

std::string steps_csv(const History& h) {
  std::string out = "step,epoch,phase,lr,task_loss,align_loss,total_loss,intent_loss,slot_loss\n";
  for (const auto& s : h.steps) {
    out += std::to_string(s.step) + "," + std::to_string(s.epoch + 1) + "," + s.phase + "," + g17(s.lr) + "," +
           g17(s.loss.task_loss) + "," + g17(s.loss.align_loss) + "," + g17(s.loss.total_loss) + "," +
           g17(s.loss.intent_loss) + "," + g17(s.loss.slot_loss) + "\n";
  }
  return out;
}

CellStats stats_of(const std::vector<double>& v) {
  CellStats s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string row_name(const std::string& mode, const std::string& preset, const std::vector<std::string>& align) {
  std::string name = mode + "/" + preset;
  if (!align.empty()) name += "/" + join(align, "+");
  return name;
}

// Runs `cells` on `jobs` threads; returns per-cell error text ("" on success).
std::vector<std::string> run_cells(const std::vector<MatrixCell>& cells, const std::filesystem::path& out_dir,
                                   std::size_t jobs, std::ostream* log) {
  std::map<std::filesystem::path, std::unique_ptr<Dataset>> datasets;
  std::vector<std::string> errors(cells.size());
  std::vector<const Dataset*> data_for(cells.size(), nullptr);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& slot = datasets[cells[i].run.data_dir];
    if (!slot) {
      try {
        slot = std::make_unique<Dataset>(load_dataset(cells[i].run.data_dir));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw InputError("cannot load data " + cells[i].run.data_dir.string() + ": " + e.what());
      }
    }
    data_for[i] = slot.get();
  }
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        run_experiment(cells[i].run, out_dir / cells[i].name, data_for[i], nullptr);
        if (log) {
          std::lock_guard<std::mutex> lock(log_mutex);
          *log << "done " << cells[i].name << "\n" << std::flush;
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (log) {
          std::lock_guard<std::mutex> lock(log_mutex);
          *log << "FAILED " << cells[i].name << ": " << e.what() << "\n" << std::flush;
        }
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return errors;
}

}  // namespace

RunConfig RunConfig::from_config(const KvConfig& cfg) {
  RunConfig r;
  r.data_dir = cfg.get_string("data_dir");
  r.train = TrainConfig::from_config(cfg);
  cfg.require_all_used();
  return r;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_config(KvConfig::load(path)); }

std::string RunConfig::to_kv() const { return "data_dir = " + data_dir.string() + "\n" + train.to_kv(); }

RunResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir, const Dataset* preloaded,
                         std::ostream* log) {
  config.train.validate();
  std::optional<Dataset> owned;
  if (!preloaded) owned = load_dataset(config.data_dir);
  const Dataset& data = preloaded ? *preloaded : *owned;
  std::filesystem::create_directories(out_dir);
  RunConfig echo = config;
  echo.data_dir = std::filesystem::absolute(config.data_dir).lexically_normal();
  write_text(out_dir / "config.kv", echo.to_kv());

  RunResult result;
  result.dir = out_dir;
  result.checkpoint = train(config.train, data, [&](const EpochRecord& e) {
    if (!log) return;
    char line[200];
    std::snprintf(line, sizeof line, "epoch %zu task %.4f align %.4f total %.4f dev target acc %.3f f1 %.3f\n",
                  e.epoch + 1, e.task_loss, e.align_loss, e.total_loss, e.dev.avg_intent_accuracy, e.dev.avg_slot_f1);
    *log << line << std::flush;
  });
  result.test = evaluate(result.checkpoint, data.test);
  save_checkpoint(result.checkpoint, out_dir / "checkpoint");
  write_text(out_dir / "history.csv", history_csv(result.checkpoint.history));
  write_text(out_dir / "steps.csv", steps_csv(result.checkpoint.history));

  const auto& h = result.checkpoint.history;
  ordered rep;
  rep["mode"] = to_string(config.train.mode);
  rep["preset"] = config.train.preset;
  rep["seed"] = config.train.seed;
  rep["lambda"] = config.train.lambda;
  rep["epochs"] = config.train.epochs;
  rep["align_languages"] = config.train.align_languages;
  rep["initial_dev"] = ordered::parse(report_to_json(h.initial_dev));
  if (!h.epochs.empty()) rep["final_dev"] = ordered::parse(report_to_json(h.epochs.back().dev));
  rep["test"] = ordered::parse(report_to_json(result.test));
  write_text(out_dir / "report.json", rep.dump(1) + "\n");
  return result;
}

EvalReport evaluate_run_dir(const std::filesystem::path& dir) {
  const auto cfg = RunConfig::load(dir / "config.kv");
  const auto ckpt = load_checkpoint(dir / "checkpoint");
  return evaluate(ckpt, load_split(cfg.data_dir, "test"));
}

const TableRow* ResultsTable::find(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

MatrixConfig MatrixConfig::from_config(const KvConfig& cfg) {
  MatrixConfig m;
  m.data_dir = cfg.get_string("data_dir");
  for (const auto& name : cfg.get_list("modes", {"zero_shot", "xeroalign"})) m.modes.push_back(parse_mode(name));
  m.presets = cfg.get_list("presets", {"tiny"});
  for (const auto& s : cfg.get_list("seeds", {"1", "2", "3", "4", "5"})) {
    try {
      std::size_t used = 0;
      m.seeds.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(cfg.origin() + ": seed '" + s + "' is not a non-negative integer");
    }
  }
  m.align_languages = cfg.get_list("align_languages", {});
  for (const char* key : {"mode", "preset", "seed"}) {
    if (cfg.has(key)) throw ConfigError(cfg.origin() + ": use '" + key + "s' in matrix configs");
  }
  m.base = TrainConfig::from_config(cfg);
  for (const auto& p : m.presets) default_max_lr(p);
  if (m.modes.empty() || m.presets.empty() || m.seeds.empty()) throw ConfigError(cfg.origin() + ": empty matrix");
  cfg.require_all_used();
  return m;
}

MatrixConfig MatrixConfig::load(const std::filesystem::path& path) { return from_config(KvConfig::load(path)); }

std::vector<MatrixCell> matrix_cells(const MatrixConfig& config) {
  std::vector<MatrixCell> cells;
  std::set<std::string> names;
  for (const auto& preset : config.presets) {
    for (auto mode : config.modes) {
      for (auto seed : config.seeds) {
        MatrixCell c;
        c.run.data_dir = config.data_dir;
        c.run.train = config.base;
        c.run.train.mode = mode;
        c.run.train.preset = preset;
        c.run.train.seed = seed;
        c.run.train.align_languages = is_alignment_mode(mode) ? config.align_languages : std::vector<std::string>{};
        c.run.train.validate();
        c.name = to_string(mode) + "-" + preset + "-s" + std::to_string(seed);
        if (!names.insert(c.name).second) throw ConfigError("matrix: duplicate cell " + c.name);
        cells.push_back(std::move(c));
      }
    }
  }
  return cells;
}

ResultsTable aggregate_runs(const std::vector<std::filesystem::path>& run_dirs) {
  ResultsTable table;
  struct Acc {
    std::map<std::string, std::vector<double>> acc, f1;
  };
  std::map<std::string, Acc> values;
  for (const auto& dir : run_dirs) {
    const json rep = json::parse(read_text(dir / "report.json"));
    const EvalReport test = report_from_json(rep.at("test").dump());
    const auto mode = rep.at("mode").get<std::string>();
    const auto preset = rep.at("preset").get<std::string>();
    const auto align = rep.at("align_languages").get<std::vector<std::string>>();
    const auto name = row_name(mode, preset, align);
    if (table.source_language.empty()) {
      table.source_language = test.source.language;
      for (const auto& t : test.targets) table.target_languages.push_back(t.language);
    }
    auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const TableRow& r) { return r.name == name; });
    if (it == table.rows.end()) {
      table.rows.push_back({});
      it = table.rows.end() - 1;
      it->name = name;
      it->mode = mode;
      it->preset = preset;
      it->align_languages = align;
    }
    it->run_dirs.push_back(dir.filename().string());
    auto& acc = values[name];
    acc.acc[test.source.language].push_back(test.source.intent_accuracy);
    acc.f1[test.source.language].push_back(test.source.slot.f1);
    for (const auto& t : test.targets) {
      acc.acc[t.language].push_back(t.intent_accuracy);
      acc.f1[t.language].push_back(t.slot.f1);
    }
  }
  for (auto& row : table.rows) {
    const auto& acc = values[row.name];
    for (const auto& [lang, v] : acc.acc) row.intent_accuracy[lang] = stats_of(v);
    for (const auto& [lang, v] : acc.f1) row.slot_f1[lang] = stats_of(v);
    for (const auto& lang : table.target_languages) {
      row.avg_intent_accuracy += row.intent_accuracy[lang].mean;
      row.avg_slot_f1 += row.slot_f1[lang].mean;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(1, table.target_languages.size()));
    row.avg_intent_accuracy /= n;
    row.avg_slot_f1 /= n;
  }
  for (const auto& row : table.rows) {
    if (row.mode != "zero_shot") continue;
    for (const auto& other : table.rows) {
      if (other.mode == "xeroalign" && other.preset == row.preset && other.align_languages.empty()) {
        table.relative_improvement[row.preset] =
            (other.avg_intent_accuracy - row.avg_intent_accuracy) / row.avg_intent_accuracy;
      }
    }
  }
  return table;
}

std::string render_table(const ResultsTable& table) {
  std::vector<std::string> cols{table.source_language};
  for (const auto& l : table.target_languages) cols.push_back(l);
  std::size_t name_w = 14;
  for (const auto& r : table.rows) name_w = std::max(name_w, r.name.size());
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  const std::size_t cell_w = 13;
  std::string out = "Intent accuracy / slot F1 (test, mean over seeds, %)\n\n" + pad("configuration", name_w);
  for (const auto& c : cols) out += " | " + pad(c, cell_w);
  out += " | " + pad("avg", cell_w) + " | seeds\n";
  out += std::string(name_w + (cols.size() + 1) * (cell_w + 3) + 8, '-') + "\n";
  auto cell = [](double a, double f) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.1f / %.1f", 100 * a, 100 * f);
    return std::string(buf);
  };
  for (const auto& r : table.rows) {
    out += pad(r.name, name_w);
    for (const auto& c : cols) {
      auto a = r.intent_accuracy.find(c);
      auto f = r.slot_f1.find(c);
      out += " | " + pad(a == r.intent_accuracy.end() ? "failed" : cell(a->second.mean, f->second.mean), cell_w);
    }
    out += " | " + pad(r.run_dirs.empty() ? "failed" : cell(r.avg_intent_accuracy, r.avg_slot_f1), cell_w);
    out += " | " + std::to_string(r.run_dirs.size());
    if (!r.failures.empty()) out += " (" + std::to_string(r.failures.size()) + " failed)";
    out += "\n";
  }
  if (!table.relative_improvement.empty()) {
    out += "\nRelative improvement of xeroalign over zero_shot (target-average intent accuracy):\n";
    for (const auto& [preset, v] : table.relative_improvement) {
      char buf[80];
      std::snprintf(buf, sizeof buf, "  %s: %+.1f%%\n", preset.c_str(), 100 * v);
      out += buf;
    }
  }
  return out;
}

void write_table(const ResultsTable& table, const std::filesystem::path& out_dir, const std::string& stem) {
  std::filesystem::create_directories(out_dir);
  std::string csv = "configuration,mode,preset,align_languages,language,metric,mean,stddev,n\n";
  ordered rows = ordered::array();
  for (const auto& r : table.rows) {
    ordered jr;
    jr["name"] = r.name;
    jr["mode"] = r.mode;
    jr["preset"] = r.preset;
    jr["align_languages"] = r.align_languages;
    jr["runs"] = r.run_dirs;
    jr["failures"] = r.failures;
    ordered cells = ordered::object();
    for (const auto& [lang, a] : r.intent_accuracy) {
      const auto& f = r.slot_f1.at(lang);
      cells[lang] = {{"intent_accuracy", a.mean}, {"intent_accuracy_std", a.stddev},
                     {"slot_f1", f.mean},         {"slot_f1_std", f.stddev},
                     {"n", a.n}};
      for (const auto& [metric, s] : {std::pair{"intent_accuracy", a}, std::pair{"slot_f1", f}}) {
        csv += r.name + "," + r.mode + "," + r.preset + "," + join(r.align_languages, "+") + "," + lang + "," + metric +
               "," + g17(s.mean) + "," + g17(s.stddev) + "," + std::to_string(s.n) + "\n";
      }
    }
    jr["cells"] = cells;
    jr["average"] = {{"intent_accuracy", r.avg_intent_accuracy}, {"slot_f1", r.avg_slot_f1}};
    csv += r.name + "," + r.mode + "," + r.preset + "," + join(r.align_languages, "+") + ",avg,intent_accuracy," +
           g17(r.avg_intent_accuracy) + ",,\n";
    csv += r.name + "," + r.mode + "," + r.preset + "," + join(r.align_languages, "+") + ",avg,slot_f1," +
           g17(r.avg_slot_f1) + ",,\n";
    rows.push_back(jr);
  }
  ordered doc;
  doc["source_language"] = table.source_language;
  doc["target_languages"] = table.target_languages;
  doc["rows"] = rows;
  doc["relative_improvement"] = table.relative_improvement;
  write_text(out_dir / (stem + ".csv"), csv);
  write_text(out_dir / (stem + ".json"), doc.dump(1) + "\n");
  write_text(out_dir / (stem + ".txt"), render_table(table));
}

ResultsTable run_matrix(const MatrixConfig& config, const std::filesystem::path& out_dir, std::size_t jobs,
                        std::ostream* log) {
  const auto cells = matrix_cells(config);
  const auto errors = run_cells(cells, out_dir, jobs, log);
  std::vector<std::filesystem::path> ok;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (errors[i].empty()) ok.push_back(out_dir / cells[i].name);
  ResultsTable table = aggregate_runs(ok);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (errors[i].empty()) continue;
    const auto& t = cells[i].run.train;
    const auto name = row_name(to_string(t.mode), t.preset, t.align_languages);
    auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const TableRow& r) { return r.name == name; });
    if (it == table.rows.end()) {
      table.rows.push_back({});
      it = table.rows.end() - 1;
      it->name = name;
      it->mode = to_string(t.mode);
      it->preset = t.preset;
      it->align_languages = t.align_languages;
    }
    it->failures.push_back(cells[i].name + ": " + errors[i]);
  }
  write_table(table, out_dir);
  return table;
}

GridResult run_grid_one_language(const MatrixConfig& config, const std::filesystem::path& out_dir, std::size_t jobs,
                                 std::ostream* log) {
  if (config.presets.size() != 1) throw ConfigError("grid-one-language: exactly one preset expected");
  const Dataset probe = load_dataset(config.data_dir);
  const auto langs = probe.target_languages();
  if (langs.size() < 2) {
    throw ConfigError("grid-one-language: needs at least 2 target languages, data has " + std::to_string(langs.size()));
  }
  const auto& preset = config.presets.front();
  std::vector<MatrixCell> cells;
  for (auto seed : config.seeds) {
    MatrixCell base;
    base.run.data_dir = config.data_dir;
    base.run.train = config.base;
    base.run.train.preset = preset;
    base.run.train.seed = seed;
    base.run.train.mode = TrainMode::kZeroShot;
    base.run.train.align_languages.clear();
    base.name = "zero_shot-" + preset + "-s" + std::to_string(seed);
    cells.push_back(base);
    for (const auto& a : langs) {
      MatrixCell c = base;
      c.run.train.mode = TrainMode::kXeroAlign;
      c.run.train.align_languages = {a};
      c.name = "xeroalign-" + preset + "-a" + a + "-s" + std::to_string(seed);
      cells.push_back(std::move(c));
    }
  }
  for (const auto& c : cells) c.run.train.validate();
  const auto errors = run_cells(cells, out_dir, jobs, log);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) throw Error("grid-one-language: run " + cells[i].name + " failed: " + errors[i]);
  }

  GridResult grid;
  grid.source_language = probe.train.source_language;
  grid.languages = langs;
  std::vector<std::string> cols{grid.source_language};
  for (const auto& l : langs) cols.push_back(l);
  auto mean_acc = [&](const std::string& prefix) {
    std::vector<double> out(cols.size(), 0.0);
    for (auto seed : config.seeds) {
      const json rep = json::parse(read_text(out_dir / (prefix + "-s" + std::to_string(seed)) / "report.json"));
      const EvalReport test = report_from_json(rep.at("test").dump());
      for (std::size_t c = 0; c < cols.size(); ++c) out[c] += test.language(cols[c]).intent_accuracy;
    }
    for (auto& v : out) v /= static_cast<double>(config.seeds.size());
    return out;
  };
  grid.baseline = mean_acc("zero_shot-" + preset);
  for (std::size_t a = 0; a < langs.size(); ++a) {
    auto row = mean_acc("xeroalign-" + preset + "-a" + langs[a]);
    double avg = 0.0;
    std::vector<double> gain(cols.size(), std::nan(""));
    for (std::size_t c = 1; c < cols.size(); ++c) {
      avg += row[c];
      if (c - 1 != a) gain[c] = row[c] - grid.baseline[c];
    }
    grid.row_average.push_back(avg / static_cast<double>(langs.size()));
    grid.accuracy.push_back(std::move(row));
    grid.off_diagonal_gain.push_back(std::move(gain));
  }
  write_grid(grid, out_dir);
  return grid;
}

void write_grid(const GridResult& grid, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> cols{grid.source_language};
  for (const auto& l : grid.languages) cols.push_back(l);
  std::string csv = "aligned_on," + join(cols, ",") + ",avg\n";
  std::string txt = "Intent accuracy (test, mean over seeds, %) after aligning on one language\n\naligned on |";
  for (const auto& c : cols) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %8s |", c.c_str());
    txt += buf;
  }
  txt += "      avg\n";
  auto add_row = [&](const std::string& name, const std::vector<double>& row, double avg) {
    csv += name;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-10s |", name.c_str());
    txt += buf;
    for (double v : row) {
      csv += "," + g17(v);
      std::snprintf(buf, sizeof buf, " %8.1f |", 100 * v);
      txt += buf;
    }
    csv += "," + g17(avg) + "\n";
    std::snprintf(buf, sizeof buf, " %8.1f\n", 100 * avg);
    txt += buf;
  };
  double base_avg = 0.0;
  for (std::size_t c = 1; c < grid.baseline.size(); ++c) base_avg += grid.baseline[c];
  base_avg /= static_cast<double>(std::max<std::size_t>(1, grid.languages.size()));
  add_row("zero_shot", grid.baseline, base_avg);
  for (std::size_t a = 0; a < grid.languages.size(); ++a) add_row(grid.languages[a], grid.accuracy[a], grid.row_average[a]);

  ordered doc;
  doc["source_language"] = grid.source_language;
  doc["languages"] = grid.languages;
  doc["columns"] = cols;
  doc["baseline"] = grid.baseline;
  doc["accuracy"] = grid.accuracy;
  doc["row_average"] = grid.row_average;
  ordered gains = ordered::array();
  for (const auto& row : grid.off_diagonal_gain) {
    ordered r = ordered::array();
    for (double v : row) r.push_back(std::isnan(v) ? ordered(nullptr) : ordered(v));
    gains.push_back(r);
  }
  doc["off_diagonal_gain"] = gains;
  write_text(out_dir / "grid.csv", csv);
  write_text(out_dir / "grid.json", doc.dump(1) + "\n");
  write_text(out_dir / "grid.txt", txt);
}

std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<HistoryRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::string item;
    std::istringstream ls(line);
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 9) throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 9 columns");
    try {
      HistoryRow r;
      r.epoch = std::stoul(f[0]);
      r.task_loss = std::stod(f[1]);
      r.align_loss = std::stod(f[2]);
      r.total_loss = std::stod(f[3]);
      r.dev_source_intent_accuracy = std::stod(f[4]);
      r.dev_target_intent_accuracy = std::stod(f[5]);
      r.dev_target_slot_f1 = std::stod(f[6]);
      r.dev_align_mse = std::stod(f[7]);
      r.dev_align_cosine = std::stod(f[8]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
  }
  return rows;
}

ReportOutcome write_reports(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir) {
  ReportOutcome outcome;
  std::filesystem::create_directories(out_dir);
  ordered runs = ordered::array();
  for (const auto& dir : run_dirs) {
    const auto hist_path = dir / "history.csv";
    const auto rep_path = dir / "report.json";
    std::vector<std::string> absent;
    if (!std::filesystem::exists(hist_path)) absent.push_back("history.csv");
    if (!std::filesystem::exists(rep_path)) absent.push_back("report.json");
    if (!absent.empty()) {
      outcome.missing.push_back(dir.string() + " (missing " + join(absent, ", ") + ")");
      continue;
    }
    const auto rows = read_history_csv(hist_path);
    const json rep = json::parse(read_text(rep_path));
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    const auto plot_dir = out_dir / name;
    std::filesystem::create_directories(plot_dir);

    PlotSeries task{"task", {}, {}}, align{"align", {}, {}}, total{"total", {}, {}};
    PlotSeries src_acc{"dev source acc", {}, {}}, tgt_acc{"dev target acc", {}, {}}, tgt_f1{"dev target slot F1", {}, {}};
    PlotSeries mse{"dev CLS MSE", {}, {}}, cos_dist{"dev 1 - cosine", {}, {}};
    const auto& init = rep.at("initial_dev").at("average");
    mse.x.push_back(0);
    mse.y.push_back(init.at("align_mse").get<double>());
    cos_dist.x.push_back(0);
    cos_dist.y.push_back(1.0 - init.at("align_cosine").get<double>());
    for (const auto& r : rows) {
      const auto x = static_cast<double>(r.epoch);
      task.x.push_back(x), task.y.push_back(r.task_loss);
      align.x.push_back(x), align.y.push_back(r.align_loss);
      total.x.push_back(x), total.y.push_back(r.total_loss);
      src_acc.x.push_back(x), src_acc.y.push_back(r.dev_source_intent_accuracy);
      tgt_acc.x.push_back(x), tgt_acc.y.push_back(r.dev_target_intent_accuracy);
      tgt_f1.x.push_back(x), tgt_f1.y.push_back(r.dev_target_slot_f1);
      mse.x.push_back(x), mse.y.push_back(r.dev_align_mse);
      cos_dist.x.push_back(x), cos_dist.y.push_back(1.0 - r.dev_align_cosine);
    }
    const std::vector<std::pair<std::string, std::string>> plots{
        {"losses.svg", line_plot_svg({name + ": training losses", "epoch", "mean loss"}, {task, align, total})},
        {"accuracy.svg", line_plot_svg({name + ": dev metrics", "epoch", "score"}, {src_acc, tgt_acc, tgt_f1})},
        {"alignment.svg", line_plot_svg({name + ": parallel CLS distance", "epoch", "distance"}, {mse, cos_dist})}};
    ordered entry;
    entry["run"] = name;
    entry["dir"] = dir.string();
    entry["mode"] = rep.at("mode");
    entry["preset"] = rep.at("preset");
    entry["seed"] = rep.at("seed");
    entry["epochs"] = rows.size();
    entry["final"] = rep.at("test");
    ordered files = ordered::array();
    for (const auto& [file, svg] : plots) {
      write_text(plot_dir / file, svg);
      outcome.plotted.push_back(plot_dir / file);
      files.push_back((std::filesystem::path(name) / file).string());
    }
    entry["plots"] = files;
    runs.push_back(entry);
  }
  ordered summary;
  summary["runs"] = runs;
  summary["missing"] = outcome.missing;
  write_text(out_dir / "summary.json", summary.dump(1) + "\n");
  return outcome;
}

}  // namespace xeroalign
