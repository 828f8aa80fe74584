#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xeroalign/data.hpp"
#include "xeroalign/encoder.hpp"
#include "xeroalign/heads.hpp"
#include "xeroalign/kv_config.hpp"
#include "xeroalign/metrics.hpp"
#include "xeroalign/modes.hpp"
#include "xeroalign/optim.hpp"

namespace xeroalign {

struct TrainConfig {
  TrainMode mode = TrainMode::kXeroAlign;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double lambda = 1.0;
  std::string preset = "tiny";
  double max_lr = 0.0;  // 0 selects the preset default
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  AdamConfig adam;
  double dropout = 0.0;
  // Alignment modes only; empty means every target language in the data.
  std::vector<std::string> align_languages;
  // target / translate_train only; empty means every target language.
  std::vector<std::string> label_languages;
  bool eval_each_epoch = true;  // the final epoch is always evaluated

  double effective_max_lr() const;
  // Data-independent checks; throws ConfigError.
  void validate() const;

  // Reads the keys listed in to_kv(); unknown keys are left for the caller.
  static TrainConfig from_config(const KvConfig& cfg);
  std::string to_kv() const;
};

// 3e-4 for "tiny", 1e-4 for "small".
double default_max_lr(const std::string& preset);

struct Dataset {
  SplitData train;
  SplitData dev;
  SplitData test;
  Vocab vocab;  // built from the train split, all languages
  LabelSet intents;
  LabelSet slots;

  std::vector<std::string> target_languages() const { return train.target_languages(); }
};

Dataset load_dataset(const std::filesystem::path& dir);

struct Model {
  EncoderConfig config;
  EncoderParams encoder;
  HeadParams heads;

  std::vector<NamedTensor> named() const;
};

Model init_model(const std::string& preset, std::size_t vocab_size, std::size_t n_intents, std::size_t n_slot_tags,
                 std::uint64_t seed, double dropout = 0.0);

struct LanguageReport {
  std::string language;
  std::size_t examples = 0;
  double intent_accuracy = 0.0;
  PRF slot;
  bool has_alignment = false;  // false for the source language
  double align_mse = 0.0;      // mean over pairs of mse(cls_source, cls_target)
  double align_cosine = 0.0;
};

struct EvalReport {
  std::string split;
  LanguageReport source;
  std::vector<LanguageReport> targets;
  // Arithmetic means over `targets`.
  double avg_intent_accuracy = 0.0;
  double avg_slot_f1 = 0.0;
  double avg_align_mse = 0.0;
  double avg_align_cosine = 0.0;

  const LanguageReport& language(const std::string& name) const;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global
  std::string phase;     // joint, task, align
  double lr = 0.0;
  LossBundle loss;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double align_loss = 0.0;
  double total_loss = 0.0;
  EvalReport dev;
};

struct History {
  EvalReport initial_dev;  // before the first update
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
};

struct Checkpoint {
  TrainConfig config;
  Model model;
  AdamState adam;
  Vocab vocab;
  LabelSet intents;
  LabelSet slots;
  History history;
};

// Per-epoch callback, e.g. for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Throws ConfigError when the mode/data contract is violated.
Checkpoint train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

// Greedy decoding of intents and slots; throws InputError when no token of the
// split is known to the checkpoint vocabulary.
EvalReport evaluate(const Checkpoint& ckpt, const SplitData& split);
EvalReport evaluate(const Model& model, const Vocab& vocab, const LabelSet& intents, const LabelSet& slots,
                    const SplitData& split);

std::string report_to_json(const EvalReport& report, int indent = 1);
EvalReport report_from_json(const std::string& text);

// `<dir>/checkpoint.json` plus `<dir>/params.json` and `<dir>/params.bin`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace xeroalign
