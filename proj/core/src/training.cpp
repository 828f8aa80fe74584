#include "xeroalign/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>

#include "xeroalign/errors.hpp"
#include "xeroalign/ops.hpp"
#include "xeroalign/rng.hpp"

namespace xeroalign {
namespace {

constexpr std::size_t kEvalBatch = 64;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

enum class Phase { kJoint, kTask, kAlign };

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kJoint: return "joint";
    case Phase::kTask: return "task";
    case Phase::kAlign: return "align";
  }
  return "?";
}

struct PairRows {
  const std::vector<int>* source = nullptr;
  const EncodedExample* labelled = nullptr;  // set for joint steps
  const std::vector<int>* target = nullptr;
};

struct StepPlan {
  Phase phase = Phase::kTask;
  std::vector<const EncodedExample*> task_rows;
  std::vector<PairRows> pairs;
};

struct AlignPool {
  std::vector<EncodedExample> source;
  std::map<std::string, std::vector<std::vector<int>>> targets;
};

AlignPool make_pool(const SplitData& split, const std::vector<std::string>& langs, const Vocab& vocab,
                    std::size_t max_len, const LabelSet* intents, const LabelSet* slots) {
  AlignPool pool;
  for (const auto& ex : split.source) pool.source.push_back(encode_example(ex.source, vocab, max_len, intents, slots));
  for (const auto& lang : langs) {
    auto& rows = pool.targets[lang];
    for (const auto& ex : split.targets.at(lang)) rows.push_back(encode_tokens(ex.target_tokens, vocab, max_len));
  }
  return pool;
}

// Row p of the shuffled epoch order aligns against langs[(p + epoch) % n].
std::vector<StepPlan> pair_steps(const AlignPool& pool, const std::vector<std::string>& langs, Phase phase,
                                 std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  std::vector<StepPlan> steps;
  std::size_t p = 0;
  for (const auto& group : batch_order(pool.source.size(), batch_size, seed, epoch)) {
    StepPlan s;
    s.phase = phase;
    for (auto i : group) {
      const auto& lang = langs[(p + epoch) % langs.size()];
      s.pairs.push_back({&pool.source[i].ids, &pool.source[i], &pool.targets.at(lang)[i]});
      ++p;
    }
    steps.push_back(std::move(s));
  }
  return steps;
}

std::vector<StepPlan> task_steps(const std::vector<EncodedExample>& examples, std::size_t batch_size,
                                 std::uint64_t seed, std::size_t epoch) {
  std::vector<StepPlan> steps;
  for (const auto& group : batch_order(examples.size(), batch_size, seed, epoch)) {
    StepPlan s;
    s.phase = Phase::kTask;
    for (auto i : group) s.task_rows.push_back(&examples[i]);
    steps.push_back(std::move(s));
  }
  return steps;
}

TaskTargets targets_for(const std::vector<const EncodedExample*>& rows, std::size_t length) {
  TaskTargets t;
  bool slots = true;
  for (const auto* r : rows) {
    t.intents.push_back(r->intent);
    slots = slots && !r->slot_ids.empty();
  }
  if (slots) {
    std::vector<int> s(rows.size() * length, ops::kIgnoreIndex);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i]->slot_ids.begin(), rows[i]->slot_ids.end(), s.begin() + static_cast<std::ptrdiff_t>(i * length));
    t.slots = std::move(s);
  }
  return t;
}

LossBundle run_step(const StepPlan& plan, const Model& model, double lambda, Rng* dropout_rng) {
  Graph g;
  LossBundle out;
  Tensor total;
  if (plan.phase == Phase::kTask) {
    std::vector<const std::vector<int>*> rows;
    for (const auto* r : plan.task_rows) rows.push_back(&r->ids);
    const TokenBatch batch = pad_batch(rows);
    const auto enc = encode(g, model.encoder, model.config, batch, dropout_rng);
    const auto task = task_loss(g, enc, model.heads, targets_for(plan.task_rows, batch.length));
    total = task.task;
    out.task_loss = task.task.item();
    out.intent_loss = task.intent.item();
    out.slot_loss = task.slot.defined() ? task.slot.item() : 0.0;
  } else {
    // Source and target rows share one encoder pass; the math equals two separate passes.
    const std::size_t b = plan.pairs.size();
    std::vector<const std::vector<int>*> rows;
    for (const auto& p : plan.pairs) rows.push_back(p.source);
    for (const auto& p : plan.pairs) rows.push_back(p.target);
    const TokenBatch batch = pad_batch(rows);
    const auto enc = encode(g, model.encoder, model.config, batch, dropout_rng);
    const Tensor cls_s = ops::slice_rows(g, enc.cls, 0, b);
    const Tensor cls_t = ops::slice_rows(g, enc.cls, b, 2 * b);
    const Tensor align = xero_align_loss(g, cls_s, cls_t);
    out.align_loss = align.item();
    if (plan.phase == Phase::kJoint) {
      std::vector<const EncodedExample*> labelled;
      for (const auto& p : plan.pairs) labelled.push_back(p.labelled);
      const SequenceEncoding source_enc{cls_s, ops::slice_rows(g, enc.tokens, 0, b)};
      const auto task = task_loss(g, source_enc, model.heads, targets_for(labelled, batch.length));
      total = total_loss(g, task.task, align, lambda);
      out.task_loss = task.task.item();
      out.intent_loss = task.intent.item();
      out.slot_loss = task.slot.defined() ? task.slot.item() : 0.0;
    } else {
      total = total_loss(g, Tensor::scalar(0.0), align, lambda);
    }
  }
  out.total_loss = total.item();
  g.backward(total);
  return out;
}

void check_languages(const std::vector<std::string>& wanted, const std::vector<std::string>& available,
                     const char* key) {
  for (const auto& l : wanted) {
    if (std::find(available.begin(), available.end(), l) == available.end()) {
      throw ConfigError(std::string(key) + ": language '" + l + "' is not a target language of the data (" +
                        join(available) + ")");
    }
  }
}

}  // namespace

double default_max_lr(const std::string& preset) {
  if (preset == "tiny") return 3e-4;
  if (preset == "small") return 1e-4;
  throw ConfigError("unknown encoder preset '" + preset + "' (expected tiny or small)");
}

double TrainConfig::effective_max_lr() const { return max_lr > 0.0 ? max_lr : default_max_lr(preset); }

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (max_lr < 0.0) throw ConfigError("max_lr must be >= 0 (0 selects the preset default)");
  default_max_lr(preset);
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (!is_alignment_mode(mode) && !align_languages.empty()) {
    throw ConfigError("align_languages given for non-alignment mode " + to_string(mode));
  }
  if (!reads_target_labels(mode) && !label_languages.empty()) {
    throw ConfigError("label_languages given for mode " + to_string(mode) + ", which may not use target labels");
  }
  OneCycleSchedule{effective_max_lr(), 1, pct_start, div_factor, final_div_factor}.validate();
}

TrainConfig TrainConfig::from_config(const KvConfig& cfg) {
  TrainConfig c;
  c.mode = parse_mode(cfg.get_string("mode", to_string(c.mode)));
  const auto non_negative = [&](const char* key, std::int64_t fallback) {
    const auto v = cfg.get_int(key, fallback);
    if (v < 0) throw ConfigError(cfg.origin() + ": " + key + " must be >= 0");
    return v;
  };
  c.epochs = static_cast<std::size_t>(non_negative("epochs", static_cast<std::int64_t>(c.epochs)));
  c.batch_size = static_cast<std::size_t>(non_negative("batch_size", static_cast<std::int64_t>(c.batch_size)));
  c.seed = static_cast<std::uint64_t>(non_negative("seed", static_cast<std::int64_t>(c.seed)));
  c.lambda = cfg.get_double("lambda", c.lambda);
  c.preset = cfg.get_string("preset", c.preset);
  c.max_lr = cfg.get_double("max_lr", c.max_lr);
  c.pct_start = cfg.get_double("pct_start", c.pct_start);
  c.div_factor = cfg.get_double("div_factor", c.div_factor);
  c.final_div_factor = cfg.get_double("final_div_factor", c.final_div_factor);
  c.adam.beta1 = cfg.get_double("beta1", c.adam.beta1);
  c.adam.beta2 = cfg.get_double("beta2", c.adam.beta2);
  c.adam.eps = cfg.get_double("adam_eps", c.adam.eps);
  c.adam.weight_decay = cfg.get_double("weight_decay", c.adam.weight_decay);
  c.dropout = cfg.get_double("dropout", c.dropout);
  c.align_languages = cfg.get_list("align_languages", {});
  c.label_languages = cfg.get_list("label_languages", {});
  c.eval_each_epoch = cfg.get_bool("eval_each_epoch", c.eval_each_epoch);
  c.validate();
  return c;
}

std::string TrainConfig::to_kv() const {
  std::string out;
  auto put = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  put("mode", to_string(mode));
  put("epochs", std::to_string(epochs));
  put("batch_size", std::to_string(batch_size));
  put("seed", std::to_string(seed));
  put("lambda", fmt_double(lambda));
  put("preset", preset);
  put("max_lr", fmt_double(effective_max_lr()));
  put("pct_start", fmt_double(pct_start));
  put("div_factor", fmt_double(div_factor));
  put("final_div_factor", fmt_double(final_div_factor));
  put("beta1", fmt_double(adam.beta1));
  put("beta2", fmt_double(adam.beta2));
  put("adam_eps", fmt_double(adam.eps));
  put("weight_decay", fmt_double(adam.weight_decay));
  put("dropout", fmt_double(dropout));
  if (!align_languages.empty()) put("align_languages", join(align_languages));
  if (!label_languages.empty()) put("label_languages", join(label_languages));
  put("eval_each_epoch", eval_each_epoch ? "true" : "false");
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.train = load_split(dir, "train");
  d.dev = load_split(dir, "dev");
  d.test = load_split(dir, "test");
  for (const auto* split : {&d.dev, &d.test}) {
    if (split->target_languages() != d.train.target_languages() || split->source_language != d.train.source_language) {
      throw InputError(dir.string() + ": " + split->split + " languages differ from train");
    }
  }
  std::vector<const std::vector<ParallelExample>*> corpora{&d.train.source};
  for (const auto& [_, c] : d.train.targets) corpora.push_back(&c);
  d.vocab = build_vocab(corpora);
  d.intents = build_intent_labels(d.train.source);
  d.slots = build_slot_labels(d.train.source);
  return d;
}

std::vector<NamedTensor> Model::named() const {
  auto out = encoder.named();
  for (auto& h : heads.named()) out.push_back(std::move(h));
  return out;
}

Model init_model(const std::string& preset, std::size_t vocab_size, std::size_t n_intents, std::size_t n_slot_tags,
                 std::uint64_t seed, double dropout) {
  Model m;
  m.config = EncoderConfig::preset(preset, vocab_size);
  m.config.dropout = dropout;
  m.encoder = init_params(m.config, seed);
  m.heads = init_heads(m.config.d_model, n_intents, n_slot_tags, seed);
  return m;
}

Checkpoint train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  config.validate();
  const auto langs_available = data.target_languages();
  check_languages(config.align_languages, langs_available, "align_languages");
  check_languages(config.label_languages, langs_available, "label_languages");
  const auto align_langs = config.align_languages.empty() ? langs_available : config.align_languages;
  const auto label_langs = config.label_languages.empty() ? langs_available : config.label_languages;

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.vocab = data.vocab;
  ckpt.intents = data.intents;
  ckpt.slots = data.slots;
  ckpt.model = init_model(config.preset, data.vocab.size(), data.intents.size(), data.slots.size(), config.seed,
                          config.dropout);
  const std::size_t max_len = ckpt.model.config.max_len;
  const auto params = ckpt.model.named();
  Adam adam(params, config.adam);

  // Task examples. Target labels are only reachable through a LabelAccess,
  // which for_training() refuses to hand out to zero-shot style modes.
  std::vector<EncodedExample> task_examples;
  const bool use_source_labels = config.mode != TrainMode::kTarget;
  if (use_source_labels) {
    for (const auto& ex : data.train.source)
      task_examples.push_back(encode_example(ex.source, data.vocab, max_len, &data.intents, &data.slots));
  }
  if (reads_target_labels(config.mode)) {
    const LabelAccess access = LabelAccess::for_training(config.mode);
    for (const auto& lang : label_langs)
      for (const auto& ex : data.train.targets.at(lang))
        task_examples.push_back(encode_example(ex.target_gold(access), data.vocab, max_len, &data.intents, &data.slots));
  }

  const bool aligning = is_alignment_mode(config.mode) && config.lambda != 0.0;
  AlignPool pool;
  std::vector<AlignPool> extra;
  if (aligning) {
    pool = make_pool(data.train, align_langs, data.vocab, max_len, &data.intents, &data.slots);
    if (config.mode == TrainMode::kUnlabeledEval) {
      extra.push_back(make_pool(data.dev, align_langs, data.vocab, max_len, nullptr, nullptr));
      extra.push_back(make_pool(data.test, align_langs, data.vocab, max_len, nullptr, nullptr));
    }
  }

  // Phases: (kind, epochs).
  std::vector<std::pair<Phase, std::size_t>> phases;
  const std::size_t half = config.epochs / 2;
  switch (config.mode) {
    case TrainMode::kXeroAlign:
    case TrainMode::kUnlabeledEval: phases.push_back({aligning ? Phase::kJoint : Phase::kTask, config.epochs}); break;
    case TrainMode::kSeqAlignFirst:
      phases.push_back({aligning ? Phase::kAlign : Phase::kTask, half});
      phases.push_back({Phase::kTask, config.epochs - half});
      break;
    case TrainMode::kSeqTaskFirst:
      phases.push_back({Phase::kTask, half});
      phases.push_back({aligning ? Phase::kAlign : Phase::kTask, config.epochs - half});
      break;
    default: phases.push_back({Phase::kTask, config.epochs}); break;
  }

  auto epoch_steps = [&](Phase phase, std::size_t epoch) {
    if (phase == Phase::kTask) return task_steps(task_examples, config.batch_size, config.seed, epoch);
    auto steps = pair_steps(pool, align_langs, phase, config.batch_size, config.seed, epoch);
    if (!extra.empty()) {
      for (std::size_t k = 0; k < extra.size(); ++k) {
        auto more = pair_steps(extra[k], align_langs, Phase::kAlign, config.batch_size,
                               mix_seed(config.seed, {0x6578747261, k}), epoch);  // "extra"
        for (auto& s : more) steps.push_back(std::move(s));
      }
      Rng mix(config.seed, {0x6d6978, epoch});  // "mix"
      mix.shuffle(std::span<StepPlan>(steps));
    }
    return steps;
  };

  std::optional<Rng> dropout_rng;
  if (config.dropout > 0.0) dropout_rng.emplace(config.seed, std::initializer_list<std::uint64_t>{0x64726f70});
  ckpt.history.initial_dev = evaluate(ckpt.model, data.vocab, data.intents, data.slots, data.dev);

  std::size_t epoch = 0;
  std::size_t global_step = 0;
  for (const auto& [phase, n_epochs] : phases) {
    if (n_epochs == 0) continue;
    const std::size_t per_epoch = epoch_steps(phase, epoch).size();
    OneCycleSchedule schedule{config.effective_max_lr(), per_epoch * n_epochs, config.pct_start, config.div_factor,
                              config.final_div_factor};
    Adam phase_adam(params, config.adam);  // fresh moments for every phase
    std::size_t phase_step = 0;
    for (std::size_t e = 0; e < n_epochs; ++e, ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      const auto steps = epoch_steps(phase, epoch);
      for (const auto& plan : steps) {
        const double lr = schedule.lr_at(phase_step++);
        const LossBundle loss = run_step(plan, ckpt.model, config.lambda, dropout_rng ? &*dropout_rng : nullptr);
        for (const auto& p : params) p.tensor.grad_buffer();
        phase_adam.step(lr);
        ckpt.history.steps.push_back({epoch, global_step++, phase_name(plan.phase), lr, loss});
        rec.task_loss += loss.task_loss;
        rec.align_loss += loss.align_loss;
        rec.total_loss += loss.total_loss;
      }
      const auto n = static_cast<double>(steps.size());
      rec.task_loss /= n;
      rec.align_loss /= n;
      rec.total_loss /= n;
      if (config.eval_each_epoch || epoch + 1 == config.epochs) rec.dev = evaluate(ckpt.model, data.vocab, data.intents, data.slots, data.dev);
      if (on_epoch) on_epoch(rec);
      ckpt.history.epochs.push_back(std::move(rec));
    }
    ckpt.adam = phase_adam.state();
  }
  if (ckpt.adam.m.empty()) ckpt.adam = adam.state();
  return ckpt;
}

const LanguageReport& EvalReport::language(const std::string& name) const {
  if (source.language == name) return source;
  for (const auto& t : targets)
    if (t.language == name) return t;
  throw InputError("report has no language '" + name + "'");
}

namespace {

struct Decoded {
  std::vector<int> intents;
  std::vector<std::vector<std::string>> slots;
  std::vector<std::vector<double>> cls;
};

Decoded decode(const Model& model, const LabelSet& slots, const std::vector<std::vector<int>>& ids,
               const std::vector<std::size_t>& lengths) {
  Decoded out;
  const std::size_t h = model.config.d_model;
  for (std::size_t start = 0; start < ids.size(); start += kEvalBatch) {
    const std::size_t end = std::min(ids.size(), start + kEvalBatch);
    std::vector<const std::vector<int>*> rows;
    for (std::size_t i = start; i < end; ++i) rows.push_back(&ids[i]);
    const TokenBatch batch = pad_batch(rows);
    Graph g(false);
    const auto enc = encode(g, model.encoder, model.config, batch);
    const auto il = intent_logits(g, enc.cls, model.heads);
    const auto sl = slot_logits(g, enc.tokens, model.heads);
    const std::size_t ni = model.heads.n_intents();
    const std::size_t ns = model.heads.n_slot_tags();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto* row = il.data().data() + r * ni;
      out.intents.push_back(static_cast<int>(std::max_element(row, row + ni) - row));
      std::vector<std::string> tags;
      for (std::size_t t = 1; t < rows[r]->size(); ++t) {
        const auto* logit = sl.data().data() + (r * batch.length + t) * ns;
        tags.push_back(slots.label(static_cast<int>(std::max_element(logit, logit + ns) - logit)));
      }
      tags.resize(lengths[start + r], "O");  // tokens cut by truncation count as O
      out.slots.push_back(std::move(tags));
      const auto* c = enc.cls.data().data() + r * h;
      out.cls.emplace_back(c, c + h);
    }
  }
  return out;
}

LanguageReport score(const std::string& language, const Decoded& d, const std::vector<const Example*>& gold,
                     const LabelSet& intents) {
  LanguageReport r;
  r.language = language;
  r.examples = gold.size();
  std::vector<int> golds;
  std::vector<std::vector<std::string>> gold_tags;
  std::vector<std::vector<std::string>> pred_tags;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    golds.push_back(intents.id(gold[i]->intent));
    if (gold[i]->slots) {
      gold_tags.push_back(*gold[i]->slots);
      pred_tags.push_back(d.slots[i]);
    }
  }
  r.intent_accuracy = accuracy(std::span<const int>(d.intents), std::span<const int>(golds));
  r.slot = span_f1(gold_tags, pred_tags);
  return r;
}

}  // namespace

EvalReport evaluate(const Model& model, const Vocab& vocab, const LabelSet& intents, const LabelSet& slots,
                    const SplitData& split) {
  if (vocab.size() != model.config.vocab_size) {
    throw InputError("evaluate: vocabulary of " + std::to_string(vocab.size()) + " entries for an embedding table of " +
                     std::to_string(model.config.vocab_size) + " rows");
  }
  const auto access = LabelAccess::for_evaluation();
  const std::size_t max_len = model.config.max_len;
  std::size_t known = 0;
  auto encode_all = [&](auto&& tokens_of, std::size_t n, std::vector<std::size_t>& lengths) {
    std::vector<std::vector<int>> ids;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& tokens = tokens_of(i);
      ids.push_back(encode_tokens(tokens, vocab, max_len));
      lengths.push_back(tokens.size());
      for (std::size_t t = 1; t < ids.back().size(); ++t) known += ids.back()[t] != Vocab::kUnk ? 1 : 0;
    }
    return ids;
  };

  EvalReport report;
  report.split = split.split;
  std::vector<std::size_t> src_len;
  const auto src_ids = encode_all([&](std::size_t i) -> const std::vector<std::string>& { return split.source[i].source.tokens; },
                                  split.source.size(), src_len);
  const Decoded src = decode(model, slots, src_ids, src_len);
  std::vector<const Example*> src_gold;
  for (const auto& ex : split.source) src_gold.push_back(&ex.source);
  report.source = score(split.source_language, src, src_gold, intents);

  for (const auto& [lang, corpus] : split.targets) {
    std::vector<std::size_t> len;
    const auto ids = encode_all([&](std::size_t i) -> const std::vector<std::string>& { return corpus[i].target_tokens; },
                                corpus.size(), len);
    const Decoded d = decode(model, slots, ids, len);
    std::vector<const Example*> gold;
    for (const auto& ex : corpus) gold.push_back(&ex.target_gold(access));
    LanguageReport r = score(lang, d, gold, intents);
    r.has_alignment = true;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& s = src.cls[i];
      const auto& t = d.cls[i];
      double sq = 0.0, dot = 0.0, ns = 0.0, nt = 0.0;
      for (std::size_t k = 0; k < s.size(); ++k) {
        sq += (s[k] - t[k]) * (s[k] - t[k]);
        dot += s[k] * t[k];
        ns += s[k] * s[k];
        nt += t[k] * t[k];
      }
      r.align_mse += sq / static_cast<double>(s.size());
      r.align_cosine += (ns > 0.0 && nt > 0.0) ? dot / std::sqrt(ns * nt) : 0.0;
    }
    r.align_mse /= static_cast<double>(corpus.size());
    r.align_cosine /= static_cast<double>(corpus.size());
    report.targets.push_back(std::move(r));
  }
  if (known == 0) throw InputError("evaluate: no token of split '" + split.split + "' is in the checkpoint vocabulary");
  for (const auto& t : report.targets) {
    report.avg_intent_accuracy += t.intent_accuracy;
    report.avg_slot_f1 += t.slot.f1;
    report.avg_align_mse += t.align_mse;
    report.avg_align_cosine += t.align_cosine;
  }
  const auto n = static_cast<double>(report.targets.size());
  report.avg_intent_accuracy /= n;
  report.avg_slot_f1 /= n;
  report.avg_align_mse /= n;
  report.avg_align_cosine /= n;
  return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const SplitData& split) {
  return evaluate(ckpt.model, ckpt.vocab, ckpt.intents, ckpt.slots, split);
}

}  // namespace xeroalign
