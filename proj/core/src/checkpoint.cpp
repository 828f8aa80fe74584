#include <fstream>
#include <sstream>

#include "json.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/serialization.hpp"
#include "xeroalign/training.hpp"

namespace xeroalign {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

ordered lang_json(const LanguageReport& r) {
  ordered j;
  j["language"] = r.language;
  j["examples"] = r.examples;
  j["intent_accuracy"] = r.intent_accuracy;
  j["slot_precision"] = r.slot.precision;
  j["slot_recall"] = r.slot.recall;
  j["slot_f1"] = r.slot.f1;
  j["slot_matched"] = r.slot.matched;
  j["slot_predicted"] = r.slot.predicted;
  j["slot_gold"] = r.slot.gold;
  if (r.has_alignment) {
    j["align_mse"] = r.align_mse;
    j["align_cosine"] = r.align_cosine;
  }
  return j;
}

LanguageReport lang_from(const json& j) {
  LanguageReport r;
  r.language = j.at("language").get<std::string>();
  r.examples = j.at("examples").get<std::size_t>();
  r.intent_accuracy = j.at("intent_accuracy").get<double>();
  r.slot.precision = j.at("slot_precision").get<double>();
  r.slot.recall = j.at("slot_recall").get<double>();
  r.slot.f1 = j.at("slot_f1").get<double>();
  r.slot.matched = j.at("slot_matched").get<std::size_t>();
  r.slot.predicted = j.at("slot_predicted").get<std::size_t>();
  r.slot.gold = j.at("slot_gold").get<std::size_t>();
  r.has_alignment = j.contains("align_mse");
  if (r.has_alignment) {
    r.align_mse = j.at("align_mse").get<double>();
    r.align_cosine = j.at("align_cosine").get<double>();
  }
  return r;
}

ordered report_json(const EvalReport& r) {
  ordered j;
  j["split"] = r.split;
  j["source"] = lang_json(r.source);
  ordered targets = ordered::array();
  for (const auto& t : r.targets) targets.push_back(lang_json(t));
  j["targets"] = targets;
  j["average"] = {{"intent_accuracy", r.avg_intent_accuracy},
                  {"slot_f1", r.avg_slot_f1},
                  {"align_mse", r.avg_align_mse},
                  {"align_cosine", r.avg_align_cosine}};
  return j;
}

EvalReport report_from(const json& j) {
  EvalReport r;
  r.split = j.at("split").get<std::string>();
  r.source = lang_from(j.at("source"));
  for (const auto& t : j.at("targets")) r.targets.push_back(lang_from(t));
  const auto& a = j.at("average");
  r.avg_intent_accuracy = a.at("intent_accuracy").get<double>();
  r.avg_slot_f1 = a.at("slot_f1").get<double>();
  r.avg_align_mse = a.at("align_mse").get<double>();
  r.avg_align_cosine = a.at("align_cosine").get<double>();
  return r;
}

}  // namespace

std::string report_to_json(const EvalReport& report, int indent) { return report_json(report).dump(indent); }

EvalReport report_from_json(const std::string& text) {
  try {
    return report_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed report JSON: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ArchiveEntry> entries;
  const auto params = ckpt.model.named();
  for (const auto& p : params) entries.push_back(to_entry(p));
  if (ckpt.adam.m.size() != params.size() || ckpt.adam.v.size() != params.size()) {
    throw CheckpointError("checkpoint: optimizer state does not mirror the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    entries.push_back({"adam.m." + params[i].name, params[i].tensor.shape(), ckpt.adam.m[i]});
    entries.push_back({"adam.v." + params[i].name, params[i].tensor.shape(), ckpt.adam.v[i]});
  }
  write_archive(dir / "params", entries);

  ordered meta;
  meta["format"] = "xeroalign-checkpoint-1";
  meta["config"] = ckpt.config.to_kv();
  const auto& ec = ckpt.model.config;
  meta["encoder"] = {{"vocab_size", ec.vocab_size}, {"d_model", ec.d_model}, {"n_heads", ec.n_heads},
                     {"n_layers", ec.n_layers},     {"d_ff", ec.d_ff},       {"max_len", ec.max_len},
                     {"cls_id", ec.cls_id},         {"pad_id", ec.pad_id},   {"layer_norm_eps", ec.layer_norm_eps},
                     {"dropout", ec.dropout}};
  meta["adam_t"] = ckpt.adam.t;
  meta["vocab"] = ckpt.vocab.tokens();
  meta["intents"] = ckpt.intents.labels();
  meta["slots"] = ckpt.slots.labels();
  ordered epochs = ordered::array();
  for (const auto& e : ckpt.history.epochs) {
    ordered je;
    je["epoch"] = e.epoch;
    je["task_loss"] = e.task_loss;
    je["align_loss"] = e.align_loss;
    je["total_loss"] = e.total_loss;
    je["dev"] = report_json(e.dev);
    epochs.push_back(je);
  }
  meta["history"] = {{"initial_dev", report_json(ckpt.history.initial_dev)}, {"epochs", epochs}};
  std::ofstream out(dir / "checkpoint.json");
  if (!out) throw CheckpointError("cannot write " + (dir / "checkpoint.json").string());
  out << meta.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw CheckpointError("missing " + (dir / "checkpoint.json").string());
  Checkpoint ckpt;
  try {
    const json meta = json::parse(in);
    if (meta.at("format").get<std::string>() != "xeroalign-checkpoint-1") throw CheckpointError("unknown checkpoint format");
    ckpt.config = TrainConfig::from_config(KvConfig::parse(meta.at("config").get<std::string>(), "checkpoint config"));
    const auto& e = meta.at("encoder");
    EncoderConfig ec;
    ec.vocab_size = e.at("vocab_size").get<std::size_t>();
    ec.d_model = e.at("d_model").get<std::size_t>();
    ec.n_heads = e.at("n_heads").get<std::size_t>();
    ec.n_layers = e.at("n_layers").get<std::size_t>();
    ec.d_ff = e.at("d_ff").get<std::size_t>();
    ec.max_len = e.at("max_len").get<std::size_t>();
    ec.cls_id = e.at("cls_id").get<int>();
    ec.pad_id = e.at("pad_id").get<int>();
    ec.layer_norm_eps = e.at("layer_norm_eps").get<double>();
    ec.dropout = e.at("dropout").get<double>();
    ckpt.vocab = Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
    ckpt.intents = LabelSet(meta.at("intents").get<std::vector<std::string>>());
    ckpt.slots = LabelSet(meta.at("slots").get<std::vector<std::string>>());
    ckpt.model.config = ec;
    ckpt.model.encoder = init_params(ec, 0);
    ckpt.model.heads = init_heads(ec.d_model, ckpt.intents.size(), ckpt.slots.size(), 0);
    const auto& h = meta.at("history");
    ckpt.history.initial_dev = report_from(h.at("initial_dev"));
    for (const auto& je : h.at("epochs")) {
      EpochRecord r;
      r.epoch = je.at("epoch").get<std::size_t>();
      r.task_loss = je.at("task_loss").get<double>();
      r.align_loss = je.at("align_loss").get<double>();
      r.total_loss = je.at("total_loss").get<double>();
      r.dev = report_from(je.at("dev"));
      ckpt.history.epochs.push_back(std::move(r));
    }
    ckpt.adam.t = meta.at("adam_t").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("malformed " + (dir / "checkpoint.json").string() + ": " + e.what());
  }
  const auto entries = read_archive(dir / "params");
  const auto params = ckpt.model.named();
  assign_entries(entries, params);
  std::vector<NamedTensor> m_slots;
  std::vector<NamedTensor> v_slots;
  for (const auto& p : params) {
    m_slots.push_back({"adam.m." + p.name, Tensor::zeros(p.tensor.shape())});
    v_slots.push_back({"adam.v." + p.name, Tensor::zeros(p.tensor.shape())});
  }
  assign_entries(entries, m_slots);
  assign_entries(entries, v_slots);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.adam.m.emplace_back(m_slots[i].tensor.data().begin(), m_slots[i].tensor.data().end());
    ckpt.adam.v.emplace_back(v_slots[i].tensor.data().begin(), v_slots[i].tensor.data().end());
  }
  return ckpt;
}

}  // namespace xeroalign
