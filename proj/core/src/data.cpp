#include "xeroalign/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/ops.hpp"
#include "xeroalign/rng.hpp"

namespace xeroalign {
namespace {

using nlohmann::json;

bool well_formed_tag(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') return false;
  return std::all_of(tag.begin() + 2, tag.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw InputError(where + ": unknown field '" + key + "'");
    }
  }
}

std::vector<std::string> string_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw InputError(where + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) throw InputError(where + " must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw InputError(where + ": missing field '" + key + "'");
  if (!obj.at(key).is_string()) throw InputError(where + ": field '" + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

ParallelExample from_json(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + ": expected a JSON object");
  reject_unknown(obj, {"pair_id", "source", "target"}, where);
  ParallelExample ex;
  ex.pair_id = get_string(obj, "pair_id", where);
  const std::string at = where + " (pair " + ex.pair_id + ")";
  if (!obj.contains("source") || !obj.at("source").is_object()) throw InputError(at + ": missing object 'source'");
  if (!obj.contains("target") || !obj.at("target").is_object()) throw InputError(at + ": missing object 'target'");
  const json& s = obj.at("source");
  const json& t = obj.at("target");
  reject_unknown(s, {"tokens", "intent", "slots", "language"}, at + " source");
  reject_unknown(t, {"tokens", "intent", "slots", "language"}, at + " target");
  if (!s.contains("tokens")) throw InputError(at + ": source.tokens missing");
  if (!t.contains("tokens")) throw InputError(at + ": target.tokens missing");
  ex.source.tokens = string_list(s.at("tokens"), at + " source.tokens");
  ex.source.intent = get_string(s, "intent", at + " source");
  ex.source.language = get_string(s, "language", at + " source");
  if (s.contains("slots")) ex.source.slots = string_list(s.at("slots"), at + " source.slots");
  ex.target_tokens = string_list(t.at("tokens"), at + " target.tokens");
  ex.target_language = get_string(t, "language", at + " target");
  if (t.contains("slots") && !t.contains("intent")) throw InputError(at + ": target.slots without target.intent");
  validate_example(ex.source, at + " source");
  if (ex.target_tokens.empty()) throw InputError(at + ": target.tokens is empty");
  if (t.contains("intent")) {
    Example gold;
    gold.tokens = ex.target_tokens;
    gold.intent = get_string(t, "intent", at + " target");
    gold.language = ex.target_language;
    if (t.contains("slots")) gold.slots = string_list(t.at("slots"), at + " target.slots");
    validate_example(gold, at + " target");
    ex.set_target_gold(std::move(gold));
  }
  return ex;
}

json example_json(const Example& ex, bool with_labels) {
  json out{{"tokens", ex.tokens}, {"language", ex.language}};
  if (with_labels) {
    out["intent"] = ex.intent;
    if (ex.slots) out["slots"] = *ex.slots;
  }
  return out;
}

}  // namespace

LabelAccess LabelAccess::for_training(TrainMode mode) {
  if (!reads_target_labels(mode)) {
    throw ZeroShotViolation("training mode '" + to_string(mode) + "' may not read target-language labels");
  }
  return LabelAccess();
}

LabelAccess LabelAccess::for_evaluation() { return LabelAccess(); }

const Example& ParallelExample::target_gold(const LabelAccess&) const {
  if (!target_gold_) throw InputError("pair " + pair_id + " carries no target labels");
  return *target_gold_;
}

std::optional<std::string> bio_error(std::span<const std::string> tags) {
  std::string open;  // type of the span the previous tag belongs to, "" after O
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& tag = tags[i];
    if (!well_formed_tag(tag)) return "tag '" + tag + "' at position " + std::to_string(i) + " is malformed";
    if (tag == "O") {
      open.clear();
      continue;
    }
    const std::string type = tag.substr(2);
    if (tag[0] == 'I' && open != type) {
      return "tag '" + tag + "' at position " + std::to_string(i) + " does not continue a " + type + " span";
    }
    open = type;
  }
  return std::nullopt;
}

void validate_example(const Example& ex, const std::string& context) {
  if (ex.tokens.empty()) throw InputError(context + ": tokens are empty");
  if (ex.intent.empty()) throw InputError(context + ": intent is empty");
  if (!ex.slots) return;
  if (ex.slots->size() != ex.tokens.size()) {
    throw InputError(context + ": " + std::to_string(ex.slots->size()) + " slot tags for " +
                     std::to_string(ex.tokens.size()) + " tokens");
  }
  if (auto err = bio_error(*ex.slots)) throw InputError(context + ": invalid BIO, " + *err);
}

std::vector<ParallelExample> parse_jsonl(const std::string& text, const std::string& origin) {
  std::vector<ParallelExample> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(where + ": malformed JSON: " + e.what());
    }
    auto ex = from_json(obj, where);
    if (!seen.insert(ex.pair_id).second) throw InputError(where + ": duplicate pair_id " + ex.pair_id);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<ParallelExample> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str(), path.string());
}

std::string to_jsonl_line(const ParallelExample& ex) {
  json target{{"tokens", ex.target_tokens}, {"language", ex.target_language}};
  if (ex.has_target_gold()) {
    const auto& gold = ex.target_gold(LabelAccess::for_evaluation());
    target["intent"] = gold.intent;
    if (gold.slots) target["slots"] = *gold.slots;
  }
  json obj{{"pair_id", ex.pair_id}, {"source", example_json(ex.source, true)}, {"target", target}};
  return obj.dump();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<ParallelExample>& corpus) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& ex : corpus) out << to_jsonl_line(ex) << "\n";
}

Vocab::Vocab() {
  add("[PAD]");
  add("[CLS]");
  add("[UNK]");
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 3) throw CheckpointError("vocab: fewer entries than reserved ids");
  Vocab v;
  for (std::size_t i = 3; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != tokens.size()) throw CheckpointError("vocab: duplicate tokens");
  return v;
}

void Vocab::add(const std::string& token) {
  if (ids_.count(token)) return;
  ids_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocab: id " + std::to_string(id) + " outside [0, " + std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Vocab build_vocab(const std::vector<const std::vector<ParallelExample>*>& corpora, std::size_t min_count) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  auto visit = [&](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens)
      if (counts[t]++ == 0) order.push_back(t);
  };
  for (const auto* corpus : corpora) {
    for (const auto& ex : *corpus) {
      visit(ex.source.tokens);
      visit(ex.target_tokens);
    }
  }
  if (order.empty()) throw InputError("build_vocab: empty corpus");
  Vocab v;
  for (const auto& t : order)
    if (counts[t] >= min_count) v.add(t);
  return v;
}

Vocab build_vocab(const std::vector<ParallelExample>& corpus, std::size_t min_count) {
  return build_vocab(std::vector<const std::vector<ParallelExample>*>{&corpus}, min_count);
}

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!ids_.emplace(labels_[i], static_cast<int>(i)).second) throw InputError("label set: duplicate label " + labels_[i]);
  }
}

int LabelSet::id(const std::string& label) const {
  auto it = ids_.find(label);
  return it == ids_.end() ? -1 : it->second;
}

LabelSet build_intent_labels(const std::vector<ParallelExample>& corpus) {
  std::set<std::string> intents;
  for (const auto& ex : corpus) intents.insert(ex.source.intent);
  return LabelSet(std::vector<std::string>(intents.begin(), intents.end()));
}

LabelSet build_slot_labels(const std::vector<ParallelExample>& corpus) {
  std::set<std::string> types;
  for (const auto& ex : corpus)
    if (ex.source.slots)
      for (const auto& tag : *ex.source.slots)
        if (tag != "O") types.insert(tag.substr(2));
  std::vector<std::string> labels{"O"};
  for (const auto& t : types) {
    labels.push_back("B-" + t);
    labels.push_back("I-" + t);
  }
  return LabelSet(std::move(labels));
}

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocab& vocab, std::size_t max_len,
                               bool* truncated) {
  if (tokens.empty()) throw InputError("encode: empty token list");
  if (max_len < 2) throw ConfigError("encode: max_len must leave room for CLS and one token");
  const std::size_t keep = std::min(tokens.size(), max_len - 1);
  std::vector<int> ids;
  ids.reserve(keep + 1);
  ids.push_back(Vocab::kCls);
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(vocab.id(tokens[i]));
  if (truncated) *truncated = keep < tokens.size();
  return ids;
}

EncodedExample encode_example(const Example& ex, const Vocab& vocab, std::size_t max_len, const LabelSet* intents,
                              const LabelSet* slots) {
  EncodedExample out;
  out.ids = encode_tokens(ex.tokens, vocab, max_len, &out.truncated);
  if (intents) out.intent = intents->id(ex.intent);
  if (slots && ex.slots) {
    out.slot_ids.reserve(out.ids.size());
    out.slot_ids.push_back(ops::kIgnoreIndex);
    for (std::size_t i = 0; i + 1 < out.ids.size(); ++i) {
      const int id = slots->id((*ex.slots)[i]);
      out.slot_ids.push_back(id < 0 ? ops::kIgnoreIndex : id);
    }
  }
  return out;
}

TokenBatch pad_batch(std::span<const std::vector<int>* const> rows) {
  TokenBatch b;
  b.batch = rows.size();
  for (const auto* r : rows) b.length = std::max(b.length, r->size());
  b.ids.assign(b.batch * b.length, Vocab::kPad);
  b.mask.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i]->begin(), rows[i]->end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(i * b.length), rows[i]->size(), 1);
  }
  return b;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed, {0x7368756666, epoch});  // "shuff"
  rng.shuffle(std::span<std::size_t>(idx));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

std::vector<Batch> make_batches(const std::vector<ParallelExample>& corpus, const Vocab& vocab,
                                const LabelSet& intents, const LabelSet& slots, std::size_t max_len,
                                std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto& group : batch_order(corpus.size(), batch_size, seed, epoch)) {
    std::vector<EncodedExample> src;
    std::vector<std::vector<int>> tgt;
    Batch b;
    bool all_slots = true;
    for (auto i : group) {
      const auto& ex = corpus[i];
      b.pair_ids.push_back(ex.pair_id);
      src.push_back(encode_example(ex.source, vocab, max_len, &intents, &slots));
      tgt.push_back(encode_tokens(ex.target_tokens, vocab, max_len));
      all_slots = all_slots && ex.source.slots.has_value();
    }
    std::vector<const std::vector<int>*> src_rows;
    std::vector<const std::vector<int>*> tgt_rows;
    for (const auto& e : src) src_rows.push_back(&e.ids);
    for (const auto& t : tgt) tgt_rows.push_back(&t);
    b.source = pad_batch(src_rows);
    b.target = pad_batch(tgt_rows);
    for (const auto& e : src) b.targets.intents.push_back(e.intent);
    if (all_slots) {
      std::vector<int> slot_targets(b.source.batch * b.source.length, ops::kIgnoreIndex);
      for (std::size_t r = 0; r < src.size(); ++r)
        std::copy(src[r].slot_ids.begin(), src[r].slot_ids.end(),
                  slot_targets.begin() + static_cast<std::ptrdiff_t>(r * b.source.length));
      b.targets.slots = std::move(slot_targets);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::string> SplitData::target_languages() const {
  std::vector<std::string> out;
  for (const auto& [lang, _] : targets) out.push_back(lang);
  return out;
}

SplitData load_split(const std::filesystem::path& dir, const std::string& split) {
  if (!std::filesystem::is_directory(dir)) throw InputError("data directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind(split + ".", 0) == 0 && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("no " + split + ".<lang>.jsonl files in " + dir.string());

  SplitData data;
  data.split = split;
  std::optional<std::vector<ParallelExample>> source_file;
  for (const auto& f : files) {
    const auto name = f.filename().string();
    const std::string lang = name.substr(split.size() + 1, name.size() - split.size() - 1 - 6);
    auto corpus = load_jsonl(f);
    if (corpus.empty()) throw InputError(f.string() + " is empty");
    for (const auto& ex : corpus) {
      if (ex.target_language != lang) {
        throw InputError(f.string() + ": pair " + ex.pair_id + " has target language '" + ex.target_language +
                         "', file says '" + lang + "'");
      }
    }
    if (corpus.front().source.language == lang) {
      if (source_file) throw InputError("two source-language files for split " + split + " in " + dir.string());
      data.source_language = lang;
      source_file = std::move(corpus);
    } else {
      data.targets[lang] = std::move(corpus);
    }
  }
  if (data.targets.empty()) throw InputError("split " + split + " in " + dir.string() + " has no target languages");
  if (!source_file) {
    source_file.emplace();
    for (const auto& ex : data.targets.begin()->second) {
      ParallelExample id;
      id.pair_id = ex.pair_id;
      id.source = ex.source;
      id.target_tokens = ex.source.tokens;
      id.target_language = ex.source.language;
      id.set_target_gold(ex.source);
      source_file->push_back(std::move(id));
    }
    data.source_language = data.targets.begin()->second.front().source.language;
  }
  data.source = std::move(*source_file);

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < data.source.size(); ++i) position[data.source[i].pair_id] = i;
  for (auto& [lang, corpus] : data.targets) {
    if (corpus.size() != data.source.size()) {
      throw InputError(split + "." + lang + ".jsonl has " + std::to_string(corpus.size()) + " pairs, source has " +
                       std::to_string(data.source.size()));
    }
    std::vector<ParallelExample> aligned(corpus.size());
    for (auto& ex : corpus) {
      auto it = position.find(ex.pair_id);
      if (it == position.end()) throw InputError(split + "." + lang + ".jsonl: pair " + ex.pair_id + " not in the source file");
      aligned[it->second] = std::move(ex);
    }
    corpus = std::move(aligned);
  }
  return data;
}

}  // namespace xeroalign
