#include "xeroalign/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/rng.hpp"

namespace xeroalign {
namespace {

using nlohmann::json;

bool is_slot(const std::string& element) {
  return element.size() > 2 && element.front() == '[' && element.back() == ']';
}

std::string slot_name(const std::string& element) { return element.substr(1, element.size() - 2); }

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string w;
  for (char c : text) {
    if (c == ' ' || c == '\t') {
      if (!w.empty()) out.push_back(std::move(w));
      w.clear();
    } else {
      w.push_back(c);
    }
  }
  if (!w.empty()) out.push_back(std::move(w));
  return out;
}

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "kr"};
constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ou"};

std::string pseudo_word(Rng& rng) {
  const auto syllables = 2 + rng.below(2);
  std::string w;
  for (std::uint64_t i = 0; i < syllables; ++i) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kNuclei[rng.below(std::size(kNuclei))];
  }
  return w;
}

// One template instantiation: elements are template words or slot fills.
struct Element {
  std::vector<std::string> tokens;
  std::string slot;  // empty for template words
};

struct Sample {
  std::size_t intent = 0;
  std::size_t templ = 0;
  std::vector<Element> elements;
};

Example realise(const std::vector<Element>& elements, const std::string& intent, const std::string& language) {
  Example ex;
  ex.intent = intent;
  ex.language = language;
  ex.slots.emplace();
  for (const auto& e : elements) {
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      ex.tokens.push_back(e.tokens[i]);
      ex.slots->push_back(e.slot.empty() ? "O" : (i == 0 ? "B-" : "I-") + e.slot);
    }
  }
  return ex;
}

std::string surface(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += t + " ";
  return s;
}

}  // namespace

std::string to_string(WordOrder order) {
  switch (order) {
    case WordOrder::kNone: return "none";
    case WordOrder::kReverse: return "reverse";
    case WordOrder::kPermute: return "permute";
  }
  return "?";
}

WordOrder parse_word_order(const std::string& name) {
  if (name == "none") return WordOrder::kNone;
  if (name == "reverse") return WordOrder::kReverse;
  if (name == "permute") return WordOrder::kPermute;
  throw ConfigError("unknown word order '" + name + "' (expected none, reverse or permute)");
}

WordOrder SynthSpec::order_for(const std::string& language) const {
  auto it = word_order_overrides.find(language);
  return it == word_order_overrides.end() ? word_order : it->second;
}

void SynthSpec::validate() const {
  if (intents.empty()) throw ConfigError("synth spec: no intents");
  if (target_languages.empty()) throw ConfigError("synth spec: no target languages");
  std::set<std::string> langs{source_language};
  for (const auto& l : target_languages) {
    if (!langs.insert(l).second) throw ConfigError("synth spec: language '" + l + "' listed twice");
  }
  for (const auto& [lang, _] : word_order_overrides) {
    if (!langs.count(lang) || lang == source_language) {
      throw ConfigError("synth spec: word_order." + lang + " names no target language");
    }
  }
  if (train_size == 0 || dev_size == 0 || test_size == 0) throw ConfigError("synth spec: split sizes must be positive");
  if (!(cognate_rate >= 0.0 && cognate_rate <= 1.0)) throw ConfigError("synth spec: cognate_rate must be in [0, 1]");
  if (max_len < 2) throw ConfigError("synth spec: max_len must be >= 2");
  std::set<std::string> types;
  for (const auto& s : slot_types) {
    if (s.values.empty()) throw ConfigError("synth spec: slot." + s.name + " has no values");
    if (!types.insert(s.name).second) throw ConfigError("synth spec: slot type " + s.name + " defined twice");
    for (const auto& v : s.values)
      if (v.empty()) throw ConfigError("synth spec: slot." + s.name + " has an empty value");
  }
  std::set<std::string> names;
  for (const auto& intent : intents) {
    if (!names.insert(intent.name).second) throw ConfigError("synth spec: intent " + intent.name + " defined twice");
    if (intent.templates.empty()) throw ConfigError("synth spec: intent." + intent.name + " has no templates");
    for (const auto& t : intent.templates) {
      std::string text;
      for (const auto& e : t) text += (text.empty() ? "" : " ") + e;
      if (t.empty()) throw ConfigError("synth spec: intent." + intent.name + " has an empty template");
      for (const auto& e : t) {
        if (is_slot(e) && !types.count(slot_name(e))) {
          throw ConfigError("synth spec: template '" + text + "' of intent " + intent.name +
                            " references unknown slot type " + slot_name(e));
        }
      }
    }
  }
}

SynthSpec SynthSpec::from_config(const KvConfig& cfg) {
  SynthSpec s;
  s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  s.cipher_seed = static_cast<std::uint64_t>(cfg.get_int("cipher_seed", static_cast<std::int64_t>(s.seed)));
  s.source_language = cfg.get_string("source_language", "en");
  s.target_languages = cfg.get_list("target_languages");
  s.train_size = static_cast<std::size_t>(cfg.get_int("train_size"));
  s.dev_size = static_cast<std::size_t>(cfg.get_int("dev_size"));
  s.test_size = static_cast<std::size_t>(cfg.get_int("test_size"));
  s.max_len = static_cast<std::size_t>(cfg.get_int("max_len", 32));
  s.cognate_rate = cfg.get_double("cognate_rate", 0.0);
  s.word_order = parse_word_order(cfg.get_string("word_order", "none"));
  for (const auto& lang : cfg.keys_with_prefix("word_order.")) {
    s.word_order_overrides[lang] = parse_word_order(cfg.get_string("word_order." + lang));
  }
  for (const auto& name : cfg.keys_with_prefix("slot.")) {
    SynthSlotType t{name, {}};
    for (const auto& v : split_list(cfg.get_string("slot." + name), '|')) t.values.push_back(words_of(v));
    s.slot_types.push_back(std::move(t));
  }
  for (const auto& name : cfg.keys_with_prefix("intent.")) {
    SynthIntent in{name, {}};
    for (const auto& v : split_list(cfg.get_string("intent." + name), '|')) in.templates.push_back(words_of(v));
    s.intents.push_back(std::move(in));
  }
  cfg.require_all_used();
  s.validate();
  return s;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) { return from_config(KvConfig::load(path)); }

Cipher::Cipher(const SynthSpec& spec, const std::vector<std::string>& source_words) {
  std::unordered_set<std::string> taken(source_words.begin(), source_words.end());
  Rng pick(spec.cipher_seed, {0x636f67});   // "cog"
  Rng shape(spec.cipher_seed, {0x776f7264});  // "word"
  auto fresh = [&]() {
    for (;;) {
      std::string w = pseudo_word(shape);
      if (taken.insert(w).second) return w;
    }
  };
  for (const auto& lang : spec.target_languages) {
    forward_[lang];
    inverse_[lang];
  }
  for (const auto& word : source_words) {
    const bool cognate = pick.uniform() < spec.cognate_rate;
    std::string shared;
    if (cognate) {
      shared = fresh();
      cognates_[word] = shared;
    }
    for (const auto& lang : spec.target_languages) {
      const std::string mapped = cognate ? shared : fresh();
      forward_[lang][word] = mapped;
      inverse_[lang][mapped] = word;
    }
  }
}

std::vector<std::string> Cipher::encode(const std::string& language, const std::vector<std::string>& tokens) const {
  auto lang = forward_.find(language);
  if (lang == forward_.end()) throw InputError("cipher: unknown language " + language);
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    auto it = lang->second.find(t);
    if (it == lang->second.end()) throw InputError("cipher: word '" + t + "' is not in the source vocabulary");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> Cipher::decode(const std::string& language, const std::vector<std::string>& tokens) const {
  auto lang = inverse_.find(language);
  if (lang == inverse_.end()) throw InputError("cipher: unknown language " + language);
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    auto it = lang->second.find(t);
    if (it == lang->second.end()) throw InputError("cipher: '" + t + "' is not a " + language + " word");
    out.push_back(it->second);
  }
  return out;
}

std::size_t Cipher::size(const std::string& language) const {
  auto it = forward_.find(language);
  return it == forward_.end() ? 0 : it->second.size();
}

SynthOutput synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::map<std::string, const SynthSlotType*> slot_by_name;
  for (const auto& s : spec.slot_types) slot_by_name[s.name] = &s;

  std::set<std::string> word_set;
  for (const auto& in : spec.intents)
    for (const auto& t : in.templates)
      for (const auto& e : t)
        if (!is_slot(e)) word_set.insert(e);
  for (const auto& s : spec.slot_types)
    for (const auto& v : s.values) word_set.insert(v.begin(), v.end());
  const std::vector<std::string> words(word_set.begin(), word_set.end());

  SynthOutput out;
  out.cipher = Cipher(spec, words);

  // Element permutations per (language, intent, template).
  std::map<std::string, std::vector<std::vector<std::vector<std::size_t>>>> perms;
  for (std::size_t li = 0; li < spec.target_languages.size(); ++li) {
    const auto& lang = spec.target_languages[li];
    auto& per_intent = perms[lang];
    for (std::size_t ii = 0; ii < spec.intents.size(); ++ii) {
      per_intent.emplace_back();
      for (std::size_t ti = 0; ti < spec.intents[ii].templates.size(); ++ti) {
        std::vector<std::size_t> p(spec.intents[ii].templates[ti].size());
        std::iota(p.begin(), p.end(), 0);
        Rng rng(spec.cipher_seed, {0x7065726d, li, ii, ti});  // "perm"
        rng.shuffle(std::span<std::size_t>(p));
        per_intent.back().push_back(std::move(p));
      }
    }
  }

  auto transform = [&](const std::string& lang, const Sample& s) {
    std::vector<Element> elems;
    for (const auto& e : s.elements) elems.push_back({out.cipher.encode(lang, e.tokens), e.slot});
    switch (spec.order_for(lang)) {
      case WordOrder::kNone: break;
      case WordOrder::kReverse:
        std::reverse(elems.begin(), elems.end());
        for (auto& e : elems) std::reverse(e.tokens.begin(), e.tokens.end());
        break;
      case WordOrder::kPermute: {
        const auto& p = perms.at(lang)[s.intent][s.templ];
        std::vector<Element> permuted;
        for (auto i : p) permuted.push_back(elems[i]);
        elems = std::move(permuted);
        break;
      }
    }
    return elems;
  };

  const std::size_t n_intents = spec.intents.size();
  const std::vector<std::size_t> split_sizes{spec.train_size, spec.dev_size, spec.test_size};
  auto quota = [&](std::size_t split, std::size_t intent) {
    return split_sizes[split] / n_intents + (intent < split_sizes[split] % n_intents ? 1 : 0);
  };

  // Unique surface forms across all splits, checked in every language.
  std::vector<std::set<std::string>> seen(spec.target_languages.size() + 1);
  std::vector<std::vector<Sample>> per_intent(n_intents);
  for (std::size_t ii = 0; ii < n_intents; ++ii) {
    const auto& intent = spec.intents[ii];
    const std::size_t needed = quota(0, ii) + quota(1, ii) + quota(2, ii);
    Rng rng(spec.seed, {0x73616d70, ii});  // "samp"
    std::size_t attempts = 0;
    while (per_intent[ii].size() < needed) {
      if (++attempts > 200 * needed + 1000) {
        throw ConfigError("synth spec: intent " + intent.name + " yields only " +
                          std::to_string(per_intent[ii].size()) + " distinct utterances, " + std::to_string(needed) +
                          " needed");
      }
      Sample s;
      s.intent = ii;
      s.templ = static_cast<std::size_t>(rng.below(intent.templates.size()));
      for (const auto& e : intent.templates[s.templ]) {
        if (is_slot(e)) {
          const auto* slot = slot_by_name.at(slot_name(e));
          s.elements.push_back({slot->values[rng.below(slot->values.size())], slot->name});
        } else {
          s.elements.push_back({{e}, ""});
        }
      }
      std::vector<std::string> forms{surface(realise(s.elements, intent.name, spec.source_language).tokens)};
      for (const auto& lang : spec.target_languages)
        forms.push_back(surface(realise(transform(lang, s), intent.name, lang).tokens));
      bool fresh = true;
      for (std::size_t k = 0; k < forms.size(); ++k) fresh = fresh && !seen[k].count(forms[k]);
      if (!fresh) continue;
      for (std::size_t k = 0; k < forms.size(); ++k) seen[k].insert(forms[k]);
      per_intent[ii].push_back(std::move(s));
    }
  }

  for (std::size_t split = 0; split < split_names().size(); ++split) {
    const auto& name = split_names()[split];
    std::vector<const Sample*> chosen;
    for (std::size_t ii = 0; ii < n_intents; ++ii) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < split; ++k) offset += quota(k, ii);
      for (std::size_t j = 0; j < quota(split, ii); ++j) chosen.push_back(&per_intent[ii][offset + j]);
    }
    Rng order(spec.seed, {0x6f726465, split});  // "orde"
    order.shuffle(std::span<const Sample*>(chosen));

    auto& source_file = out.files[name + "." + spec.source_language];
    json stats{{"split", name}, {"pairs", chosen.size()}, {"max_len", spec.max_len}};
    std::map<std::string, std::size_t> intent_hist;
    std::map<std::string, std::map<std::string, std::size_t>> tag_hist;
    std::map<std::string, std::size_t> truncated;
    std::map<std::string, std::size_t> longest;
    truncated[spec.source_language] = 0;
    for (const auto& lang : spec.target_languages) truncated[lang] = 0;
    auto account = [&](const Example& ex) {
      for (const auto& t : *ex.slots) ++tag_hist[ex.language][t];
      if (ex.tokens.size() > spec.max_len - 1) ++truncated[ex.language];
      longest[ex.language] = std::max(longest[ex.language], ex.tokens.size());
    };
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const Sample& s = *chosen[i];
      const auto& intent = spec.intents[s.intent].name;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", name.c_str(), i);
      ++intent_hist[intent];
      Example src = realise(s.elements, intent, spec.source_language);
      account(src);
      ParallelExample identity;
      identity.pair_id = id;
      identity.source = src;
      identity.target_tokens = src.tokens;
      identity.target_language = spec.source_language;
      identity.set_target_gold(src);
      source_file.push_back(std::move(identity));
      for (const auto& lang : spec.target_languages) {
        Example tgt = realise(transform(lang, s), intent, lang);
        account(tgt);
        ParallelExample pair;
        pair.pair_id = id;
        pair.source = src;
        pair.target_tokens = tgt.tokens;
        pair.target_language = lang;
        pair.set_target_gold(std::move(tgt));
        out.files[name + "." + lang].push_back(std::move(pair));
      }
    }
    stats["intents"] = intent_hist;
    stats["slot_tags"] = tag_hist;
    stats["truncated"] = truncated;
    stats["longest"] = longest;
    json orders = json::object();
    for (const auto& lang : spec.target_languages) orders[lang] = to_string(spec.order_for(lang));
    stats["word_order"] = orders;
    out.stats[name] = stats.dump(1);
  }
  return out;
}

void write_synth(const SynthOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [key, corpus] : out.files) write_jsonl(dir / (key + ".jsonl"), corpus);
  for (const auto& [split, text] : out.stats) {
    std::ofstream f(dir / (split + ".stats.json"));
    if (!f) throw InputError("cannot write stats into " + dir.string());
    f << text << "\n";
  }
}

}  // namespace xeroalign
