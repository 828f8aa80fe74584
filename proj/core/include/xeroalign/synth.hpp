#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xeroalign/data.hpp"
#include "xeroalign/kv_config.hpp"

namespace xeroalign {

enum class WordOrder { kNone, kReverse, kPermute };

std::string to_string(WordOrder order);
WordOrder parse_word_order(const std::string& name);

struct SynthIntent {
  std::string name;
  std::vector<std::vector<std::string>> templates;  // whitespace-split; "[TYPE]" marks a slot
};

struct SynthSlotType {
  std::string name;
  std::vector<std::vector<std::string>> values;  // each value is one or more tokens
};

/// Generator settings, read from a key-value file:
///
///   seed, source_language, target_languages, train_size, dev_size, test_size,
///   max_len, cipher_seed, cognate_rate, word_order, word_order.<lang>,
///   slot.<TYPE> = value | value ...,  intent.<name> = template | template ...
struct SynthSpec {
  std::uint64_t seed = 1;
  std::uint64_t cipher_seed = 1;
  std::string source_language = "en";
  std::vector<std::string> target_languages;
  std::vector<SynthIntent> intents;
  std::vector<SynthSlotType> slot_types;
  double cognate_rate = 0.0;
  WordOrder word_order = WordOrder::kNone;
  std::map<std::string, WordOrder> word_order_overrides;
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
  std::size_t test_size = 0;
  std::size_t max_len = 32;

  WordOrder order_for(const std::string& language) const;
  // Throws ConfigError; unknown slot types name the offending template.
  void validate() const;

  static SynthSpec from_config(const KvConfig& cfg);
  static SynthSpec load(const std::filesystem::path& path);
};

/// Per-language word substitution into pseudo-words disjoint from the source vocabulary.
///
/// A `cognate_rate` share of source words maps to one pseudo-word shared by
/// every target language; the rest get a language-specific pseudo-word.
class Cipher {
 public:
  Cipher() = default;
  Cipher(const SynthSpec& spec, const std::vector<std::string>& source_words);

  // Throws InputError for words or languages outside the cipher.
  std::vector<std::string> encode(const std::string& language, const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::string& language, const std::vector<std::string>& tokens) const;
  bool is_cognate(const std::string& source_word) const { return cognates_.count(source_word) != 0; }
  std::size_t size(const std::string& language) const;

 private:
  std::map<std::string, std::unordered_map<std::string, std::string>> forward_;
  std::map<std::string, std::unordered_map<std::string, std::string>> inverse_;
  std::unordered_map<std::string, std::string> cognates_;
};

struct SynthOutput {
  Cipher cipher;
  // Keyed "<split>.<lang>", e.g. "train.en"; the source file holds identity pairs.
  std::map<std::string, std::vector<ParallelExample>> files;
  // Keyed by split; JSON text.
  std::map<std::string, std::string> stats;
};

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names{"train", "dev", "test"};
  return names;
}

SynthOutput synth_generate(const SynthSpec& spec);
// Writes `<split>.<lang>.jsonl` and `<split>.stats.json` into `dir`.
void write_synth(const SynthOutput& out, const std::filesystem::path& dir);

}  // namespace xeroalign
