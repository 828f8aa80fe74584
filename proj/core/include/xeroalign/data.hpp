#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xeroalign/encoder.hpp"
#include "xeroalign/heads.hpp"
#include "xeroalign/modes.hpp"

namespace xeroalign {

struct Example {
  std::vector<std::string> tokens;
  std::string intent;
  std::optional<std::vector<std::string>> slots;  // BIO, one per token
  std::string language;

  friend bool operator==(const Example&, const Example&) = default;
};

/// Capability required to read target-language gold labels.
///
/// Training code obtains it through for_training(mode), which refuses every
/// mode that must not see target labels.
class LabelAccess {
 public:
  // Throws ZeroShotViolation unless the mode trains on target labels.
  static LabelAccess for_training(TrainMode mode);
  static LabelAccess for_evaluation();

 private:
  LabelAccess() = default;
};

class ParallelExample {
 public:
  std::string pair_id;
  Example source;
  std::vector<std::string> target_tokens;
  std::string target_language;

  bool has_target_gold() const { return target_gold_.has_value(); }
  // Throws InputError if the pair carries no target labels.
  const Example& target_gold(const LabelAccess& access) const;
  void set_target_gold(std::optional<Example> gold) { target_gold_ = std::move(gold); }

  friend bool operator==(const ParallelExample&, const ParallelExample&) = default;

 private:
  std::optional<Example> target_gold_;
};

// nullopt when `tags` is valid BIO, otherwise a description of the first violation.
std::optional<std::string> bio_error(std::span<const std::string> tags);
// Throws InputError mentioning `context`.
void validate_example(const Example& ex, const std::string& context);

// One object per line:
// {pair_id, source:{tokens, intent, slots?, language}, target:{tokens, language, intent?, slots?}}
std::vector<ParallelExample> load_jsonl(const std::filesystem::path& path);
std::vector<ParallelExample> parse_jsonl(const std::string& text, const std::string& origin);
void write_jsonl(const std::filesystem::path& path, const std::vector<ParallelExample>& corpus);
std::string to_jsonl_line(const ParallelExample& ex);

/// Token ids with reserved pad=0, cls=1, unk=2; other ids follow first occurrence.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;

  Vocab();
  // `tokens` lists every entry in id order, reserved ones included.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  void add(const std::string& token);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Source and target tokens of every pair, in corpus order. Throws InputError if empty.
Vocab build_vocab(const std::vector<const std::vector<ParallelExample>*>& corpora, std::size_t min_count = 1);
Vocab build_vocab(const std::vector<ParallelExample>& corpus, std::size_t min_count = 1);

class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> labels);
  // -1 for labels outside the set.
  int id(const std::string& label) const;
  const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> ids_;
};

// Sorted intents seen on the source side.
LabelSet build_intent_labels(const std::vector<ParallelExample>& corpus);
// "O" followed by B-/I- tags for every source slot type, sorted by type.
LabelSet build_slot_labels(const std::vector<ParallelExample>& corpus);

struct EncodedExample {
  std::vector<int> ids;       // CLS first, at most max_len entries
  int intent = -1;            // -1 when unlabeled or unknown
  std::vector<int> slot_ids;  // same length as ids; ignore index at CLS; empty when unlabeled
  bool truncated = false;
};

// Labels are skipped when `intents`/`slots` are null.
EncodedExample encode_example(const Example& ex, const Vocab& vocab, std::size_t max_len,
                              const LabelSet* intents = nullptr, const LabelSet* slots = nullptr);
std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocab& vocab, std::size_t max_len,
                               bool* truncated = nullptr);

// Pads rows to the longest one.
TokenBatch pad_batch(std::span<const std::vector<int>* const> rows);

// Deterministic shuffle of [0, n) keyed by (seed, epoch), cut into batches.
std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch);

struct Batch {
  std::vector<std::string> pair_ids;
  TokenBatch source;
  TokenBatch target;
  TaskTargets targets;  // source-side labels
};

// Row i of source and target belong to the same pair.
std::vector<Batch> make_batches(const std::vector<ParallelExample>& corpus, const Vocab& vocab,
                                const LabelSet& intents, const LabelSet& slots, std::size_t max_len,
                                std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

/// One split of a dataset directory: `<split>.<lang>.jsonl` files.
///
/// The source file is the one whose pairs are identities (target language
/// equals source language). targets[lang][i] pairs with source[i].
struct SplitData {
  std::string split;
  std::string source_language;
  std::vector<ParallelExample> source;
  std::map<std::string, std::vector<ParallelExample>> targets;

  std::vector<std::string> target_languages() const;
};

SplitData load_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace xeroalign
