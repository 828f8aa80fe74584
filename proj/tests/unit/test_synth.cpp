#include <gtest/gtest.h>

#include <map>
#include <set>

#include "test_util.hpp"
#include "xeroalign/data.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/metrics.hpp"
#include "xeroalign/synth.hpp"

using namespace xeroalign;
using xeroalign::testing::read_file;
using xeroalign::testing::scratch_dir;

namespace {

KvConfig default_config() { return KvConfig::load(std::filesystem::path(XEROALIGN_CONFIG_DIR) / "synth_default.kv"); }

SynthSpec small_spec(const std::string& order = "none") {
  auto cfg = default_config();
  cfg.set("train_size", "240");
  cfg.set("dev_size", "40");
  cfg.set("test_size", "40");
  cfg.set("word_order", order);
  return SynthSpec::from_config(cfg);
}

std::string joined(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += t + " ";
  return s;
}

}  // namespace

TEST(Synth, ProducesAllFilesWithValidBio) {
  const auto spec = small_spec();
  const auto out = synth_generate(spec);
  EXPECT_EQ(out.files.size(), 12u);
  EXPECT_EQ(out.stats.size(), 3u);
  for (const auto& [key, corpus] : out.files) {
    const std::size_t expected = key.rfind("train", 0) == 0 ? 240 : 40;
    ASSERT_EQ(corpus.size(), expected) << key;
    for (const auto& p : corpus) {
      EXPECT_FALSE(bio_error(*p.source.slots)) << p.pair_id;
      ASSERT_TRUE(p.has_target_gold());
      const auto& gold = p.target_gold(LabelAccess::for_evaluation());
      EXPECT_FALSE(bio_error(*gold.slots)) << key << " " << p.pair_id;
      EXPECT_EQ(gold.intent, p.source.intent);
      EXPECT_EQ(gold.tokens, p.target_tokens);
    }
  }
}

TEST(Synth, CipherIsBijectiveAndDisjointFromSource) {
  const auto spec = small_spec();
  const auto out = synth_generate(spec);
  std::set<std::string> source_words;
  for (const auto& p : out.files.at("train.en")) source_words.insert(p.source.tokens.begin(), p.source.tokens.end());
  for (const auto& lang : spec.target_languages) {
    std::size_t cognates = 0, total = 0;
    for (const auto& p : out.files.at("train." + lang)) {
      EXPECT_EQ(out.cipher.decode(lang, p.target_tokens), p.source.tokens) << p.pair_id;
      EXPECT_EQ(out.cipher.encode(lang, p.source.tokens), p.target_tokens);
      for (const auto& t : p.target_tokens) EXPECT_EQ(source_words.count(t), 0u) << t;
    }
    for (const auto& w : source_words) {
      ++total;
      cognates += out.cipher.is_cognate(w);
    }
    EXPECT_GT(cognates, 0u);
    EXPECT_LT(cognates, total);
    EXPECT_THROW(out.cipher.encode(lang, {"not-a-source-word"}), InputError);
  }
  // Cognates are shared across languages, others are not.
  const auto& xa = out.files.at("train.xa");
  const auto& xb = out.files.at("train.xb");
  for (std::size_t i = 0; i < xa.size(); ++i) {
    for (std::size_t k = 0; k < xa[i].source.tokens.size(); ++k) {
      const bool same = xa[i].target_tokens[k] == xb[i].target_tokens[k];
      EXPECT_EQ(same, out.cipher.is_cognate(xa[i].source.tokens[k])) << xa[i].source.tokens[k];
    }
  }
}

TEST(Synth, SurfaceFormsDisjointAcrossSplits) {
  const auto out = synth_generate(small_spec());
  for (const std::string lang : {"en", "xa", "xb", "xc"}) {
    std::map<std::string, std::string> owner;
    for (const auto& split : split_names()) {
      for (const auto& p : out.files.at(split + "." + lang)) {
        const auto form = joined(p.target_tokens);
        auto [it, fresh] = owner.emplace(form, split);
        EXPECT_TRUE(fresh) << lang << " '" << form << "' in " << it->second << " and " << split;
      }
    }
  }
}

TEST(Synth, IntentsBalanced) {
  const auto spec = small_spec();
  const auto out = synth_generate(spec);
  for (const auto& split : split_names()) {
    std::map<std::string, std::size_t> counts;
    const auto& corpus = out.files.at(split + ".en");
    for (const auto& p : corpus) ++counts[p.source.intent];
    ASSERT_EQ(counts.size(), spec.intents.size());
    const double mean = static_cast<double>(corpus.size()) / static_cast<double>(counts.size());
    for (const auto& [intent, n] : counts) {
      EXPECT_GE(static_cast<double>(n), 0.8 * mean) << split << " " << intent;
      EXPECT_LE(static_cast<double>(n), 1.2 * mean) << split << " " << intent;
    }
  }
}

TEST(Synth, GenerationIsByteDeterministic) {
  const auto spec = small_spec();
  const auto a = scratch_dir("synth_det_a");
  const auto b = scratch_dir("synth_det_b");
  write_synth(synth_generate(spec), a);
  write_synth(synth_generate(spec), b);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(read_file(entry.path()), read_file(b / entry.path().filename())) << entry.path();
  }
  EXPECT_EQ(files, 15u);
  auto other = default_config();
  other.set("train_size", "240");
  other.set("dev_size", "40");
  other.set("test_size", "40");
  other.set("seed", "14");
  EXPECT_NE(synth_generate(SynthSpec::from_config(other)).files.at("train.en"),
            synth_generate(spec).files.at("train.en"));
}

TEST(Synth, ReverseOrderKeepsSpansWhole) {
  const auto out = synth_generate(small_spec("reverse"));
  std::size_t reordered = 0;
  for (const auto& p : out.files.at("train.xa")) {
    const auto& gold = *p.target_gold(LabelAccess::for_evaluation()).slots;
    EXPECT_FALSE(bio_error(gold));
    const auto spans_src = bio_spans(*p.source.slots);
    const auto spans_tgt = bio_spans(gold);
    ASSERT_EQ(spans_src.size(), spans_tgt.size());
    std::multiset<std::size_t> len_src, len_tgt;
    for (const auto& s : spans_src) len_src.insert(s.end - s.start);
    for (const auto& s : spans_tgt) len_tgt.insert(s.end - s.start);
    EXPECT_EQ(len_src, len_tgt);
    reordered += out.cipher.decode("xa", p.target_tokens) != p.source.tokens;
  }
  EXPECT_GT(reordered, 0u);
}

TEST(Synth, PermutedOrderDiffersFromSource) {
  const auto out = synth_generate(small_spec("permute"));
  std::size_t reordered = 0;
  for (const auto& p : out.files.at("train.xa")) {
    EXPECT_FALSE(bio_error(*p.target_gold(LabelAccess::for_evaluation()).slots));
    reordered += out.cipher.decode("xa", p.target_tokens) != p.source.tokens;
  }
  EXPECT_GT(reordered, 100u);
}

TEST(Synth, UnknownSlotTypeNamesTemplate) {
  auto cfg = default_config();
  cfg.set("intent.broken", "play [SONG] loudly");
  try {
    SynthSpec::from_config(cfg).validate();
    FAIL() << "accepted unknown slot type";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("play [SONG] loudly"), std::string::npos) << what;
    EXPECT_NE(what.find("SONG"), std::string::npos) << what;
  }
}

TEST(Synth, RejectsBadSpecs) {
  auto cfg = default_config();
  cfg.set("cognate_rate", "1.5");
  EXPECT_THROW(SynthSpec::from_config(cfg).validate(), ConfigError);
  cfg = default_config();
  cfg.set("word_order", "sideways");
  EXPECT_THROW(SynthSpec::from_config(cfg), ConfigError);
  cfg = default_config();
  cfg.set("train_size", "100000");
  EXPECT_THROW(synth_generate(SynthSpec::from_config(cfg)), ConfigError);
}
