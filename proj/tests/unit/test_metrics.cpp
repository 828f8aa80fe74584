#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "xeroalign/errors.hpp"
#include "xeroalign/metrics.hpp"
#include "xeroalign/rng.hpp"

using namespace xeroalign;
using Tags = std::vector<std::string>;

namespace {

// Independent decoder: walks each position and scans forward for continuation.
std::set<Span> brute_spans(const Tags& tags) {
  std::set<Span> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& t = tags[i];
    if (t.size() < 3 || t[1] != '-') continue;
    const std::string type = t.substr(2);
    const bool opens = t[0] == 'B' ||
                       (t[0] == 'I' && (i == 0 || tags[i - 1].size() < 3 || tags[i - 1].substr(2) != type ||
                                        (tags[i - 1][0] != 'B' && tags[i - 1][0] != 'I')));
    if (!opens) continue;
    std::size_t j = i + 1;
    while (j < tags.size() && tags[j] == "I-" + type) ++j;
    out.insert(Span{type, i, j});
  }
  return out;
}

Tags random_tags(Rng& rng, std::size_t n) {
  static const Tags pool{"O", "B-A", "I-A", "B-B", "I-B", "B-C", "I-C"};
  Tags t(n);
  for (auto& x : t) x = pool[rng.below(pool.size())];
  return t;
}

}  // namespace

TEST(Spans, HandCases) {
  EXPECT_EQ(bio_spans(Tags{"O", "B-LOC", "I-LOC", "O", "B-PER"}),
            (std::vector<Span>{{"LOC", 1, 3}, {"PER", 4, 5}}));
  EXPECT_EQ(bio_spans(Tags{"B-A", "B-A"}), (std::vector<Span>{{"A", 0, 1}, {"A", 1, 2}}));
  EXPECT_EQ(bio_spans(Tags{"B-A", "I-B"}), (std::vector<Span>{{"A", 0, 1}, {"B", 1, 2}}));
  EXPECT_TRUE(bio_spans(Tags{}).empty());
  EXPECT_TRUE(bio_spans(Tags{"O", "O"}).empty());
}

TEST(Spans, LenientLeadingInside) {
  EXPECT_EQ(bio_spans(Tags{"I-LOC"}), (std::vector<Span>{{"LOC", 0, 1}}));
  EXPECT_EQ(bio_spans(Tags{"O", "I-LOC", "I-LOC"}), (std::vector<Span>{{"LOC", 1, 3}}));
}

TEST(SpanF1, HandCases) {
  const std::vector<Tags> gold{{"B-A", "I-A", "O", "B-B"}};
  auto r = span_f1(gold, gold);
  EXPECT_EQ(r.f1, 1.0);
  r = span_f1(gold, {{"B-A", "O", "O", "B-B"}});
  EXPECT_EQ(r.matched, 1u);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 0.5);
  r = span_f1(gold, {{"O", "O", "O", "O"}});
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_EQ(r.precision, 0.0);
  r = span_f1({{"O"}}, {{"O"}});
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_EQ(r.gold, 0u);
  // Micro averaging pools counts across sentences.
  r = span_f1({{"B-A"}, {"B-A", "B-B", "B-C"}}, {{"B-A"}, {"O", "O", "O"}});
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.25);
  EXPECT_DOUBLE_EQ(r.f1, 0.4);
}

TEST(SpanF1, MatchesBruteForceOracle) {
  Rng rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = rng.below(13);
    const auto g = random_tags(rng, n);
    const auto p = random_tags(rng, n);
    const auto gs = brute_spans(g);
    const auto ps = brute_spans(p);
    const auto bs = bio_spans(g);
    ASSERT_EQ(std::set<Span>(bs.begin(), bs.end()), gs) << trial;
    std::size_t matched = 0;
    for (const auto& s : ps) matched += gs.count(s);
    const double prec = ps.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(ps.size());
    const double rec = gs.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(gs.size());
    const double f1 = prec + rec == 0.0 ? 0.0 : 2 * prec * rec / (prec + rec);
    const auto r = span_f1({g}, {p});
    ASSERT_EQ(r.matched, matched) << trial;
    ASSERT_EQ(r.predicted, ps.size());
    ASSERT_EQ(r.gold, gs.size());
    ASSERT_NEAR(r.f1, f1, 1e-15) << trial;
    ASSERT_GE(r.f1, 0.0);
    ASSERT_LE(r.f1, 1.0);
  }
}

TEST(SpanF1, InvariantToSentenceOrder) {
  Rng rng(7);
  std::vector<Tags> g, p;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng.below(10);
    g.push_back(random_tags(rng, n));
    p.push_back(random_tags(rng, n));
  }
  const auto a = span_f1(g, p);
  std::vector<std::size_t> idx(g.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(std::span<std::size_t>(idx));
  std::vector<Tags> g2, p2;
  for (auto i : idx) {
    g2.push_back(g[i]);
    p2.push_back(p[i]);
  }
  const auto b = span_f1(g2, p2);
  EXPECT_EQ(a.f1, b.f1);
  EXPECT_EQ(a.matched, b.matched);
}

TEST(SpanF1, LengthMismatchNamesSentence) {
  try {
    span_f1({{"O"}, {"O", "B-A"}}, {{"O"}, {"O"}});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("sequence 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(span_f1({{"O"}}, {{"O"}, {"O"}}), InputError);
}

TEST(Accuracy, Cases) {
  const std::vector<int> g{1, 2, 3, 4};
  EXPECT_EQ(accuracy(std::vector<int>{1, 2, 3, 4}, g), 1.0);
  EXPECT_EQ(accuracy(std::vector<int>{1, 0, 3, 0}, g), 0.5);
  EXPECT_EQ(accuracy(std::vector<int>{0, 0, 0, 0}, g), 0.0);
  const std::vector<std::string> gs{"a", "b", "c"};
  EXPECT_DOUBLE_EQ(accuracy(std::vector<std::string>{"a", "x", "c"}, gs), 2.0 / 3.0);
  EXPECT_THROW(accuracy(std::vector<int>{1}, g), InputError);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), InputError);
}
