#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "xeroalign/encoder.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/grad_check.hpp"
#include "xeroalign/ops.hpp"

using namespace xeroalign;
using xeroalign::testing::random_tensor;
namespace ops = xeroalign::ops;

namespace {

EncoderConfig tiny_config(std::size_t vocab = 50) { return EncoderConfig::preset("tiny", vocab); }

TokenBatch make_batch(const std::vector<std::vector<int>>& rows, std::size_t length) {
  TokenBatch b;
  b.batch = rows.size();
  b.length = length;
  b.ids.assign(b.batch * length, 0);
  b.mask.assign(b.batch * length, 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t t = 0; t < rows[r].size(); ++t) {
      b.ids[r * length + t] = rows[r][t];
      b.mask[r * length + t] = 1;
    }
  return b;
}

std::vector<double> row(const Tensor& t, std::size_t r) {
  const std::size_t w = t.numel() / t.dim(0);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * w), t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * w)};
}

}  // namespace

TEST(EncoderConfig, PresetsAndValidation) {
  const auto tiny = EncoderConfig::preset("tiny", 100);
  EXPECT_EQ(tiny.n_layers, 2u);
  EXPECT_EQ(tiny.d_model, 64u);
  EXPECT_EQ(tiny.d_ff, 128u);
  EXPECT_EQ(tiny.max_len, 32u);
  const auto small = EncoderConfig::preset("small", 100);
  EXPECT_EQ(small.n_layers, 4u);
  EXPECT_EQ(small.d_model, 128u);
  EXPECT_THROW(EncoderConfig::preset("huge", 100), ConfigError);
  auto bad = tiny;
  bad.n_heads = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny;
  bad.cls_id = bad.pad_id;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny;
  bad.vocab_size = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(InitParams, ClosedFormParameterCount) {
  EncoderConfig c = tiny_config(1000);
  const auto p = init_params(c, 1);
  std::size_t total = 0;
  for (const auto& nt : p.named()) total += nt.tensor.numel();
  EXPECT_EQ(parameter_count(c), total);
  // 1000*64 + 32*64 + 2 * (4*64*64 + 64*128 + 128 + 128*64 + 64 + 4*64) + 2*64
  EXPECT_EQ(total, 64000u + 2048u + 2u * (16384u + 8192u + 128u + 8192u + 64u + 256u) + 128u);
}

TEST(InitParams, DeterministicAndSeedSensitive) {
  const auto c = tiny_config();
  const auto a = init_params(c, 7), b = init_params(c, 7), d = init_params(c, 8);
  const auto na = a.named(), nb = b.named(), nd = d.named();
  ASSERT_EQ(na.size(), nb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    EXPECT_EQ(na[i].name, nb[i].name);
    EXPECT_TRUE(std::equal(na[i].tensor.data().begin(), na[i].tensor.data().end(), nb[i].tensor.data().begin()));
    EXPECT_TRUE(na[i].tensor.requires_grad()) << na[i].name;
    any_diff |= !std::equal(na[i].tensor.data().begin(), na[i].tensor.data().end(), nd[i].tensor.data().begin());
  }
  EXPECT_TRUE(any_diff);
}

TEST(InitParams, Distribution) {
  const auto p = init_params(tiny_config(), 3);
  for (const auto& nt : p.named()) {
    const auto d = nt.tensor.data();
    const bool is_gain = nt.name.find("gain") != std::string::npos;
    const bool is_bias = nt.name.find("bias") != std::string::npos || nt.name.ends_with(".b1") ||
                         nt.name.ends_with(".b2");
    for (double v : d) {
      if (is_gain) {
        EXPECT_EQ(v, 1.0) << nt.name;
      } else if (is_bias) {
        EXPECT_EQ(v, 0.0) << nt.name;
      } else {
        EXPECT_LE(std::abs(v), 0.04) << nt.name;
      }
    }
  }
  const auto emb = p.token_embedding.data();
  double mean = 0.0, sq = 0.0;
  for (double v : emb) mean += v, sq += v * v;
  mean /= static_cast<double>(emb.size());
  const double sd = std::sqrt(sq / static_cast<double>(emb.size()) - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.002);
  // Truncation at 2 sigma shrinks the standard deviation to about 0.88 sigma.
  EXPECT_NEAR(sd, 0.02 * 0.88, 0.002);
}

TEST(Encode, ShapesAndClsIsPositionZero) {
  const auto c = tiny_config();
  const auto p = init_params(c, 1);
  Graph g(false);
  const auto enc = encode(g, p, c, make_batch({{1, 5, 6, 7, 8, 9, 10}, {1, 11, 12}}, 7));
  EXPECT_EQ(enc.cls.shape(), (Shape{2, 64}));
  EXPECT_EQ(enc.tokens.shape(), (Shape{2, 7, 64}));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t h = 0; h < 64; ++h) EXPECT_EQ(enc.cls.at(r * 64 + h), enc.tokens.at(r * 7 * 64 + h));
}

TEST(Encode, PaddingInvariance) {
  const auto c = tiny_config();
  const auto p = init_params(c, 2);
  Graph g(false);
  const std::vector<int> seq{1, 4, 9, 16, 25};
  const auto a = encode(g, p, c, make_batch({seq}, 8));
  const auto b = encode(g, p, c, make_batch({seq}, 16));
  for (std::size_t h = 0; h < 64; ++h) EXPECT_NEAR(a.cls.at(h), b.cls.at(h), 1e-9);
  for (std::size_t t = 0; t < seq.size(); ++t)
    for (std::size_t h = 0; h < 64; ++h) EXPECT_NEAR(a.tokens.at(t * 64 + h), b.tokens.at(t * 64 + h), 1e-9);
}

TEST(Encode, BatchPermutationPermutesOutputs) {
  const auto c = tiny_config();
  const auto p = init_params(c, 3);
  Graph g(false);
  const std::vector<std::vector<int>> rows{{1, 3, 4}, {1, 5, 6, 7, 8}, {1, 9}};
  const auto a = encode(g, p, c, make_batch(rows, 5));
  const auto b = encode(g, p, c, make_batch({rows[2], rows[0], rows[1]}, 5));
  EXPECT_EQ(row(a.cls, 0), row(b.cls, 1));
  EXPECT_EQ(row(a.cls, 1), row(b.cls, 2));
  EXPECT_EQ(row(a.cls, 2), row(b.cls, 0));
}

TEST(Encode, Errors) {
  auto c = tiny_config();
  c.max_len = 4;
  const auto p = init_params(c, 1);
  Graph g(false);
  EXPECT_THROW(encode(g, p, c, make_batch({{1, 2, 3, 4, 5}}, 5)), LengthError);
  EXPECT_THROW(encode(g, p, c, make_batch({{3, 2, 3}}, 3)), InputError);
}

TEST(Encode, BitwiseDeterministic) {
  const auto c = tiny_config();
  auto run = [&] {
    const auto p = init_params(c, 9);
    Graph g(false);
    const auto e = encode(g, p, c, make_batch({{1, 2, 3}, {1, 4}}, 3));
    return std::vector<double>(e.tokens.data().begin(), e.tokens.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Attention, SingleUnmaskedKeyReturnsItsValue) {
  Rng rng(4);
  Tensor q = random_tensor({1, 1, 1, 4}, rng, false);
  Tensor k = random_tensor({1, 1, 3, 4}, rng, false);
  Tensor v = random_tensor({1, 1, 3, 4}, rng, false);
  // Query count must equal key count, so pad q to 3 rows.
  Tensor q3({1, 1, 3, 4}, std::vector<double>(12, 0.0));
  for (std::size_t i = 0; i < 4; ++i) q3.mutable_data()[i] = q.at(i);
  const std::vector<std::uint8_t> mask{0, 1, 0};
  Graph g(false);
  const auto r = attention(g, q3, k, v, mask);
  for (std::size_t qi = 0; qi < 3; ++qi) {
    EXPECT_NEAR(r.weights.at(qi * 3 + 1), 1.0, 1e-9);
    for (std::size_t h = 0; h < 4; ++h) EXPECT_NEAR(r.output.at(qi * 4 + h), v.at(4 + h), 1e-9);
  }
}

TEST(Attention, WeightsNormalisedAndMaskedKeysIgnored) {
  Rng rng(5);
  const std::size_t b = 2, heads = 3, l = 5, dh = 4;
  Tensor q = random_tensor({b, heads, l, dh}, rng, false, 3.0);
  Tensor k = random_tensor({b, heads, l, dh}, rng, false, 3.0);
  Tensor v = random_tensor({b, heads, l, dh}, rng, false);
  const std::vector<std::uint8_t> mask{1, 1, 1, 0, 0, 1, 0, 1, 1, 1};
  Graph g(false);
  const auto r = attention(g, q, k, v, mask);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t qi = 0; qi < l; ++qi) {
        double s = 0.0;
        for (std::size_t ki = 0; ki < l; ++ki) {
          const double w = r.weights.at(((bi * heads + h) * l + qi) * l + ki);
          if (mask[bi * l + ki]) {
            s += w;
          } else {
            EXPECT_LT(w, 1e-30);
          }
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
  EXPECT_THROW(attention(g, q, random_tensor({b, heads, l, 3}, rng, false), v, mask), DimensionError);
}

TEST(Encode, CompositeGradientCheck) {
  EncoderConfig c;
  c.vocab_size = 6;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 16;
  c.max_len = 4;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(200 + static_cast<std::uint64_t>(trial));
    EncoderParams p = init_params(c, static_cast<std::uint64_t>(trial));
    // Random parameters away from the initial symmetric point (unit gains,
    // zero biases) so every gradient path is exercised.
    const auto named = p.named();
    for (const auto& nt : named) {
      const bool gain = nt.name.find("gain") != std::string::npos;
      Tensor t = nt.tensor;
      for (auto& v : t.mutable_data()) v = (gain ? 1.0 : 0.0) + 0.5 * rng.normal();
    }
    std::vector<Tensor> inputs;
    for (const auto& nt : named) inputs.push_back(nt.tensor);
    const TokenBatch batch = make_batch({{1, 2 + static_cast<int>(rng.below(4))}, {1, 3, 4, 5}}, 4);
    ScalarFn f = [&](Graph& g, std::span<const Tensor>) { return ops::sum(g, encode(g, p, c, batch).cls); };
    const auto report = grad_check(f, inputs, 1e-3, 1e-8);
    EXPECT_TRUE(report.passed()) << "trial " << trial << ": " << report.failures.size() << " failures, max rel "
                                 << report.max_rel_error;
  }
}
