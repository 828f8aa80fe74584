#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "test_util.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/grad_check.hpp"
#include "xeroalign/ops.hpp"

using namespace xeroalign;
using xeroalign::testing::random_tensor;
namespace ops = xeroalign::ops;

namespace {

constexpr int kTrials = 10;
constexpr double kRelTol = 1e-4;
constexpr double kAbsTol = 1e-9;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Reduces a tensor to a scalar with fixed random weights so that every
// output element carries a distinct upstream gradient.
Tensor weighted_sum(Graph& g, const Tensor& t, std::uint64_t seed) {
  Rng rng(seed, {77});
  Tensor w = random_tensor(t.shape(), rng, false);
  return ops::sum(g, ops::mul(g, t, w));
}

std::size_t dim(Rng& rng) { return 1 + static_cast<std::size_t>(rng.below(6)); }

void expect_passes(const GradCheckReport& r, const std::string& what) {
  EXPECT_TRUE(r.passed()) << what << ": " << r.failures.size() << " of " << r.checked
                          << " elements failed, max rel error " << r.max_rel_error;
  EXPECT_GT(r.checked, 0u) << what;
}

// Runs `make` kTrials times; it returns (fn, inputs) for a trial rng.
void check_op(const std::string& name,
              const std::function<std::pair<ScalarFn, std::vector<Tensor>>(Rng&)>& make) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial), {std::hash<std::string>{}(name)});
    auto [fn, inputs] = make(rng);
    expect_passes(grad_check(fn, inputs, kRelTol, kAbsTol), name + " trial " + std::to_string(trial));
  }
}

}  // namespace

TEST(Matmul, IdentityAndHandDot) {
  Graph g(false);
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(ops::matmul(g, eye, m)), (std::vector<double>{1, 2, 3, 4}));
  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  auto r = ops::matmul(g, row, col);
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r.item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Graph g(false);
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    ops::matmul(g, a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, LargeProductMatchesNaiveLoop) {
  Rng rng(5);
  Tensor a = random_tensor({37, 29}, rng, false);
  Tensor b = random_tensor({29, 23}, rng, false);
  Graph g(false);
  auto c = ops::matmul(g, a, b);
  for (std::size_t i = 0; i < 37; ++i)
    for (std::size_t j = 0; j < 23; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 29; ++k) s += a.at(i * 29 + k) * b.at(k * 23 + j);
      EXPECT_NEAR(c.at(i * 23 + j), s, 1e-12);
    }
}

TEST(Matmul, SumGradientFiniteDifference) {
  Rng rng(11);
  std::vector<Tensor> in{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng, false)};
  auto f = [](Graph& g, std::span<const Tensor> x) { return ops::sum(g, ops::matmul(g, x[0], x[1])); };
  const auto r = grad_check(f, in, 1e-5, 0.0);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(GradCheck, Matmul2d) {
  check_op("matmul", [](Rng& rng) {
    const auto m = dim(rng), k = dim(rng), n = dim(rng);
    std::vector<Tensor> in{random_tensor({m, k}, rng), random_tensor({k, n}, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::matmul(g, x[0], x[1]), 1); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, MatmulBatched) {
  check_op("matmul_batched", [](Rng& rng) {
    const auto b = 1 + rng.below(3), m = dim(rng), k = dim(rng), n = dim(rng);
    std::vector<Tensor> in{random_tensor({b, 2, m, k}, rng), random_tensor({b, 2, k, n}, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::matmul(g, x[0], x[1]), 2); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, MatmulSharedRightOperand) {
  check_op("matmul_shared", [](Rng& rng) {
    const auto b = 1 + rng.below(3), m = dim(rng), k = dim(rng), n = dim(rng);
    std::vector<Tensor> in{random_tensor({b, m, k}, rng), random_tensor({k, n}, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::matmul(g, x[0], x[1]), 3); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, TransposeReshapePermute) {
  check_op("layout", [](Rng& rng) {
    const auto a = dim(rng), b = dim(rng), c = dim(rng);
    std::vector<Tensor> in{random_tensor({a, b, c}, rng)};
    ScalarFn f = [a, b, c](Graph& g, std::span<const Tensor> x) {
      const std::size_t axes[] = {2, 0, 1};
      auto t = ops::transpose(g, x[0]);
      auto r = ops::reshape(g, t, {a * c, b});
      auto p = ops::permute(g, ops::reshape(g, r, {a, c, b}), axes);
      return weighted_sum(g, p, 4);
    };
    return std::pair{f, in};
  });
}

TEST(GradCheck, Elementwise) {
  check_op("elementwise", [](Rng& rng) {
    const Shape s{dim(rng), dim(rng)};
    std::vector<Tensor> in{random_tensor(s, rng), random_tensor(s, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) {
      auto y = ops::add(g, ops::mul(g, x[0], x[1]), ops::sub(g, x[0], ops::scale(g, x[1], 0.7)));
      return weighted_sum(g, ops::add(g, y, 1.5), 5);
    };
    return std::pair{f, in};
  });
}

TEST(GradCheck, AddBias) {
  check_op("add_bias", [](Rng& rng) {
    const auto h = dim(rng);
    std::vector<Tensor> in{random_tensor({dim(rng), dim(rng), h}, rng), random_tensor({h}, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::add_bias(g, x[0], x[1]), 6); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, Relu) {
  check_op("relu", [](Rng& rng) {
    std::vector<Tensor> in{random_tensor({dim(rng), dim(rng)}, rng)};
    // Keep samples away from the kink.
    for (auto& v : in[0].mutable_data())
      if (std::abs(v) < 1e-3) v = 0.5;
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::relu(g, x[0]), 7); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, Gelu) {
  check_op("gelu", [](Rng& rng) {
    std::vector<Tensor> in{random_tensor({dim(rng), dim(rng)}, rng, true, 2.0)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::gelu(g, x[0]), 8); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, Softmax) {
  check_op("softmax", [](Rng& rng) {
    const auto axis = static_cast<std::size_t>(rng.below(3));
    std::vector<Tensor> in{random_tensor({dim(rng), dim(rng), dim(rng)}, rng, true, 2.0)};
    ScalarFn f = [axis](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::softmax(g, x[0], axis), 9); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, LayerNorm) {
  check_op("layer_norm", [](Rng& rng) {
    const auto h = 2 + rng.below(5);
    std::vector<Tensor> in{random_tensor({dim(rng), h}, rng), random_tensor({h}, rng), random_tensor({h}, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) {
      return weighted_sum(g, ops::layer_norm(g, x[0], x[1], x[2]), 10);
    };
    return std::pair{f, in};
  });
}

TEST(GradCheck, EmbeddingWithRepeats) {
  check_op("embedding", [](Rng& rng) {
    const auto v = 2 + rng.below(5);
    std::vector<int> ids;
    for (std::size_t i = 0; i < 6; ++i) ids.push_back(static_cast<int>(rng.below(v)));
    std::vector<Tensor> in{random_tensor({v, dim(rng)}, rng)};
    ScalarFn f = [ids](Graph& g, std::span<const Tensor> x) { return weighted_sum(g, ops::embedding(g, x[0], ids), 11); };
    return std::pair{f, in};
  });
}

TEST(GradCheck, SelectAndSlice) {
  check_op("select_slice", [](Rng& rng) {
    const auto a = 2 + rng.below(5), b = dim(rng), c = dim(rng);
    const auto axis = static_cast<std::size_t>(rng.below(3));
    const std::size_t extent = axis == 0 ? a : axis == 1 ? b : c;
    const auto index = static_cast<std::size_t>(rng.below(extent));
    const auto begin = static_cast<std::size_t>(rng.below(a - 1));
    std::vector<Tensor> in{random_tensor({a, b, c}, rng)};
    ScalarFn f = [=](Graph& g, std::span<const Tensor> x) {
      auto s = weighted_sum(g, ops::select(g, x[0], axis, index), 12);
      auto r = weighted_sum(g, ops::slice_rows(g, x[0], begin, a), 13);
      return ops::add(g, s, r);
    };
    return std::pair{f, in};
  });
}

TEST(GradCheck, KeyMaskAndDropout) {
  check_op("mask_dropout", [](Rng& rng) {
    const auto b = 1 + rng.below(2), l = 2 + rng.below(4);
    std::vector<std::uint8_t> mask(b * l, 1);
    for (std::size_t i = 0; i < b; ++i) mask[i * l + l - 1] = 0;
    std::vector<Tensor> in{random_tensor({b, 2, l, l}, rng)};
    ScalarFn f = [mask](Graph& g, std::span<const Tensor> x) {
      Rng drop(99);
      auto s = ops::softmax(g, ops::add_key_mask(g, x[0], mask), 3);
      return weighted_sum(g, ops::dropout(g, s, 0.3, drop), 14);
    };
    return std::pair{f, in};
  });
}

TEST(GradCheck, Reductions) {
  check_op("reductions", [](Rng& rng) {
    const Shape s{dim(rng), dim(rng)};
    std::vector<Tensor> in{random_tensor(s, rng), random_tensor(s, rng)};
    ScalarFn f = [](Graph& g, std::span<const Tensor> x) {
      auto m = ops::mse(g, x[0], x[1]);
      return ops::add(g, ops::add(g, m, ops::mean(g, ops::mul(g, x[0], x[0]))), ops::scale(g, ops::sum(g, x[1]), 0.1));
    };
    return std::pair{f, in};
  });
}

TEST(GradCheck, CrossEntropyWithIgnoredRows) {
  check_op("cross_entropy", [](Rng& rng) {
    const auto n = 2 + rng.below(5), c = 2 + rng.below(5);
    std::vector<int> targets;
    for (std::size_t i = 0; i < n; ++i) targets.push_back(static_cast<int>(rng.below(c)));
    targets[0] = ops::kIgnoreIndex;
    std::vector<Tensor> in{random_tensor({n, c}, rng, true, 2.0)};
    ScalarFn f = [targets](Graph& g, std::span<const Tensor> x) { return ops::cross_entropy(g, x[0], targets); };
    return std::pair{f, in};
  });
}

TEST(Elementwise, ReluAndAddIdentity) {
  Graph g(false);
  Tensor x({3}, {-1, 0, 2});
  EXPECT_EQ(values(ops::relu(g, x)), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(values(ops::add(g, x, 0.0)), values(x));
  EXPECT_THROW(ops::add(g, x, Tensor::zeros({2})), DimensionError);
}

TEST(Elementwise, GeluMatchesTanhFormula) {
  Graph g(false);
  Tensor x({4}, {-2.0, -0.5, 0.0, 1.5});
  const auto y = ops::gelu(g, x);
  for (std::size_t i = 0; i < 4; ++i) {
    const double v = x.at(i);
    EXPECT_DOUBLE_EQ(y.at(i), 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v))));
  }
}

TEST(Softmax, UniformShiftInvarianceAndNormalisation) {
  Graph g(false);
  auto u = ops::softmax(g, Tensor({3}, {0, 0, 0}), 0);
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  Rng rng(3);
  Tensor x = random_tensor({4, 5}, rng, false, 3.0);
  Tensor shifted = ops::add(g, x, 123.0);
  auto a = ops::softmax(g, x, 1);
  auto b = ops::softmax(g, shifted, 1);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(a.at(i), b.at(i), 1e-12);
    EXPECT_GT(a.at(i), 0.0);
    EXPECT_LE(a.at(i), 1.0);
  }
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += a.at(r * 5 + c);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(ops::softmax(g, x, 2), DimensionError);
}

TEST(LayerNorm, ConstantRowAndZeroMean) {
  Graph g(false);
  Tensor ones = Tensor::full({4}, 1.0), zeros = Tensor::zeros({4});
  auto y = ops::layer_norm(g, Tensor({1, 4}, {3, 3, 3, 3}), ones, zeros);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  Rng rng(4);
  auto z = ops::layer_norm(g, random_tensor({3, 4}, rng, false, 5.0), ones, zeros);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0;
    for (std::size_t c = 0; c < 4; ++c) m += z.at(r * 4 + c);
    EXPECT_LT(std::abs(m / 4), 1e-9);
  }
  EXPECT_THROW(ops::layer_norm(g, Tensor::zeros({2, 3}), ones, zeros), DimensionError);
}

TEST(Embedding, GatherScatterAndRange) {
  Tensor table({3, 2}, {0, 1, 10, 11, 20, 21}, true);
  {
    Graph g(false);
    EXPECT_EQ(values(ops::embedding(g, table, std::vector<int>{0})), (std::vector<double>{0, 1}));
  }
  Graph g;
  auto e = ops::embedding(g, table, std::vector<int>{1, 1});
  g.backward(ops::sum(g, e));
  EXPECT_EQ(values(Tensor({6}, {table.grad().begin(), table.grad().end()})), (std::vector<double>{0, 0, 2, 2, 0, 0}));
  try {
    ops::embedding(g, table, std::vector<int>{3});
    FAIL();
  } catch (const IndexError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos);
  }
}

TEST(Mse, HandValuesSymmetryAndGradient) {
  Graph g(false);
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  EXPECT_EQ(ops::mse(g, a, b).item(), 4.0);
  EXPECT_EQ(ops::mse(g, a, a).item(), 0.0);
  Rng rng(8);
  Tensor x = random_tensor({3, 5}, rng, false), y = random_tensor({3, 5}, rng, false);
  EXPECT_EQ(ops::mse(g, x, y).item(), ops::mse(g, y, x).item());
  EXPECT_THROW(ops::mse(g, a, Tensor::zeros({3})), DimensionError);

  std::vector<Tensor> in{random_tensor({4, 3}, rng)};
  Tensor c = random_tensor({4, 3}, rng, false);
  auto f = [c](Graph& gg, std::span<const Tensor> v) { return ops::mse(gg, v[0], c); };
  EXPECT_TRUE(grad_check(f, in, 1e-6, 0.0).passed());
}

TEST(CrossEntropy, HandCasesAndIgnoredRows) {
  Graph g(false);
  EXPECT_NEAR(ops::cross_entropy(g, Tensor({1, 2}, {0, 0}), std::vector<int>{0}).item(), std::log(2.0), 1e-15);
  EXPECT_LT(ops::cross_entropy(g, Tensor({1, 2}, {100, -100}), std::vector<int>{0}).item(), 1e-12);
  Rng rng(9);
  Tensor logits = random_tensor({3, 4}, rng, false);
  const double with_ignored = ops::cross_entropy(g, logits, std::vector<int>{2, ops::kIgnoreIndex, 1}).item();
  Tensor reduced({2, 4}, {logits.at(0), logits.at(1), logits.at(2), logits.at(3), logits.at(8), logits.at(9),
                          logits.at(10), logits.at(11)});
  EXPECT_DOUBLE_EQ(with_ignored, ops::cross_entropy(g, reduced, std::vector<int>{2, 1}).item());
  EXPECT_THROW(ops::cross_entropy(g, logits, std::vector<int>(3, ops::kIgnoreIndex)), InputError);
}

TEST(Backward, LinearAndQuadraticHandCases) {
  Tensor x({3}, {1, 2, 3}, true);
  Graph g;
  g.backward(ops::sum(g, x));
  EXPECT_EQ(values(Tensor({3}, {x.grad().begin(), x.grad().end()})), (std::vector<double>{1, 1, 1}));

  Tensor y({1}, {2}, true);
  Graph g2;
  g2.backward(ops::mse(g2, y, Tensor::zeros({1})));
  EXPECT_EQ(y.grad()[0], 4.0);
}

TEST(Backward, RejectsNonScalarAndAccumulates) {
  Rng rng(10);
  Tensor w = random_tensor({3, 3}, rng);
  Tensor x = random_tensor({2, 3}, rng, false);
  Graph g;
  auto out = ops::gelu(g, ops::matmul(g, x, w));
  EXPECT_THROW(g.backward(out), RankError);
  auto loss = weighted_sum(g, out, 3);
  g.backward(loss);
  const auto once = std::vector<double>(w.grad().begin(), w.grad().end());
  g.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(w.grad()[i], 2.0 * once[i], 1e-12 * std::abs(once[i]));
}

TEST(Backward, NoGradTensorsNeverAccumulate) {
  Tensor x({2}, {1, 2}, false);
  Tensor w({2}, {3, 4}, true);
  Graph g;
  g.backward(ops::sum(g, ops::mul(g, x, w)));
  EXPECT_FALSE(x.has_grad());
  EXPECT_THROW(x.grad_buffer(), Error);
}

TEST(Graph, ParentsPrecedeChildren) {
  Rng rng(12);
  Tensor a = random_tensor({2, 2}, rng);
  Graph g;
  auto b = ops::relu(g, ops::matmul(g, a, a));
  auto c = ops::sum(g, ops::add(g, b, ops::scale(g, b, 2.0)));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int p : g.node(i).parents) EXPECT_LT(static_cast<std::size_t>(p), i);
  EXPECT_EQ(*c.node_id(), static_cast<int>(g.size() - 1));
}

TEST(Determinism, IdenticalInputsBitwiseIdentical) {
  auto run = [] {
    Rng rng(13);
    Tensor a = random_tensor({5, 6}, rng), b = random_tensor({6, 4}, rng);
    Graph g;
    auto loss = weighted_sum(g, ops::softmax(g, ops::gelu(g, ops::matmul(g, a, b)), 1), 2);
    g.backward(loss);
    auto out = values(a.detach());
    out.push_back(loss.item());
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, SumIsExactAndMseAgainstConstantPasses) {
  Rng rng(14);
  std::vector<Tensor> in{random_tensor({3, 4}, rng)};
  auto f = [](Graph& g, std::span<const Tensor> x) { return ops::sum(g, x[0]); };
  const auto r = grad_check(f, in, 0.0, 1e-9);
  EXPECT_TRUE(r.passed());
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, FlagsCorruptedBackwardRule) {
  Rng rng(15);
  std::vector<Tensor> in{random_tensor({3}, rng)};
  auto f = [](Graph& g, std::span<const Tensor> x) {
    // square with a backward rule that forgets the factor 2
    std::vector<double> out(3);
    for (std::size_t i = 0; i < 3; ++i) out[i] = x[0].at(i) * x[0].at(i);
    Tensor y({3}, out);
    Tensor src = x[0];
    if (!g.should_record({src})) return ops::sum(g, y);
    y = g.record(OpKind::kCustom, y, {src}, [src](std::span<const double> gout) mutable {
      auto gs = src.grad_buffer();
      for (std::size_t i = 0; i < 3; ++i) gs[i] += gout[i] * src.at(i);
    });
    return ops::sum(g, y);
  };
  const auto r = grad_check(f, in, kRelTol, kAbsTol);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.failures.size(), 3u);
}
