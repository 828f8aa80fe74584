#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "xeroalign/errors.hpp"
#include "xeroalign/optim.hpp"

using namespace xeroalign;

namespace {

// Independent scalar reference of one bias-corrected update.
struct RefAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

Tensor param(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), true);
}

void set_grad(const Tensor& t, std::vector<double> g) {
  auto buf = t.grad_buffer();
  std::copy(g.begin(), g.end(), buf.begin());
}

}  // namespace

TEST(Adam, FirstStepHandValue) {
  Tensor w = param({0.0});
  Adam adam({{"w", w}});
  set_grad(w, {1.0});
  adam.step(1e-3);
  // m_hat = v_hat = 1, so the update is lr / (1 + eps).
  EXPECT_NEAR(w.at(0), -1e-3 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(w.at(0), -9.9999999e-4, 1e-12);
  EXPECT_EQ(adam.state().t, 1);
}

TEST(Adam, TwoStepsMatchHandUnrolledRecurrence) {
  // g = 1 then g = 1: m = 0.19, v = 0.001999, both bias-corrected to 1.
  Tensor w = param({0.0});
  Adam adam({{"w", w}});
  set_grad(w, {1.0});
  adam.step(1e-3);
  set_grad(w, {1.0});
  adam.step(1e-3);
  const double m2 = 0.9 * 0.1 + 0.1, v2 = 0.999 * 0.001 + 0.001;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.998001);
  const double expected = -1e-3 / (1 + 1e-8) - 1e-3 * mh / (std::sqrt(vh) + 1e-8);
  EXPECT_NEAR(w.at(0), expected, 1e-12);
  EXPECT_NEAR(w.at(0), -2e-3 / (1 + 1e-8), 1e-12);
}

TEST(Adam, MatchesReferenceOnRandomGradients) {
  Rng rng(1);
  std::vector<double> init(6);
  for (auto& v : init) v = rng.normal();
  Tensor w = param(init);
  Adam adam({{"w", w}});
  std::vector<RefAdam> ref(6);
  std::vector<double> theta = init;
  for (int s = 0; s < 5; ++s) {
    std::vector<double> g(6);
    for (auto& v : g) v = rng.normal();
    set_grad(w, g);
    const double lr = 1e-3 * (s + 1);
    adam.step(lr);
    for (std::size_t i = 0; i < 6; ++i) theta[i] = ref[i].step(theta[i], g[i], lr);
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(w.at(i), theta[i], 1e-12);
}

TEST(Adam, ZeroGradientLeavesParametersAndAdvancesStep) {
  Tensor w = param({0.5, -2.0});
  Adam adam({{"w", w}});
  set_grad(w, {0.0, 0.0});
  adam.step(1e-2);
  EXPECT_EQ(w.at(0), 0.5);
  EXPECT_EQ(w.at(1), -2.0);
  EXPECT_EQ(adam.state().t, 1);
}

TEST(Adam, FirstStepDirectionAndMagnitude) {
  Rng rng(2);
  std::vector<double> g(200);
  for (auto& v : g) {
    v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(5)) - 2.0);
    if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
  }
  Tensor w = param(std::vector<double>(200, 0.0));
  Adam adam({{"w", w}});
  set_grad(w, g);
  const double lr = 3e-4;
  adam.step(lr);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mag = std::abs(g[i]);
    EXPECT_EQ(std::signbit(w.at(i)), !std::signbit(g[i]));
    // The first step moves by lr * |g| / (|g| + eps): within 1e-6 of lr once
    // |g| >= 1e-2, and 1e-5 short of lr at |g| = 1e-3.
    EXPECT_NEAR(std::abs(w.at(i)), lr * mag / (mag + 1e-8), lr * 1e-14);
    if (mag >= 1e-2) {
      EXPECT_NEAR(std::abs(w.at(i)), lr, lr * 1e-6);
    }
  }
}

TEST(Adam, GradientsClearedAndMissingGradientNamed) {
  Tensor a = param({1.0}), b = param({2.0});
  Adam adam({{"layer.a", a}, {"layer.b", b}});
  set_grad(a, {1.0});
  try {
    adam.step(1e-3);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
  }
  set_grad(b, {1.0});
  adam.step(1e-3);
  EXPECT_EQ(a.grad()[0], 0.0);
  EXPECT_EQ(b.grad()[0], 0.0);
}

TEST(Adam, StateRoundTrip) {
  Tensor a = param({1.0, 2.0});
  Adam adam({{"a", a}});
  set_grad(a, {0.3, -0.2});
  adam.step(1e-3);
  Tensor b = param({a.at(0), a.at(1)});
  Adam copy({{"a", b}});
  copy.set_state(adam.state());
  set_grad(a, {0.1, 0.4});
  set_grad(b, {0.1, 0.4});
  adam.step(1e-3);
  copy.step(1e-3);
  EXPECT_EQ(a.at(0), b.at(0));
  EXPECT_EQ(a.at(1), b.at(1));
  AdamState bad = adam.state();
  bad.m[0].pop_back();
  EXPECT_THROW(copy.set_state(bad), Error);
}

TEST(OneCycle, AnchorsHoldExactly) {
  for (std::size_t total : {1u, 2u, 7u, 100u, 1250u}) {
    OneCycleSchedule s{1e-3, total};
    EXPECT_EQ(s.lr_at(0), total == 1 ? 1e-3 : 1e-3 / 25) << total;
    EXPECT_EQ(s.lr_at(s.peak_step()), 1e-3) << total;
    if (total > 1 && s.peak_step() != total - 1) {
      EXPECT_EQ(s.lr_at(total - 1), 1e-3 / 25e4) << total;
    }
  }
  OneCycleSchedule s{1e-3, 100};
  EXPECT_EQ(s.peak_step(), 30u);
  EXPECT_EQ(s.lr_at(0), 4e-5);
  EXPECT_NEAR(s.lr_at(15), 5.2e-4, 1e-15);
  EXPECT_THROW(s.lr_at(100), InputError);
}

TEST(OneCycle, MonotoneRampAndAnneal) {
  OneCycleSchedule s{3e-4, 500, 0.3};
  for (std::size_t i = 1; i <= s.peak_step(); ++i) EXPECT_GE(s.lr_at(i), s.lr_at(i - 1)) << i;
  for (std::size_t i = s.peak_step() + 1; i < 500; ++i) EXPECT_LE(s.lr_at(i), s.lr_at(i - 1)) << i;
}

TEST(OneCycle, Validation) {
  EXPECT_THROW((OneCycleSchedule{0.0, 10}.validate()), ConfigError);
  EXPECT_THROW((OneCycleSchedule{1e-3, 0}.validate()), ConfigError);
  EXPECT_THROW((OneCycleSchedule{1e-3, 10, 1.5}.validate()), ConfigError);
  EXPECT_NO_THROW((OneCycleSchedule{1e-3, 10}.validate()));
}
