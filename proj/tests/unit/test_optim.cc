#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sdlab/errors.h"
#include "sdlab/optim.h"

namespace sdlab {
namespace {

// Scalar AdamW written out in long double as an independent oracle.
struct AdamOracle {
  long double m = 0, v = 0;
  long t = 0;
  long double step(long double theta, long double g, const AdamHyper& hp) {
    ++t;
    m = hp.beta1 * m + (1 - hp.beta1) * g;
    v = hp.beta2 * v + (1 - hp.beta2) * g * g;
    const long double mh = m / (1 - std::pow(static_cast<long double>(hp.beta1), t));
    const long double vh = v / (1 - std::pow(static_cast<long double>(hp.beta2), t));
    return theta - hp.lr * (mh / (std::sqrt(vh) + hp.eps) + hp.weight_decay * theta);
  }
};

TEST(AdamW, ZeroGradientFreshStateIsNoOp) {
  std::vector<double> p = {1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState<double> s(3);
  adamw_step<double>(p, g, s, AdamHyper{});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(s.t, 1);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<double> p = {0.0};
  const std::vector<double> g = {0.5};
  AdamState<double> s(1);
  AdamHyper hp;
  hp.lr = 0.1;
  adamw_step<double>(p, g, s, hp);
  EXPECT_NEAR(p[0], -0.1, 1e-8);
}

TEST(AdamW, DecoupledWeightDecayOnly) {
  std::vector<double> p = {1.0};
  const std::vector<double> g = {0.0};
  AdamState<double> s(1);
  AdamHyper hp;
  hp.lr = 0.1;
  hp.weight_decay = 0.1;
  adamw_step<double>(p, g, s, hp);
  EXPECT_DOUBLE_EQ(p[0], 0.99);
}

TEST(AdamW, MatchesScalarOracleOverManySteps) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  AdamHyper hp;
  hp.lr = 3e-3;
  hp.weight_decay = 0.05;
  std::vector<double> p = {0.3, -1.2, 2.0, 0.0};
  std::vector<long double> ref(p.begin(), p.end());
  std::vector<AdamOracle> oracle(p.size());
  AdamState<double> s(p.size());
  for (int step = 0; step < 200; ++step) {
    std::vector<double> g(p.size());
    for (double& x : g) x = nd(rng);
    adamw_step<double>(p, g, s, hp);
    for (std::size_t i = 0; i < p.size(); ++i) ref[i] = oracle[i].step(ref[i], g[i], hp);
  }
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_NEAR(p[i], static_cast<double>(ref[i]), 1e-12);
}

TEST(AdamW, FirstStepUpdateBound) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 10.0);
  AdamHyper hp;
  hp.lr = 0.01;
  hp.weight_decay = 0.1;
  std::vector<double> p(100), g(100);
  for (double& x : p) x = nd(rng);
  for (double& x : g) x = nd(rng);
  const std::vector<double> before = p;
  AdamState<double> s(p.size());
  adamw_step<double>(p, g, s, hp);
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_LE(std::abs(p[i] - before[i]), hp.lr * (1.0 + 1e-12 + hp.weight_decay * std::abs(before[i])));
}

TEST(AdamW, NonFiniteGradientReportsStep) {
  std::vector<float> p = {1.0f, 2.0f};
  std::vector<float> g = {0.1f, 0.1f};
  AdamState<float> s(2);
  adamw_step<float>(p, g, s, AdamHyper{});
  g[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    adamw_step<float>(p, g, s, AdamHyper{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
  }
  g[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(adamw_step<float>(p, g, s, AdamHyper{}), NumericError);
}

TEST(AdamW, FrozenRangesKeepMomentsAndOnlyDecay) {
  AdamHyper hp;
  hp.lr = 0.1;
  hp.weight_decay = 0.5;
  std::vector<double> p = {1.0, 1.0, 1.0, 1.0};
  const std::vector<double> g = {1.0, 1.0, 1.0, 1.0};
  AdamState<double> s(4);
  const std::vector<IndexRange> frozen = {{1, 3}};
  adamw_step<double>(p, g, s, hp, frozen);
  EXPECT_EQ(s.m[1], 0.0);
  EXPECT_EQ(s.v[2], 0.0);
  EXPECT_NE(s.m[0], 0.0);
  EXPECT_DOUBLE_EQ(p[1], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(p[2], 1.0 - 0.1 * 0.5);
  EXPECT_NEAR(p[0], 1.0 - 0.1 * (1.0 + 0.5), 1e-7);
}

TEST(AdamW, LengthMismatch) {
  std::vector<double> p(3), g(2);
  AdamState<double> s(3);
  EXPECT_THROW(adamw_step<double>(p, g, s, AdamHyper{}), StructuralError);
}

TEST(Nesterov, OneStepHandComputation) {
  NesterovState<double> s(1);
  const std::vector<double> base = {5.0}, delta = {1.0};
  const std::vector<double> out = nesterov_step<double>(base, delta, s, NesterovHyper{0.4, 0.9});
  EXPECT_DOUBLE_EQ(s.v[0], 1.0);
  EXPECT_NEAR(out[0], 5.0 - 0.76, 1e-15);
}

TEST(Nesterov, SecondStepMagnitude) {
  NesterovState<double> s(1);
  const std::vector<double> base = {0.0}, delta = {1.0};
  nesterov_step<double>(base, delta, s, NesterovHyper{0.4, 0.9});
  const std::vector<double> out = nesterov_step<double>(base, delta, s, NesterovHyper{0.4, 0.9});
  EXPECT_NEAR(-out[0], 0.4 * (1.0 + 0.9 * 1.9), 1e-15);
  EXPECT_NEAR(-out[0], 1.084, 1e-12);
}

TEST(Nesterov, ZeroMomentumIsPlainSgd) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  NesterovState<double> s(8);
  for (int k = 0; k < 5; ++k) {
    std::vector<double> base(8), delta(8);
    for (double& x : base) x = u(rng);
    for (double& x : delta) x = u(rng);
    const auto out = nesterov_step<double>(base, delta, s, NesterovHyper{0.7, 0.0});
    for (int i = 0; i < 8; ++i) EXPECT_EQ(out[i], base[i] - 0.7 * delta[i]);
  }
}

TEST(Nesterov, UnitLearningRateRecoversInnerParameters) {
  const std::vector<double> base = {0.5, -0.25, 2.0};
  const std::vector<double> inner = {0.375, -0.125, 1.5};
  std::vector<double> delta(3);
  for (int i = 0; i < 3; ++i) delta[i] = base[i] - inner[i];
  NesterovState<double> s(3);
  EXPECT_EQ(nesterov_step<double>(base, delta, s, NesterovHyper{1.0, 0.0}), inner);
}

TEST(Nesterov, DirectionPlusApplyEqualsStep) {
  NesterovState<float> a(2), b(2);
  const std::vector<float> base = {1.0f, 2.0f}, delta = {0.25f, -0.5f};
  const NesterovHyper hp{0.4, 0.9};
  for (int k = 0; k < 3; ++k) {
    const auto want = nesterov_step<float>(base, delta, a, hp);
    const auto dir = nesterov_direction<float>(delta, b, hp);
    std::vector<float> got(2);
    apply_outer_direction<float>(base, dir, hp, got);
    EXPECT_EQ(got, want);
  }
}

TEST(Nesterov, LengthMismatch) {
  NesterovState<double> s(2);
  const std::vector<double> base = {1.0}, delta = {1.0};
  EXPECT_THROW(nesterov_step<double>(base, delta, s, NesterovHyper{}), StructuralError);
}

}  // namespace
}  // namespace sdlab
