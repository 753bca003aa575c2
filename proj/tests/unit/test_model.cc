#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sdlab/errors.h"
#include "sdlab/model.h"

namespace sdlab {
namespace {

using Matrix = std::vector<std::vector<double>>;

// Straight-line reference forward pass built from nested vectors, sharing no
// code with the library.
struct ReferenceNet {
  Matrix w_in;
  std::vector<Matrix> w;
  std::vector<std::vector<double>> b;
  Matrix w_out;

  static Matrix take(const std::vector<double>& p, std::size_t& at, std::size_t rows,
                     std::size_t cols) {
    Matrix m(rows, std::vector<double>(cols));
    for (auto& row : m)
      for (double& v : row) v = p[at++];
    return m;
  }

  ReferenceNet(const ModelDims& d, const std::vector<double>& p) {
    std::size_t at = 0;
    w_in = take(p, at, d.d_hidden, d.d_in);
    for (std::size_t l = 0; l < d.num_blocks; ++l) {
      w.push_back(take(p, at, d.d_hidden, d.d_hidden));
      b.push_back(take(p, at, 1, d.d_hidden)[0]);
    }
    w_out = take(p, at, d.d_out, d.d_hidden);
  }

  static std::vector<double> apply(const Matrix& m, const std::vector<double>& x) {
    std::vector<double> y(m.size(), 0.0);
    for (std::size_t r = 0; r < m.size(); ++r)
      for (std::size_t c = 0; c < x.size(); ++c) y[r] += m[r][c] * x[c];
    return y;
  }

  std::vector<double> operator()(const std::vector<double>& x) const {
    std::vector<double> h = apply(w_in, x);
    for (std::size_t l = 0; l < w.size(); ++l) {
      const std::vector<double> z = apply(w[l], h);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += std::tanh(z[i] + b[l][i]);
    }
    return apply(w_out, h);
  }
};

double reference_loss(const ModelDims& d, const std::vector<double>& params,
                      const Batch<double>& batch) {
  const ReferenceNet ref(d, params);
  double sum = 0.0;
  for (std::size_t n = 0; n < batch.size; ++n) {
    const std::vector<double> x(batch.x.begin() + n * d.d_in, batch.x.begin() + (n + 1) * d.d_in);
    const std::vector<double> y = ref(x);
    for (std::size_t k = 0; k < d.d_out; ++k) {
      const double e = y[k] - batch.y[n * d.d_out + k];
      sum += e * e;
    }
  }
  return sum / static_cast<double>(batch.size * d.d_out);
}

TEST(ResidualNet, ParameterCountFormula) {
  for (ModelDims d : {ModelDims{8, 32, 4, 12}, ModelDims{1, 1, 1, 1}, ModelDims{4, 8, 2, 6}}) {
    ResidualNet net(d);
    EXPECT_EQ(net.num_params(),
              d.d_hidden * d.d_in + d.num_blocks * (d.d_hidden * d.d_hidden + d.d_hidden) +
                  d.d_out * d.d_hidden);
    EXPECT_EQ(net.layout().num_blocks(), d.num_blocks + 2);
  }
  EXPECT_THROW(ResidualNet(ModelDims{0, 4, 2, 3}), ConfigError);
}

TEST(ForwardLoss, MatchesStraightLineReference) {
  const ModelDims d{4, 8, 2, 6};
  ResidualNet net(d);
  SyntheticTask<double> task(net, 7, 16);
  const ParamVector<double> params = net.init<double>(7);
  const Batch<double> batch = task.batch(0, 1);
  const double got = forward_loss(net, params, batch);
  const double want = reference_loss(d, params.values(), batch);
  EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, want));
  EXPECT_GT(want, 0.0);
}

TEST(ForwardLoss, ZeroParamsGiveMeanSquaredTarget) {
  const ModelDims d{3, 6, 2, 4};
  ResidualNet net(d);
  SyntheticTask<double> task(net, 3, 10);
  const Batch<double> batch = task.batch(1, 4);
  const ParamVector<double> zero(net.layout());
  double sq = 0.0;
  for (double y : batch.y) sq += y * y;
  EXPECT_NEAR(forward_loss(net, zero, batch), sq / (10.0 * 2.0), 1e-14);
}

TEST(ForwardLoss, TeacherIsAFixedPointWithZeroGradient) {
  ResidualNet net(ModelDims{8, 32, 4, 12});
  SyntheticTask<double> task(net, 21, 8);
  const Batch<double> batch = task.batch(0, 9);
  EXPECT_EQ(forward_loss(net, task.teacher(), batch), 0.0);
  const ParamVector<double> g = backward(net, task.teacher(), batch);
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardLoss, ShapeErrors) {
  ResidualNet net(ModelDims{2, 3, 1, 2});
  SyntheticTask<double> task(net, 1, 4);
  Batch<double> batch = task.batch(0, 1);
  ParamVector<double> wrong(BlockLayout({{"x", 0, 5}}));
  EXPECT_THROW(forward_loss(net, wrong, batch), StructuralError);
  batch.y.pop_back();
  EXPECT_THROW(forward_loss(net, task.teacher(), batch), StructuralError);
  Batch<double> empty;
  EXPECT_THROW(forward_loss(net, task.teacher(), empty), StructuralError);
}

double max_relative_fd_error(const ModelDims& d, std::uint64_t seed) {
  ResidualNet net(d);
  SyntheticTask<double> task(net, seed, 6);
  ParamVector<double> params = net.init<double>(seed + 100);
  const Batch<double> batch = task.batch(0, 3);
  const ParamVector<double> g = backward(net, params, batch);
  const double eps = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double up = forward_loss(net, params, batch);
    params[i] = keep - eps;
    const double down = forward_loss(net, params, batch);
    params[i] = keep;
    const double fd = (up - down) / (2.0 * eps);
    // Absolute floor for entries whose true gradient is numerically zero.
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelDims d{1 + rng() % 6, 2 + rng() % 15, 1 + rng() % 4, 1 + rng() % 8};
    const double err = max_relative_fd_error(d, 1000 + trial);
    EXPECT_LE(err, 1e-4) << "d_in=" << d.d_in << " d_hidden=" << d.d_hidden
                         << " d_out=" << d.d_out << " L=" << d.num_blocks;
  }
}

TEST(Backward, OutputGradientIsLinearInTargetsWhenHeadIsZero) {
  const ModelDims d{3, 5, 2, 3};
  ResidualNet net(d);
  SyntheticTask<double> task(net, 4, 7);
  ParamVector<double> params = net.init<double>(9);
  for (double& v : params.block(net.w_out_block())) v = 0.0;
  Batch<double> batch = task.batch(0, 1);
  const ParamVector<double> g1 = backward(net, params, batch);
  for (double& y : batch.y) y *= 2.0;
  const ParamVector<double> g2 = backward(net, params, batch);
  const auto a = g1.block(net.w_out_block());
  const auto b = g2.block(net.w_out_block());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 2.0 * a[i], 1e-12);
}

TEST(Backward, FloatAgreesWithDouble) {
  const ModelDims d{8, 32, 4, 12};
  ResidualNet net(d);
  SyntheticTask<double> td(net, 5, 16);
  SyntheticTask<float> tf(net, 5, 16);
  const ParamVector<double> pd = net.init<double>(5);
  const ParamVector<float> pf = net.init<float>(5);
  for (std::size_t i = 0; i < pd.size(); ++i) ASSERT_EQ(pf[i], static_cast<float>(pd[i]));
  const double ld = forward_loss(net, pd, td.batch(0, 1));
  const double lf = forward_loss(net, pf, tf.batch(0, 1));
  EXPECT_NEAR(lf, ld, 1e-4 * ld);
}

TEST(SyntheticTask, BatchesArePureFunctionsOfSeedReplicaStep) {
  ResidualNet net(ModelDims{4, 8, 2, 3});
  SyntheticTask<float> a(net, 99, 5), b(net, 99, 5);
  const Batch<float> x1 = a.batch(1, 17), x2 = b.batch(1, 17);
  EXPECT_EQ(x1.x, x2.x);
  EXPECT_EQ(x1.y, x2.y);
  EXPECT_NE(a.batch(0, 17).x, x1.x);
  EXPECT_NE(a.batch(1, 18).x, x1.x);
  EXPECT_NE(a.shard_seed(0), a.shard_seed(1));
  SyntheticTask<float> c(net, 100, 5);
  EXPECT_NE(c.batch(1, 17).x, x1.x);
}

TEST(SyntheticTask, EvalSetIsSeparateFromTrainingShards) {
  ResidualNet net(ModelDims{4, 8, 2, 3});
  SyntheticTask<double> task(net, 1, 4);
  const Batch<double> eval = task.eval_set(4);
  for (std::size_t m = 0; m < 4; ++m)
    for (long t = 1; t <= 5; ++t) EXPECT_NE(task.batch(m, t).x, eval.x);
  EXPECT_EQ(task.eval_set(4).x, eval.x);
}

TEST(Init, SeededAndScaled) {
  ResidualNet net(ModelDims{8, 32, 4, 12});
  const ParamVector<double> a = net.init<double>(3), b = net.init<double>(3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, net.init<double>(4));
  // Block weights have std 1/sqrt(32); check the sample variance loosely.
  const auto blk = a.block(1);
  double s2 = 0.0;
  for (double v : blk) s2 += v * v;
  EXPECT_NEAR(s2 / static_cast<double>(blk.size()), 1.0 / 32.0, 0.2 / 32.0);
}

}  // namespace
}  // namespace sdlab
