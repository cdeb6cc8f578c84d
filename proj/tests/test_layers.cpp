#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "skl/model/layers.hpp"

using namespace skl;

namespace {

FeatureMap<double> random_map(int n, int h, int w, int c, std::uint64_t seed) {
  SeededRng rng(seed);
  FeatureMap<double> fm(n, h, w, c);
  for (Eigen::Index i = 0; i < fm.data.size(); ++i) fm.data.data()[i] = rng.uniform(-1, 1);
  return fm;
}

Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}

double max_diff(const oracle::Tensor4& a, const oracle::Tensor4& b) {
  EXPECT_EQ(a.v.size(), b.v.size());
  double d = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) d = std::max(d, std::abs(a.v[i] - b.v[i]));
  return d;
}

}  // namespace

struct ConvCase {
  int kernel, stride, in_c, out_c, h, w;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, MatchesDirectLoops) {
  const auto p = GetParam();
  const auto in = random_map(2, p.h, p.w, p.in_c, 11);
  const auto weight = random_matrix(p.out_c, p.in_c * p.kernel * p.kernel, 12);
  const ConvGeometry g{p.kernel, p.stride};
  const auto out = conv_forward(in, weight, g);
  const auto expect = oracle::conv(oracle::from_feature_map(in), weight, p.kernel, p.stride);
  EXPECT_EQ(out.height, expect.h);
  EXPECT_EQ(out.width, expect.w);
  EXPECT_LT(max_diff(oracle::from_feature_map(out), expect), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle,
                         ::testing::Values(ConvCase{3, 1, 2, 3, 5, 4}, ConvCase{3, 2, 3, 4, 7, 6},
                                           ConvCase{1, 1, 4, 2, 3, 3}, ConvCase{1, 2, 3, 5, 6, 5},
                                           ConvCase{7, 2, 3, 2, 9, 9}, ConvCase{3, 2, 1, 1, 1, 1}));

TEST(Conv, BackwardMatchesFiniteDifferences) {
  const ConvGeometry g{3, 2};
  auto in = random_map(2, 5, 4, 2, 21);
  auto weight = random_matrix(3, 2 * 9, 22);
  const auto probe = random_map(2, g.out_size(5), g.out_size(4), 3, 23);
  auto objective = [&] { return conv_forward(in, weight, g).data.cwiseProduct(probe.data).sum(); };

  FeatureMap<double> din;
  const auto dw = conv_backward(in, weight, probe, g, &din);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < weight.size(); ++i) {
    const double orig = weight.data()[i];
    weight.data()[i] = orig + h;
    const double lp = objective();
    weight.data()[i] = orig - h;
    const double lm = objective();
    weight.data()[i] = orig;
    EXPECT_NEAR(dw.data()[i], (lp - lm) / (2 * h), 1e-7);
  }
  for (Eigen::Index i = 0; i < in.data.size(); ++i) {
    const double orig = in.data.data()[i];
    in.data.data()[i] = orig + h;
    const double lp = objective();
    in.data.data()[i] = orig - h;
    const double lm = objective();
    in.data.data()[i] = orig;
    EXPECT_NEAR(din.data.data()[i], (lp - lm) / (2 * h), 1e-7);
  }
}

TEST(BatchNorm, TrainAndEvalMatchOracle) {
  const auto x = random_map(3, 4, 5, 3, 31);
  Matrix<double> gamma = random_matrix(3, 1, 32), beta = random_matrix(3, 1, 33);
  Matrix<double> mean = random_matrix(3, 1, 34), var = random_matrix(3, 1, 35).cwiseAbs();
  BnCache<double> cache;
  for (bool train : {true, false}) {
    Vector<double> rm = mean.col(0), rv = var.col(0);
    const auto y = bn_forward<double>(x, gamma.col(0), beta.col(0), rm, rv,
                                      train ? BnMode::batch_stats : BnMode::running_stats, false, {}, cache);
    const auto expect = oracle::batchnorm(oracle::from_feature_map(x), gamma, beta, mean, var, train);
    EXPECT_LT(max_diff(oracle::from_feature_map(y), expect), 1e-12) << (train ? "train" : "eval");
  }
}

TEST(BatchNorm, RunningStatsBlendWithUnbiasedVariance) {
  FeatureMap<double> x(1, 1, 4, 1);
  x.data << 1, 2, 3, 6;
  Vector<double> gamma = Vector<double>::Ones(1), beta = Vector<double>::Zero(1);
  Vector<double> rm = Vector<double>::Zero(1), rv = Vector<double>::Ones(1);
  BnCache<double> cache;
  bn_forward<double>(x, gamma, beta, rm, rv, BnMode::batch_stats, true, {0.1, 1e-5}, cache);
  // mean 3, unbiased variance 14/3
  EXPECT_NEAR(rm(0), 0.3, 1e-12);
  EXPECT_NEAR(rv(0), 0.9 + 0.1 * 14.0 / 3.0, 1e-12);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  for (BnMode mode : {BnMode::batch_stats, BnMode::running_stats}) {
    auto x = random_map(2, 3, 3, 2, 41);
    Vector<double> gamma = random_matrix(2, 1, 42).col(0), beta = random_matrix(2, 1, 43).col(0);
    Vector<double> rm = random_matrix(2, 1, 44).col(0), rv = random_matrix(2, 1, 45).col(0).cwiseAbs();
    const auto probe = random_map(2, 3, 3, 2, 46);
    BnCache<double> cache;
    auto objective = [&] {
      BnCache<double> c;
      return bn_forward<double>(x, gamma, beta, rm, rv, mode, false, {}, c).data.cwiseProduct(probe.data).sum();
    };
    bn_forward<double>(x, gamma, beta, rm, rv, mode, false, {}, cache);
    Vector<double> dgamma, dbeta;
    const auto dx = bn_backward<double>(probe, gamma, cache, dgamma, dbeta);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.data.size(); ++i) {
      const double orig = x.data.data()[i];
      x.data.data()[i] = orig + h;
      const double lp = objective();
      x.data.data()[i] = orig - h;
      const double lm = objective();
      x.data.data()[i] = orig;
      EXPECT_NEAR(dx.data.data()[i], (lp - lm) / (2 * h), 1e-6);
    }
    for (Eigen::Index c = 0; c < 2; ++c) {
      const double orig = gamma(c);
      gamma(c) = orig + h;
      const double lp = objective();
      gamma(c) = orig - h;
      const double lm = objective();
      gamma(c) = orig;
      EXPECT_NEAR(dgamma(c), (lp - lm) / (2 * h), 1e-6);
      EXPECT_NEAR(dbeta(c), probe.data.col(c).sum(), 1e-12);
    }
  }
}

TEST(MaxPool, MatchesOracleAndRoutesGradient) {
  const auto x = random_map(2, 5, 6, 3, 51);
  std::vector<Eigen::Index> argmax;
  const auto y = maxpool_forward(x, argmax);
  EXPECT_LT(max_diff(oracle::from_feature_map(y), oracle::maxpool(oracle::from_feature_map(x))), 0.0 + 1e-15);

  FeatureMap<double> dy(y.batch, y.height, y.width, y.channels());
  dy.data.setOnes();
  const auto dx = maxpool_backward(dy, argmax, x);
  EXPECT_DOUBLE_EQ(dx.data.sum(), double(dy.data.size()));
}

TEST(GlobalAveragePool, ForwardAndBackward) {
  const auto x = random_map(2, 3, 2, 4, 61);
  const auto pooled = gap_forward(x);
  ASSERT_EQ(pooled.rows(), 2);
  ASSERT_EQ(pooled.cols(), 4);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c) {
      double s = 0;
      for (int y = 0; y < 3; ++y)
        for (int xx = 0; xx < 2; ++xx) s += x.at(n, y, xx, c);
      EXPECT_NEAR(pooled(n, c), s / 6, 1e-15);
    }
  const auto dx = gap_backward<double>(Matrix<double>::Ones(2, 4), 3, 2);
  EXPECT_NEAR(dx.data.sum(), 8.0, 1e-12);
  EXPECT_NEAR(dx.at(1, 2, 1, 3), 1.0 / 6, 1e-15);
}
