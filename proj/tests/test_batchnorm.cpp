#include "edgefilter/batchnorm.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace edgefilter;
using testutil::expect_close;
using testutil::finite_diff;
using testutil::make_rng;
using testutil::rand_tensor;

namespace {

// x with exactly zero mean / unit variance per channel (biased moments).
Tensor standardized_input(int b, int c, int h, int w, std::uint64_t seed) {
  auto rng = make_rng(seed);
  Tensor x = rand_tensor({b, c, h, w}, rng, -2.0f, 2.0f);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t count = static_cast<std::int64_t>(b) * plane;
  for (int cc = 0; cc < c; ++cc) {
    double m = 0;
    for (int bb = 0; bb < b; ++bb)
      for (std::int64_t i = 0; i < plane; ++i)
        m += x.data()[((static_cast<std::int64_t>(bb) * c + cc) * plane) + i];
    m /= static_cast<double>(count);
    double v = 0;
    for (int bb = 0; bb < b; ++bb)
      for (std::int64_t i = 0; i < plane; ++i) {
        double d = x.data()[((static_cast<std::int64_t>(bb) * c + cc) * plane) + i] - m;
        v += d * d;
      }
    v /= static_cast<double>(count);
    const double s = std::sqrt(v);
    for (int bb = 0; bb < b; ++bb)
      for (std::int64_t i = 0; i < plane; ++i) {
        auto& e = x.data()[((static_cast<std::int64_t>(bb) * c + cc) * plane) + i];
        e = static_cast<float>((e - m) / s);
      }
  }
  return x;
}

}  // namespace

TEST(BatchNorm, IdentityOnStandardizedInput) {
  Tensor x = standardized_input(4, 3, 5, 5, 42);
  BNState bn(3);
  Tensor y = batchnorm2d(x, bn, Mode::train);
  expect_close(y.data(), x.data(), 0.0f, 1e-4f);
}

TEST(BatchNorm, ConstantChannelsCollapseToBeta) {
  Tensor x({2, 2, 3, 3});
  std::fill(x.data().begin(), x.data().end(), 7.0f);
  BNState bn(2);
  bn.beta.data() = {0.5f, -1.0f};
  Tensor y = batchnorm2d(x, bn, Mode::train);
  for (int bb = 0; bb < 2; ++bb)
    for (int cc = 0; cc < 2; ++cc)
      for (int i = 0; i < 9; ++i)
        EXPECT_NEAR(y.data()[(static_cast<std::size_t>(bb) * 2 + cc) * 9 + i],
                    bn.beta.data()[static_cast<std::size_t>(cc)], 1e-4f);
}

TEST(BatchNorm, TrainOutputMomentsMatchAffine) {
  auto rng = make_rng(9);
  Tensor x = rand_tensor({8, 3, 6, 6}, rng, -3.0f, 3.0f);
  BNState bn(3);
  bn.gamma.data() = {1.5f, 0.5f, 2.0f};
  bn.beta.data() = {0.3f, -0.2f, 1.0f};
  Tensor y = batchnorm2d(x, bn, Mode::train);
  const std::int64_t plane = 36, count = 8 * plane;
  for (int cc = 0; cc < 3; ++cc) {
    double m = 0, v = 0;
    for (int bb = 0; bb < 8; ++bb)
      for (std::int64_t i = 0; i < plane; ++i)
        m += y.data()[((static_cast<std::int64_t>(bb) * 3 + cc) * plane) + i];
    m /= count;
    for (int bb = 0; bb < 8; ++bb)
      for (std::int64_t i = 0; i < plane; ++i) {
        double d = y.data()[((static_cast<std::int64_t>(bb) * 3 + cc) * plane) + i] - m;
        v += d * d;
      }
    v /= count;
    EXPECT_NEAR(m, bn.beta.data()[static_cast<std::size_t>(cc)], 1e-2);
    const double g = bn.gamma.data()[static_cast<std::size_t>(cc)];
    EXPECT_NEAR(v, g * g, 1e-2 * g * g);
  }
}

TEST(BatchNorm, BatchStatsModeDoesNotTouchRunningStats) {
  auto rng = make_rng(10);
  Tensor x = rand_tensor({4, 2, 3, 3}, rng);
  BNState bn(2);
  auto rm = bn.running_mean;
  auto rv = bn.running_var;
  batchnorm2d(x, bn, Mode::batch_stats);
  EXPECT_EQ(bn.running_mean, rm);
  EXPECT_EQ(bn.running_var, rv);
  batchnorm2d(x, bn, Mode::train);
  EXPECT_NE(bn.running_mean, rm);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  auto rng = make_rng(11);
  BNState bn(1);
  bn.running_mean = {2.0f};
  bn.running_var = {4.0f};
  Tensor x({1, 1, 1, 2}, {2.0f, 4.0f});
  Tensor y = batchnorm2d(x, bn, Mode::eval);
  EXPECT_NEAR(y.data()[0], 0.0f, 1e-5f);
  EXPECT_NEAR(y.data()[1], 1.0f, 1e-3f);
}

TEST(BatchNorm, ChannelMismatchRejected) {
  BNState bn(3);
  EXPECT_THROW(batchnorm2d(Tensor({1, 2, 2, 2}), bn, Mode::train), ShapeError);
}

TEST(BatchNorm, TrainGradMatchesFiniteDifferences) {
  auto rng = make_rng(12);
  Tensor x = rand_tensor({3, 2, 2, 2}, rng, -1.0f, 1.0f, true);
  BNState bn(2);
  bn.gamma.data() = {1.2f, 0.8f};
  bn.beta.data() = {0.1f, -0.1f};
  Tensor up = rand_tensor({3, 2, 2, 2}, rng, -0.5f, 0.5f);
  auto fwd = [&] {
    Tensor y = batchnorm2d(x, bn, Mode::batch_stats);
    return sum(mul(y, up)).item();
  };
  Tensor y = batchnorm2d(x, bn, Mode::batch_stats);
  backward(sum(mul(y, up)));
  expect_close(x.grad(), finite_diff(fwd, x), 1e-3f, 2e-3f);
  expect_close(bn.gamma.grad(), finite_diff(fwd, bn.gamma), 1e-3f, 2e-3f);
  expect_close(bn.beta.grad(), finite_diff(fwd, bn.beta), 1e-3f, 2e-3f);
}

TEST(BatchNorm, EvalGradMatchesFiniteDifferences) {
  auto rng = make_rng(13);
  Tensor x = rand_tensor({2, 2, 2, 2}, rng, -1.0f, 1.0f, true);
  BNState bn(2);
  bn.running_mean = {0.2f, -0.1f};
  bn.running_var = {1.5f, 0.7f};
  auto fwd = [&] {
    Tensor y = batchnorm2d(x, bn, Mode::eval);
    return sum(mul(y, y)).item();
  };
  Tensor y = batchnorm2d(x, bn, Mode::eval);
  backward(sum(mul(y, y)));
  expect_close(x.grad(), finite_diff(fwd, x), 1e-3f, 2e-3f);
}

TEST(TokenNorm, StandardizesEachToken) {
  auto rng = make_rng(14);
  Tensor x = rand_tensor({2, 3, 8}, rng, -2.0f, 2.0f);
  Tensor gamma = Tensor::full({8}, 1.0f);
  Tensor beta({8});
  Tensor y = token_standardize(x, gamma, beta);
  for (int t = 0; t < 6; ++t) {
    double m = 0, v = 0;
    for (int i = 0; i < 8; ++i) m += y.data()[static_cast<std::size_t>(t) * 8 + i];
    m /= 8;
    for (int i = 0; i < 8; ++i) {
      double d = y.data()[static_cast<std::size_t>(t) * 8 + i] - m;
      v += d * d;
    }
    v /= 8;
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
}

TEST(TokenNorm, GradMatchesFiniteDifferences) {
  auto rng = make_rng(15);
  Tensor x = rand_tensor({1, 2, 5}, rng, -1.0f, 1.0f, true);
  Tensor gamma = rand_tensor({5}, rng, 0.5f, 1.5f, true);
  Tensor beta = rand_tensor({5}, rng, -0.3f, 0.3f, true);
  auto fwd = [&] {
    Tensor y = token_standardize(x, gamma, beta);
    return sum(mul(y, y)).item();
  };
  Tensor y = token_standardize(x, gamma, beta);
  backward(sum(mul(y, y)));
  expect_close(x.grad(), finite_diff(fwd, x), 1e-3f, 2e-3f);
  expect_close(gamma.grad(), finite_diff(fwd, gamma), 1e-3f, 2e-3f);
  expect_close(beta.grad(), finite_diff(fwd, beta), 1e-3f, 2e-3f);
}
