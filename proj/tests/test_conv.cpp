#include "edgefilter/conv.hpp"

#include <gtest/gtest.h>

#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace edgefilter;
using testutil::expect_close;
using testutil::finite_diff;
using testutil::make_rng;
using testutil::rand_tensor;



TEST(Conv2d, IdentityKernel) {
  auto rng = make_rng(1);
  Tensor x = rand_tensor({2, 3, 5, 5}, rng);
  Tensor k({3, 3, 1, 1});
  // one-hot 1x1 kernels copying channel c to output channel c
  for (int c = 0; c < 3; ++c) k.data()[static_cast<std::size_t>(c) * 3 + c] = 1.0f;
  Tensor y = conv2d(x, k, 1, PaddingMode::zero(0));
  expect_close(y.data(), x.data(), 0.0f, 1e-6f);
}

TEST(Conv2d, ZeroKernelGivesZeroOutput) {
  auto rng = make_rng(2);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng);
  Tensor k({2, 2, 3, 3});
  Tensor y = conv2d(x, k, 1, PaddingMode::zero(1));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, MatchesNaiveOracleAcrossConfigs) {
  auto rng = make_rng(3);
  for (int k : {1, 3, 5, 7}) {
    for (int stride : {1, 2}) {
      for (auto kind : {PaddingMode::Kind::zero, PaddingMode::Kind::reflect}) {
        const int p = (k - 1) / 2;
        const int h = 9, w = 8;
        if (kind == PaddingMode::Kind::reflect && p >= w) continue;
        PaddingMode pad{kind, p};
        Tensor x = rand_tensor({2, 3, h, w}, rng);
        Tensor kr = rand_tensor({4, 3, k, k}, rng);
        Tensor y = conv2d(x, kr, stride, pad);
        auto want = oracles::conv2d(x.data(), 2, 3, h, w, kr.data(), 4, k, k,
                                stride, pad);
        ASSERT_EQ(y.data().size(), want.size()) << "k=" << k;
        expect_close(y.data(), want, 0.0f, 1e-5f);
      }
    }
  }
}

TEST(Conv2d, EvenKernelRejected) {
  EXPECT_THROW(conv2d(Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 2}), 1,
                      PaddingMode::zero(0)),
               ConfigError);
}

TEST(Conv2d, KernelLargerThanPaddedInputRejected) {
  EXPECT_THROW(conv2d(Tensor({1, 1, 3, 3}), Tensor({1, 1, 5, 5}), 1,
                      PaddingMode::zero(0)),
               ShapeError);
}

TEST(Conv2d, GradMatchesFiniteDifferences) {
  auto rng = make_rng(4);
  for (auto kind : {PaddingMode::Kind::zero, PaddingMode::Kind::reflect}) {
    for (int stride : {1, 2}) {
      PaddingMode pad{kind, 1};
      Tensor x = rand_tensor({2, 2, 5, 4}, rng, -1.0f, 1.0f, true);
      Tensor k = rand_tensor({3, 2, 3, 3}, rng, -0.6f, 0.6f, true);
      // Linear probe loss keeps the forward value small so the float32
      // finite-difference oracle stays accurate at h = 1e-3.
      Tensor up = rand_tensor(
          {2, 3, stride == 1 ? 5 : 3, stride == 1 ? 4 : 2}, rng, -0.5f, 0.5f);
      auto fwd = [&] {
        Tensor y = conv2d(x, k, stride, pad);
        return sum(mul(y, up)).item();
      };
      Tensor y = conv2d(x, k, stride, pad);
      backward(sum(mul(y, up)));
      expect_close(x.grad(), finite_diff(fwd, x), 1e-3f, 2e-3f);
      expect_close(k.grad(), finite_diff(fwd, k), 1e-3f, 2e-3f);
    }
  }
}

TEST(DepthwiseConv, MatchesPerChannelOracle) {
  auto rng = make_rng(5);
  const int b = 2, c = 3, h = 6, w = 5, k = 3;
  Tensor x = rand_tensor({b, c, h, w}, rng);
  Tensor kr = rand_tensor({c, k, k}, rng);
  Tensor bias = rand_tensor({c}, rng);
  Tensor y = conv2d_depthwise(x, kr, bias);
  ASSERT_EQ(y.shape(), Shape({b, c, h, w}));
  // oracle: run the dense reference with a block-diagonal kernel layout
  for (int cc = 0; cc < c; ++cc) {
    std::vector<float> xc(static_cast<std::size_t>(b) * h * w);
    for (int bb = 0; bb < b; ++bb)
      std::copy_n(x.data().begin() + ((static_cast<std::size_t>(bb) * c + cc) * h * w),
                  h * w, xc.begin() + static_cast<std::size_t>(bb) * h * w);
    std::vector<float> kc(kr.data().begin() + static_cast<std::size_t>(cc) * k * k,
                          kr.data().begin() + static_cast<std::size_t>(cc + 1) * k * k);
    auto want = oracles::conv2d(xc, b, 1, h, w, kc, 1, k, k, 1,
                            PaddingMode::reflect(1));
    for (int bb = 0; bb < b; ++bb)
      for (int i = 0; i < h * w; ++i)
        EXPECT_NEAR(y.data()[((static_cast<std::size_t>(bb) * c + cc) * h * w) + i],
                    want[static_cast<std::size_t>(bb) * h * w + i] +
                        bias.data()[static_cast<std::size_t>(cc)],
                    1e-5f);
  }
}

TEST(DepthwiseConv, GradMatchesFiniteDifferences) {
  auto rng = make_rng(6);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng, -1.0f, 1.0f, true);
  Tensor k = rand_tensor({2, 3, 3}, rng, -0.6f, 0.6f, true);
  Tensor bias = rand_tensor({2}, rng, -0.2f, 0.2f, true);
  auto fwd = [&] {
    Tensor y = conv2d_depthwise(x, k, bias);
    return sum(mul(y, y)).item();
  };
  Tensor y = conv2d_depthwise(x, k, bias);
  backward(sum(mul(y, y)));
  expect_close(x.grad(), finite_diff(fwd, x), 1e-3f, 2e-3f);
  expect_close(k.grad(), finite_diff(fwd, k), 1e-3f, 2e-3f);
  expect_close(bias.grad(), finite_diff(fwd, bias), 1e-3f, 2e-3f);
}
