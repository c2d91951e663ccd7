#include "edgefilter/filters.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace edgefilter;
using testutil::expect_close;
using testutil::make_rng;
using testutil::rand_tensor;

namespace {

FilterSpec spec_of(LpfKind kind, FilterDim dims, int k) {
  FilterSpec s;
  s.kind = kind;
  s.dims = dims;
  s.kernel_size = k;
  s.sigma = 1.0f;
  return s;
}

}  // namespace

TEST(ReflectPad, Definitional1d) {
  std::vector<float> x{1, 2, 3, 4};
  EXPECT_EQ(reflect_pad_1d(x, 1), (std::vector<float>{2, 1, 2, 3, 4, 3}));
  EXPECT_EQ(reflect_pad_1d({5}, 0), std::vector<float>{5});
}

TEST(ReflectPad, WidthTooLargeRejected) {
  EXPECT_THROW(reflect_pad_1d({1, 2, 3}, 3), ShapeError);
}

TEST(ReflectPad, MatchesIndexMirroringOracle2d) {
  std::vector<float> x{1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto padded = reflect_pad_2d(x, 3, 3, 1);
  for (int i = -1; i < 4; ++i)
    for (int j = -1; j < 4; ++j)
      EXPECT_EQ(padded[static_cast<std::size_t>(i + 1) * 5 + (j + 1)],
                x[static_cast<std::size_t>(oracles::mirror(i, 3)) * 3 + oracles::mirror(j, 3)]);
}

TEST(GaussianKernel, DegenerateAndClosedForm) {
  EXPECT_EQ(gaussian_kernel(1, 1.0f), std::vector<float>{1.0f});

  auto w = gaussian_kernel(3, 1.0f);
  const double e = std::exp(-0.5);
  const double z = 1.0 + 2.0 * e;
  EXPECT_NEAR(w[0], e / z, 1e-6);
  EXPECT_NEAR(w[1], 1.0 / z, 1e-6);
  EXPECT_NEAR(w[2], e / z, 1e-6);
}

TEST(GaussianKernel, NormalizedAndSymmetric) {
  for (int k : {1, 3, 5, 7, 11}) {
    for (float sigma : {0.5f, 1.0f, 2.5f}) {
      auto w = gaussian_kernel(k, sigma);
      double s = 0;
      for (float v : w) s += v;
      EXPECT_NEAR(s, 1.0, 1e-7);
      for (int i = 0; i < k / 2; ++i)
        EXPECT_FLOAT_EQ(w[static_cast<std::size_t>(i)],
                        w[static_cast<std::size_t>(k - 1 - i)]);
    }
  }
}

TEST(GaussianKernel, BadArgsRejected) {
  EXPECT_THROW(gaussian_kernel(4, 1.0f), ConfigError);
  EXPECT_THROW(gaussian_kernel(3, 0.0f), ConfigError);
}

TEST(ApplyLpf, ConstantIsFixedPoint) {
  for (auto kind : {LpfKind::mean, LpfKind::median, LpfKind::gaussian}) {
    Tensor h = Tensor::full({2, 3, 4, 5}, 2.5f);
    Tensor y = apply_lpf(h, spec_of(kind, FilterDim::two_d, 3));
    for (float v : y.data()) EXPECT_NEAR(v, 2.5f, 1e-6f);
  }
}

TEST(ApplyLpf, KernelOneIsIdentity) {
  auto rng = make_rng(21);
  Tensor h = rand_tensor({1, 2, 3, 4}, rng);
  for (auto kind : {LpfKind::mean, LpfKind::median, LpfKind::gaussian}) {
    Tensor y = apply_lpf(h, spec_of(kind, FilterDim::two_d, 1));
    EXPECT_EQ(y.data(), h.data());
  }
}

TEST(ApplyLpf, Mean1dHandValues) {
  // padded [2,1,2,3,4,3] -> windows of 3 -> [5/3, 2, 3, 10/3]
  Tensor h({1, 4, 1}, {1, 2, 3, 4});
  Tensor y = apply_lpf(h, spec_of(LpfKind::mean, FilterDim::one_d, 3));
  std::vector<float> want{5.0f / 3.0f, 2.0f, 3.0f, 10.0f / 3.0f};
  expect_close(y.data(), want, 0.0f, 1e-6f);
}

TEST(ApplyLpf, MatchesBruteForceOracle) {
  auto rng = make_rng(22);
  for (auto kind : {LpfKind::mean, LpfKind::median, LpfKind::gaussian}) {
    for (int k : {1, 3, 5, 7, 11}) {
      FilterSpec s2 = spec_of(kind, FilterDim::two_d, k);
      Tensor h2 = rand_tensor({2, 2, 7, 8}, rng);
      if (k < 13) {
        if ((k - 1) / 2 < 7) {
          Tensor y = apply_lpf(h2, s2);
          expect_close(y.data(), oracles::lpf(h2.data(), h2.shape(), s2), 0.0f,
                       1e-6f);
        }
      }
      FilterSpec s1 = spec_of(kind, FilterDim::one_d, k);
      Tensor h1 = rand_tensor({2, 9, 3}, rng);
      if ((k - 1) / 2 < 9) {
        Tensor y = apply_lpf(h1, s1);
        expect_close(y.data(), oracles::lpf(h1.data(), h1.shape(), s1), 0.0f,
                     1e-6f);
      }
    }
  }
}

TEST(ApplyLpf, OutputIsDetached) {
  Tensor h({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tensor y = apply_lpf(h, spec_of(LpfKind::mean, FilterDim::two_d, 3));
  EXPECT_FALSE(y.requires_grad());
}

TEST(ApplyLpf, ErrorsOnBadSpecOrLayout) {
  Tensor h4({1, 1, 4, 4});
  FilterSpec even = spec_of(LpfKind::mean, FilterDim::two_d, 4);
  EXPECT_THROW(apply_lpf(h4, even), ConfigError);
  FilterSpec one_d = spec_of(LpfKind::mean, FilterDim::one_d, 3);
  EXPECT_THROW(apply_lpf(h4, one_d), ShapeError);
  FilterSpec wide = spec_of(LpfKind::mean, FilterDim::two_d, 11);
  EXPECT_THROW(apply_lpf(h4, wide), ShapeError);
}

TEST(EdgeFilter, ConstantInputGivesZeros) {
  for (auto kind : {LpfKind::mean, LpfKind::median, LpfKind::gaussian}) {
    Tensor h = Tensor::full({1, 2, 4, 4}, 3.75f);
    Tensor y = edge_filter(h, spec_of(kind, FilterDim::two_d, 5));
    for (float v : y.data()) EXPECT_NEAR(v, 0.0f, 1e-6f);
  }
}

TEST(EdgeFilter, KernelOneIsZeroMap) {
  auto rng = make_rng(23);
  Tensor h = rand_tensor({1, 3, 5, 5}, rng);
  for (auto kind : {LpfKind::mean, LpfKind::median, LpfKind::gaussian}) {
    Tensor y = edge_filter(h, spec_of(kind, FilterDim::two_d, 1));
    for (float v : y.data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(EdgeFilter, Mean1dHandValues) {
  Tensor h({1, 4, 1}, {1, 2, 3, 4});
  Tensor y = edge_filter(h, spec_of(LpfKind::mean, FilterDim::one_d, 3));
  std::vector<float> want{-2.0f / 3.0f, 0.0f, 0.0f, 2.0f / 3.0f};
  expect_close(y.data(), want, 0.0f, 1e-6f);
}

TEST(EdgeFilter, ReconstructionProperty) {
  auto rng = make_rng(24);
  for (auto kind : {LpfKind::mean, LpfKind::median, LpfKind::gaussian}) {
    FilterSpec s = spec_of(kind, FilterDim::two_d, 5);
    Tensor h = rand_tensor({2, 3, 8, 8}, rng);
    Tensor lo = apply_lpf(h, s);
    Tensor hi = edge_filter(h, s);
    for (std::size_t i = 0; i < h.data().size(); ++i)
      EXPECT_NEAR(hi.data()[i] + lo.data()[i], h.data()[i], 1e-6f);
  }
}

TEST(EdgeFilter, GradientPassThroughIsExact) {
  auto rng = make_rng(25);
  Tensor h = rand_tensor({2, 2, 6, 6}, rng, -1.0f, 1.0f, true);
  Tensor up = rand_tensor({2, 2, 6, 6}, rng);
  Tensor y = edge_filter(h, spec_of(LpfKind::gaussian, FilterDim::two_d, 3));
  backward(sum(mul(y, up)));
  // gradient of sum(y * up) wrt h is exactly up, bit for bit
  EXPECT_EQ(h.grad(), up.data());
}

TEST(EdgeFilter, ChannelLocality) {
  auto rng = make_rng(26);
  Tensor h = rand_tensor({1, 3, 6, 6}, rng);
  FilterSpec s = spec_of(LpfKind::mean, FilterDim::two_d, 3);
  Tensor y0 = edge_filter(h, s);
  Tensor h2({1, 3, 6, 6}, h.data());
  for (int i = 0; i < 36; ++i) h2.data()[36 + i] += 0.5f;  // perturb channel 1
  Tensor y1 = edge_filter(h2, s);
  for (int i = 0; i < 36; ++i) {
    EXPECT_EQ(y0.data()[i], y1.data()[i]);            // channel 0 unchanged
    EXPECT_EQ(y0.data()[72 + i], y1.data()[72 + i]);  // channel 2 unchanged
  }
}

TEST(EdgeFilter1d, SingleTokenSequenceIsZero) {
  Tensor h({2, 1, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y = edge_filter(h, spec_of(LpfKind::mean, FilterDim::one_d, 3));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(EdgeFilter1d, PerChannelMatchesScalarCase) {
  // B=1, N=4, C=2: each channel must equal the 1-D example independently.
  Tensor h({1, 4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  Tensor y = edge_filter(h, spec_of(LpfKind::mean, FilterDim::one_d, 3));
  std::vector<float> c0{-2.0f / 3.0f, 0.0f, 0.0f, 2.0f / 3.0f};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.data()[static_cast<std::size_t>(i) * 2], c0[static_cast<std::size_t>(i)], 1e-6f);
    EXPECT_NEAR(y.data()[static_cast<std::size_t>(i) * 2 + 1],
                10.0f * c0[static_cast<std::size_t>(i)], 1e-5f);
  }
}

TEST(EdgeFilter, MeanLpfSuppressesSpatialMean) {
  auto rng = make_rng(27);
  FilterSpec s = spec_of(LpfKind::mean, FilterDim::two_d, 3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor h = rand_tensor({1, 1, 6, 6}, rng, 0.5f, 1.5f);
    Tensor y = edge_filter(h, s);
    double min = 0, mout = 0;
    for (int i = 0; i < 36; ++i) {
      min += h.data()[static_cast<std::size_t>(i)];
      mout += y.data()[static_cast<std::size_t>(i)];
    }
    EXPECT_LE(std::fabs(mout), std::fabs(min));
  }
}
