// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "latentformer/checks.hpp"
#include "latentformer/error.hpp"
#include "latentformer/rng.hpp"
#include "latentformer/tensor.hpp"

namespace lf = latentformer;
using lf::Tensor;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  lf::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, IdentityAndProjector) {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(lf::matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
  auto p = Tensor::from({2, 2}, {1, 0, 0, 0});
  auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(values(lf::matmul(p, b)), (std::vector<double>{5, 6, 0, 0}));
}

TEST(Matmul, MatchesTripleLoopExactly) {
  auto a = random_values(12, 1), b = random_values(8, 2);
  auto got = lf::matmul(Tensor::from({3, 4}, a), Tensor::from({4, 2}, b));
  EXPECT_EQ(values(got), lf::oracle::matmul(a, b, 3, 4, 2));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    lf::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const lf::DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("2, 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4, 2"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformAndStable) {
  auto u = lf::softmax(Tensor::from({3}, {0, 0, 0}), -1);
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  auto s = lf::softmax(Tensor::from({2}, {1000, 0}), -1);
  EXPECT_EQ(s.data()[0], 1.0);
  EXPECT_EQ(s.data()[1], 0.0);
  EXPECT_TRUE(std::isfinite(s.data()[0]));
}

TEST(Softmax, MatchesExpNormalizeOracle) {
  auto x = random_values(5, 3);
  auto got = lf::softmax(Tensor::from({5}, x), -1);
  long double total = 0;
  for (double v : x) total += std::exp(static_cast<long double>(v));
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(got.data()[i], static_cast<double>(std::exp(static_cast<long double>(x[i])) / total),
                1e-12);
}

TEST(Softmax, EmptyAxisThrows) {
  EXPECT_THROW(lf::softmax(Tensor::zeros({2, 0}), -1), lf::DimensionError);
}

TEST(LayerNorm, ConstantAndSymmetric) {
  auto g = Tensor::full({4}, 1.0), b = Tensor::zeros({4});
  auto out = lf::layer_norm(Tensor::full({4}, 3.5), g, b, 1e-5);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
  auto g2 = Tensor::full({2}, 1.0), b2 = Tensor::zeros({2});
  auto sym = lf::layer_norm(Tensor::from({2}, {1, -1}), g2, b2, 1e-5);
  EXPECT_NEAR(sym.data()[0], 1.0, 1e-5);
  EXPECT_NEAR(sym.data()[1], -1.0, 1e-5);
}

TEST(LayerNorm, MatchesMeanVarianceOracle) {
  auto x = random_values(7, 4), gv = random_values(7, 5), bv = random_values(7, 6);
  auto out = lf::layer_norm(Tensor::from({7}, x), Tensor::from({7}, gv), Tensor::from({7}, bv), 1e-5);
  double mean = 0, var = 0;
  for (double v : x) mean += v;
  mean /= 7;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= 7;
  for (std::size_t i = 0; i < 7; ++i)
    EXPECT_NEAR(out.data()[i], gv[i] * (x[i] - mean) / std::sqrt(var + 1e-5) + bv[i], 1e-10);
}

TEST(Conv2d, IdentityKernel) {
  auto x = Tensor::from({1, 3, 3}, random_values(9, 7));
  auto k = Tensor::from({1, 1, 1, 1}, {1.0});
  auto y = lf::conv2d(x, k, Tensor(), 1, lf::Padding::kSame);
  EXPECT_EQ(values(y), values(x));
}

TEST(Conv2d, StrideTwoSameHalvesExtent) {
  auto y = lf::conv2d(Tensor::zeros({4, 64, 64}), Tensor::zeros({8, 4, 3, 3}), Tensor(), 2,
                      lf::Padding::kSame);
  EXPECT_EQ(y.shape(), (lf::Shape{8, 32, 32}));
}

TEST(Conv2d, MatchesSlidingWindowOracle) {
  auto x = random_values(25, 8), w = random_values(9, 9);
  for (bool same : {true, false}) {
    for (int stride : {1, 2}) {
      auto got = lf::conv2d(Tensor::from({1, 5, 5}, x), Tensor::from({1, 1, 3, 3}, w), Tensor(),
                            stride, same ? lf::Padding::kSame : lf::Padding::kValid);
      EXPECT_EQ(values(got), lf::oracle::conv2d(x, w, {}, 1, 5, 5, 1, 3, stride, same));
    }
  }
}

TEST(Conv2d, BadStrideThrows) {
  EXPECT_THROW(lf::conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 0,
                          lf::Padding::kSame),
               lf::ParameterError);
}

TEST(Backward, LinearAndQuadratic) {
  auto x = Tensor::from({3}, {0.5, -2.0, 3.0}, true);
  lf::backward(lf::sum(x));
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 1, 1}));

  auto y = Tensor::from({3}, {0.5, -2.0, 3.0}, true);
  lf::backward(lf::scale(lf::sum(lf::mul(y, y)), 0.5));
  EXPECT_EQ(y.grad(), values(y));
}

TEST(Backward, NonScalarLossThrows) {
  auto x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(lf::backward(lf::scale(x, 2.0)), lf::ContractError);
}

TEST(Backward, NoGradGuardSkipsTape) {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    lf::NoGradGuard guard;
    y = lf::sum(x);
  }
  EXPECT_FALSE(y.requires_grad());
}

TEST(Attention, SingleKeyReturnsItsValue) {
  auto q = Tensor::from({2, 3}, random_values(6, 10));
  auto k = Tensor::from({1, 3}, random_values(3, 11));
  auto v = Tensor::from({1, 2}, {4.0, -1.5});
  auto out = lf::attention(q, k, v, 1, nullptr, 1.0);
  EXPECT_EQ(values(out), (std::vector<double>{4.0, -1.5, 4.0, -1.5}));
}

TEST(Attention, FullyMaskedRowThrows) {
  lf::AttentionMask mask(2, 2, true);
  mask.set(1, 0, false);
  mask.set(1, 1, false);
  auto x = Tensor::zeros({2, 2});
  EXPECT_THROW(lf::attention(x, x, x, 1, &mask, 1.0), lf::ContractError);
}

TEST(Attention, MatchesOracle) {
  auto q = random_values(6, 12), k = random_values(12, 13), v = random_values(8, 14);
  lf::AttentionMask mask(2, 4, true);
  mask.set(0, 3, false);
  auto got = lf::attention(Tensor::from({2, 3}, q), Tensor::from({4, 3}, k),
                           Tensor::from({4, 2}, v), 1, &mask, 0.5);
  auto want = lf::oracle::attention(q, k, v, 2, 4, 3, 2, mask.allowed, 0.5);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.data()[i], want[i], 1e-12);
}

TEST(GaussianSquash, ZeroRawIsUnitIsotropic) {
  auto g = lf::gaussian_squash(Tensor::zeros({1, 5}), Tensor());
  EXPECT_EQ(values(g), (std::vector<double>{0, 0, 1, 1, 0}));
}

TEST(GaussianSquash, ClampHasZeroGradient) {
  auto raw = Tensor::from({1, 5}, {0, 0, -20, 0, 0}, true);
  auto g = lf::gaussian_squash(raw, Tensor());
  EXPECT_EQ(g.data()[2], lf::kSigmaMin);
  lf::backward(lf::sum(g));
  EXPECT_EQ(raw.grad()[2], 0.0);
  EXPECT_NE(raw.grad()[3], 0.0);
}

TEST(BivariateNll, StandardNormalAtMean) {
  auto params = Tensor::from({2, 5}, {0, 0, 1, 1, 0, 0, 0, 1, 1, 0});
  std::vector<double> targets{0, 0, 1, 0};
  auto nll = lf::bivariate_nll_rows(params, targets);
  EXPECT_NEAR(nll.data()[0], std::log(2 * M_PI), 1e-12);
  EXPECT_NEAR(nll.data()[1], std::log(2 * M_PI) + 0.5, 1e-12);
}

TEST(FiniteDifference, QuadraticPasses) {
  auto x = Tensor::from({4}, random_values(4, 15), true);
  auto report = lf::finite_difference_check([&] { return lf::sum(lf::mul(x, lf::mul(x, x))); },
                                            {x});
  EXPECT_LT(report.rel_error, lf::kGradCheckTolerance);
  EXPECT_EQ(report.checked, 4u);
}
