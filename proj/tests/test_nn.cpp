// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "latentformer/checks.hpp"
#include "latentformer/nn.hpp"
#include "latentformer/param_store.hpp"
#include "latentformer/rng.hpp"

namespace lf = latentformer;
using lf::Tensor;

namespace {

Tensor random_tensor(const lf::Shape& shape, std::uint64_t seed) {
  lf::Rng rng(seed);
  std::vector<double> v(lf::numel_of(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(shape, v);
}

lf::LinearLayer identity_linear(std::size_t d) {
  std::vector<double> w(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
  return {Tensor::from({d, d}, w), Tensor::zeros({d})};
}

lf::BlockConfig small_block(std::size_t heads = 2) {
  lf::BlockConfig cfg;
  cfg.d_model = 8;
  cfg.heads = heads;
  cfg.ffn_mult = 2;
  return cfg;
}

}  // namespace

TEST(Attn, IdenticalKeysAverageValues) {
  auto q = random_tensor({3, 4}, 1);
  auto k = Tensor::from({3, 4}, std::vector<double>(12, 0.3));
  auto v = random_tensor({3, 2}, 2);
  auto out = lf::attn(q, k, v, nullptr, 1.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = (v.at({0, c}) + v.at({1, c}) + v.at({2, c})) / 3.0;
      EXPECT_NEAR(out.at({r, c}), mean, 1e-15);
    }
}

TEST(MultiHead, DegenerateEqualsAttn) {
  auto cfg = small_block(1);
  lf::MultiHeadParams p{identity_linear(8), identity_linear(8), identity_linear(8),
                        identity_linear(8)};
  auto q = random_tensor({3, 8}, 3), k = random_tensor({5, 8}, 4), v = random_tensor({5, 8}, 5);
  auto got = lf::multi_head_attn(q, k, v, nullptr, p, cfg);
  auto want = lf::attn(q, k, v, nullptr, cfg.score_scale());
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-14);
}

TEST(MultiHead, KeyPermutationInvariant) {
  lf::ParamStore store;
  lf::Rng rng(6);
  auto cfg = small_block();
  auto p = lf::make_multi_head(store, "mh", cfg, rng);
  auto q = random_tensor({2, 8}, 7), kv = random_tensor({4, 8}, 8);
  std::vector<double> perm;
  for (std::size_t r : {2, 0, 3, 1})
    for (std::size_t c = 0; c < 8; ++c) perm.push_back(kv.at({r, c}));
  auto kv2 = Tensor::from({4, 8}, perm);
  auto a = lf::multi_head_attn(q, kv, kv, nullptr, p, cfg);
  auto b = lf::multi_head_attn(q, kv2, kv2, nullptr, p, cfg);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-13);
}

TEST(MultiHead, MatchesHeadByHeadOracle) {
  lf::ParamStore store;
  lf::Rng rng(9);
  auto cfg = small_block(2);
  auto p = lf::make_multi_head(store, "mh", cfg, rng);
  auto x = random_tensor({3, 8}, 10), c = random_tensor({4, 8}, 11);
  auto got = lf::multi_head_attn(x, c, c, nullptr, p, cfg);

  auto qp = p.q(x), kp = p.k(c), vp = p.v(c);
  const std::size_t dh = cfg.d_head();
  std::vector<double> heads(3 * 8);
  for (std::size_t h = 0; h < 2; ++h) {
    std::vector<double> qh, kh, vh;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < dh; ++j) qh.push_back(qp.at({r, h * dh + j}));
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < dh; ++j) {
        kh.push_back(kp.at({r, h * dh + j}));
        vh.push_back(vp.at({r, h * dh + j}));
      }
    auto out = lf::oracle::attention(qh, kh, vh, 3, 4, dh, dh, {}, cfg.score_scale());
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < dh; ++j) heads[r * 8 + h * dh + j] = out[r * dh + j];
  }
  auto want = p.o(Tensor::from({3, 8}, heads));
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
}

TEST(TEBlock, PreservesShapeAndStacksIndependently) {
  lf::ParamStore store;
  lf::Rng rng(12);
  auto cfg = small_block();
  auto b1 = lf::make_te_block(store, "b1", cfg, rng);
  auto b2 = lf::make_te_block(store, "b2", cfg, rng);
  for (std::size_t n : {1u, 5u}) {
    auto x = random_tensor({n, 8}, 13);
    auto y = lf::te_block(lf::te_block(x, b1, cfg), b2, cfg);
    EXPECT_EQ(y.shape(), x.shape());
  }
  EXPECT_EQ(store.count(), 2 * lf::te_block_param_count(cfg));
}

TEST(TDLd, ShapeAndLiteralPathsDiffer) {
  lf::ParamStore store;
  lf::Rng rng(14);
  auto cfg = small_block();
  auto p = lf::make_tdl_d(store, "d", cfg, true, rng);
  EXPECT_EQ(store.count(), lf::tdl_d_param_count(cfg, true));
  auto x = random_tensor({3, 8}, 15), s = random_tensor({6, 8}, 16), m = random_tensor({2, 8}, 17);
  auto lit = lf::tdl_d(x, s, m, p, cfg);
  EXPECT_EQ(lit.shape(), (lf::Shape{3, 8}));
  auto cfg2 = cfg;
  cfg2.literal_eqs = false;
  auto res = lf::tdl_d(x, s, m, p, cfg2);
  double diff = 0;
  for (std::size_t i = 0; i < lit.numel(); ++i) diff += std::abs(lit.data()[i] - res.data()[i]);
  EXPECT_GT(diff, 1e-3);
}

TEST(TDLc, HasNoLayerNormParameters) {
  lf::ParamStore store;
  lf::Rng rng(18);
  auto cfg = small_block();
  auto p = lf::make_tdl_c(store, "c", cfg, true, rng);
  EXPECT_EQ(store.count(), lf::tdl_c_param_count(cfg, true));
  for (const auto& [name, t] : store.entries())
    EXPECT_EQ(name.find(".gain"), std::string::npos) << name;
  auto x = random_tensor({4, 8}, 19), ctx = random_tensor({5, 8}, 20), m = random_tensor({2, 8}, 21);
  EXPECT_EQ(lf::tdl_c(x, ctx, m, p, cfg).shape(), (lf::Shape{4, 8}));
}

TEST(BlockConfig, RejectsIndivisibleHeads) {
  lf::BlockConfig cfg;
  cfg.d_model = 10;
  cfg.heads = 4;
  EXPECT_ANY_THROW(cfg.validate());
}

TEST(GradientChecks, EveryBlockPassesOneSeed) {
  for (const auto& block : lf::gradient_check_blocks()) {
    auto r = lf::gradient_check_block(block, 11);
    EXPECT_TRUE(r.passed) << block << " err=" << r.measure << " " << r.detail;
  }
}
