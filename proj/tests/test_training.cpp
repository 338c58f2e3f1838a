// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "latentformer/config.hpp"
#include "latentformer/error.hpp"
#include "latentformer/model.hpp"
#include "latentformer/training.hpp"

namespace lf = latentformer;
using lf::Tensor;

namespace {

lf::ModelConfig small_config(std::size_t modes = 4) {
  auto cfg = lf::small_profile().model;
  cfg.modes = modes;
  return cfg;
}

void zero(Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

}  // namespace

TEST(BivariateNll, HandValues) {
  lf::GaussianSeq g{2, 1, {0, 0, 1, 1, 0, 1, 0, 1, 1, 0}};
  auto nll = lf::bivariate_nll(g, {{{0.0, 0.0}}, {{0.0, 0.0}}});
  EXPECT_NEAR(nll[0], std::log(2 * M_PI), 1e-12);
  EXPECT_NEAR(nll[1], std::log(2 * M_PI) + 0.5, 1e-12);
  EXPECT_NEAR(nll[0], 1.837877, 1e-6);
}

TEST(Posterior, BayesArithmetic) {
  std::vector<double> lp{std::log(0.5), std::log(0.5)};
  std::vector<double> nll{-std::log(3.0), -std::log(1.0)};
  auto q = lf::posterior_from_scores(nll, lp, 1, 2);
  EXPECT_NEAR(q(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(q(0, 1), 0.25, 1e-15);

  std::vector<double> prior{0.1, 0.6, 0.3}, lp3, flat(3, 4.2);
  for (double p : prior) lp3.push_back(std::log(p));
  auto q3 = lf::posterior_from_scores(flat, lp3, 1, 3);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(q3(0, k), prior[k], 1e-15);
}

TEST(Posterior, ShiftInvariant) {
  std::vector<double> nll{3.1, 0.2, 7.5, 1.0, 2.0, 2.5}, lp(6, std::log(1.0 / 3.0));
  auto q = lf::posterior_from_scores(nll, lp, 2, 3);
  for (auto& v : nll) v += 812.5;
  auto q2 = lf::posterior_from_scores(nll, lp, 2, 3);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(q.q[i], q2.q[i], 1e-10);
}

TEST(Posterior, FactorizedEqualsExactForOneAgent) {
  lf::Model model(small_config(3), 1);
  auto scene = lf::generate_intersection(2, 1);
  auto ctx = model.encode(scene);
  auto future = lf::scene_future(scene);
  auto fact = lf::posterior_factorized(model, ctx, future);
  auto exact = lf::posterior_exact(model, ctx, future).marginals();
  EXPECT_EQ(fact.q.q, exact.q);
}

TEST(Posterior, ExactGuardsCapacity) {
  lf::Model model(small_config(3), 1);
  auto scene = lf::generate_intersection(3, 3);
  auto ctx = model.encode(scene);
  EXPECT_THROW(lf::posterior_exact(model, ctx, lf::scene_future(scene)), lf::CapacityError);
}

TEST(EmLoss, SingleModeIsPlainNll) {
  lf::Model model(small_config(1), 4);
  auto scene = lf::generate_intersection(5, 2);
  auto ctx = model.encode(scene);
  auto future = lf::scene_future(scene);
  auto est = lf::posterior_factorized(model, ctx, future);
  auto loss = lf::em_loss(model, ctx, future, est.q, est.baseline);
  auto nll = lf::per_agent_nll(lf::decode_teacher_forced(model, ctx, lf::ModeConfig{{0, 0}}, future),
                               future);
  EXPECT_NEAR(loss.item(), nll.data()[0] + nll.data()[1], 1e-9);
}

TEST(EmLoss, HardAssignment) {
  lf::Model model(small_config(3), 6);
  auto scene = lf::generate_intersection(7, 1);
  auto ctx = model.encode(scene);
  auto future = lf::scene_future(scene);
  lf::Posterior q{1, 3, {0.0, 1.0, 0.0}};
  auto loss = lf::em_loss(model, ctx, future, q, lf::ModeConfig{{0}});
  auto nll = lf::per_agent_nll(lf::decode_teacher_forced(model, ctx, lf::ModeConfig{{1}}, future),
                               future);
  EXPECT_NEAR(loss.item(), nll.data()[0] - ctx.log_prior.data()[1], 1e-9);
}

TEST(EmLoss, InitialValueWithZeroedHeads) {
  lf::Model model(small_config(4), 8);
  zero(model.decoder.head.back().weight);
  zero(model.decoder.head.back().bias);
  zero(model.intent.prior_head.out.weight);
  zero(model.intent.prior_head.out.bias);
  auto scene = lf::generate_intersection(9, 2);
  auto ctx = model.encode(scene);
  auto future = lf::scene_future(scene);
  auto est = lf::posterior_factorized(model, ctx, future);
  auto loss = lf::em_loss_from_estep(ctx, est);

  // Unit Gaussians centered on the constant-velocity anchor of each input.
  double expected = 0.0;
  for (std::size_t a = 0; a < 2; ++a) {
    lf::Vec2 prev = scene.agents[a].past[3], cur = scene.agents[a].past[4];
    for (std::size_t t = 0; t < 6; ++t) {
      lf::Vec2 mu{2 * cur.x - prev.x, 2 * cur.y - prev.y};
      double dx = future[a][t].x - mu.x, dy = future[a][t].y - mu.y;
      expected += std::log(2 * M_PI) + 0.5 * (dx * dx + dy * dy);
      prev = cur;
      cur = future[a][t];
    }
    expected += std::log(4.0);
  }
  EXPECT_NEAR(loss.item(), expected, 1e-9);
}

TEST(Optimizer, MomentumTwoSteps) {
  lf::ParamStore store;
  auto theta = store.add("theta", Tensor::from({1}, {1.0}, true));
  lf::SgdMomentum opt(0.9);
  const double lr = 0.1, g = 2.0;
  theta.mutable_grad()[0] = g;
  opt.step(store, lr);
  double v = g, expect = 1.0 - lr * v;
  EXPECT_EQ(theta.item(), expect);
  store.zero_grad();
  theta.mutable_grad()[0] = g;
  opt.step(store, lr);
  v = 0.9 * v + g;
  expect = expect - lr * v;
  EXPECT_EQ(theta.item(), expect);
}

TEST(Optimizer, ClipGradNorm) {
  lf::ParamStore store;
  auto a = store.add("a", Tensor::from({2}, {0, 0}, true));
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  EXPECT_DOUBLE_EQ(lf::clip_grad_norm(store, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
}

TEST(Schedule, TriangularCycle) {
  lf::TrainConfig cfg;
  cfg.lr = 1e-3;
  double lo = 1e9, hi = 0;
  for (std::size_t e = 0; e < 40; ++e) {
    double lr = lf::cyclic_lr(cfg, e);
    lo = std::min(lo, lr);
    hi = std::max(hi, lr);
    EXPECT_EQ(lr, lf::cyclic_lr(cfg, e + cfg.lr_period));
  }
  EXPECT_NEAR(lo, 1e-4, 1e-18);
  EXPECT_NEAR(hi, 1e-3, 1e-18);
  cfg.epochs = 100;
  EXPECT_EQ(cfg.switch_epoch(), 75u);
}

TEST(Training, DeterministicLossCurve) {
  auto data = lf::generate_scene_set(4, 3, {});
  auto cfg = lf::small_profile().train;
  cfg.epochs = 3;
  cfg.tf_to_ar_switch = 2;
  std::vector<double> runs[2];
  for (auto& losses : runs) {
    lf::Model model(small_config(), 5);
    for (const auto& r : lf::train(model, data, cfg).history) losses.push_back(r.loss);
  }
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Training, EmLossDecreasesWithSmallSteps) {
  auto data = lf::generate_scene_set(4, 11, {});
  lf::Model model(small_config(), 12);
  lf::SgdMomentum opt(0.0);
  std::vector<const lf::Scene*> batch;
  for (const auto& s : data.scenes) batch.push_back(&s);
  std::vector<double> losses;
  for (std::size_t step = 0; step < 200; ++step)
    losses.push_back(lf::train_step(model, opt, batch, 1e-4, 5.0, false, lf::Feedback::kMean, step)
                         .loss);
  for (std::size_t i = 0; i + 20 < losses.size(); ++i)
    EXPECT_LT(losses[i + 20], losses[i]) << "window starting at step " << i;
}
