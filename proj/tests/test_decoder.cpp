// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "latentformer/config.hpp"
#include "latentformer/decoder.hpp"
#include "latentformer/model.hpp"
#include "latentformer/training.hpp"

namespace lf = latentformer;
using lf::Tensor;

namespace {

lf::ModelConfig small_config() { return lf::small_profile().model; }

std::vector<double> row(const Tensor& t, std::size_t r) {
  const std::size_t d = t.size(1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * d),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d)};
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Masks, TimeCausal) {
  auto m = lf::build_time_causal_mask(1, 3);
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(m(q, k), k <= q);
  auto m2 = lf::build_time_causal_mask(2, 2);
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m2(q, k), k / 2 <= q / 2) << q << "," << k;
}

TEST(Masks, InteractionOffIsBlockDiagonal) {
  auto m = lf::build_decoder_mask(2, 3, true, false);
  for (std::size_t q = 0; q < 6; ++q)
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(m(q, k), k % 2 == q % 2 && k / 2 <= q / 2);
}

TEST(GaussianHead, ZeroOutputsAreUnit) {
  lf::Model model(small_config(), 1);
  auto head = model.decoder.head;
  for (auto* t : {&head.back().weight, &head.back().bias})
    for (auto& v : t->mutable_data()) v = 0.0;
  auto g = lf::gaussian_head(Tensor::full({3, 64}, 0.2), head, Tensor());
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(row(g, r), (std::vector<double>{0, 0, 1, 1, 0}));
}

TEST(TeacherForced, ShapeAndCausality) {
  lf::Model model(small_config(), 2);
  auto scene = lf::generate_intersection(3, 3);
  auto ctx = model.encode(scene);
  auto future = lf::scene_future(scene);
  lf::ModeConfig z{{0, 1, 2}};
  auto base = lf::decode_teacher_forced(model, ctx, z, future);
  ASSERT_EQ(base.shape(), (lf::Shape{18, 5}));
  auto g = lf::GaussianSeq::from_tokens(base, 3, 6);
  EXPECT_EQ(g.agents, 3u);
  EXPECT_EQ(g.steps, 6u);

  // Step t's Gaussian predicts S_{t+1} from inputs up to S_t; future[a][t'] is
  // the input of row t' + 1, so perturbing it must leave rows <= t' unchanged.
  for (std::size_t tp = 0; tp < 5; ++tp) {
    auto moved = future;
    moved[1][tp].x += 1.0;
    auto out = lf::decode_teacher_forced(model, ctx, z, moved);
    for (std::size_t t = 0; t <= tp; ++t)
      for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(row(out, t * 3 + a), row(base, t * 3 + a));
    EXPECT_NE(row(out, (tp + 1) * 3), row(base, (tp + 1) * 3));
  }
}

TEST(TeacherForced, ModeChangesOutput) {
  lf::Model model(small_config(), 4);
  auto scene = lf::generate_intersection(5, 2);
  auto ctx = model.encode(scene);
  auto future = lf::scene_future(scene);
  auto a = lf::decode_teacher_forced(model, ctx, lf::ModeConfig{{0, 0}}, future);
  auto b = lf::decode_teacher_forced(model, ctx, lf::ModeConfig{{3, 0}}, future);
  EXPECT_GT(max_abs_diff(a, b), 0.0);
}

TEST(Autoregressive, SampleIsReproducible) {
  lf::Model model(small_config(), 6);
  auto ctx = model.encode(lf::generate_intersection(7, 2));
  lf::ModeConfig z{{1, 2}};
  auto a = lf::decode_autoregressive(model, ctx, z, lf::Feedback::kSample, 99);
  auto b = lf::decode_autoregressive(model, ctx, z, lf::Feedback::kSample, 99);
  EXPECT_EQ(a.sample.points, b.sample.points);
  auto c = lf::decode_autoregressive(model, ctx, z, lf::Feedback::kSample, 100);
  EXPECT_NE(a.sample.points, c.sample.points);
}

TEST(Autoregressive, SingleStepEqualsTeacherForcing) {
  auto cfg = small_config();
  cfg.horizon = 1;
  lf::Model model(cfg, 8);
  lf::IntersectionOptions opt;
  opt.horizon = 1;
  auto scene = lf::generate_intersection(9, 2, opt);
  auto ctx = model.encode(scene);
  lf::ModeConfig z{{0, 3}};
  auto ar = lf::decode_autoregressive(model, ctx, z, lf::Feedback::kMean, 0);
  auto tf = lf::decode_teacher_forced(model, ctx, z, lf::scene_future(scene));
  EXPECT_EQ(max_abs_diff(ar.gaussians, tf), 0.0);
}

TEST(Autoregressive, SelfConsistentWithTeacherForcing) {
  lf::Model model(small_config(), 10);
  auto ctx = model.encode(lf::generate_intersection(11, 3));
  lf::ModeConfig z{{2, 0, 1}};
  auto ar = lf::decode_autoregressive(model, ctx, z, lf::Feedback::kMean, 0);
  auto tf = lf::decode_teacher_forced(model, ctx, z, ar.sample.points);
  EXPECT_LT(max_abs_diff(ar.gaussians, tf), 1e-9);
}

TEST(Autoregressive, FutureInteraction) {
  lf::Model model(small_config(), 12);
  auto ctx = model.encode(lf::generate_intersection(13, 2));
  lf::ModeConfig z{{0, 1}};
  auto ar = lf::decode_autoregressive(model, ctx, z, lf::Feedback::kMean, 0);
  // inputs[a][0] = S_0, inputs[a][t] = point predicted at step t - 1.
  std::vector<lf::Track> inputs(2);
  for (std::size_t a = 0; a < 2; ++a) {
    inputs[a].push_back(ctx.current[a]);
    for (std::size_t t = 0; t + 1 < 6; ++t) inputs[a].push_back(ar.sample.points[a][t]);
  }
  auto base = lf::decode_from_inputs(model, ctx, z, inputs);
  inputs[1][2].y += 0.5;
  auto moved = lf::decode_from_inputs(model, ctx, z, inputs);
  EXPECT_NE(row(moved, 2 * 2 + 0), row(base, 2 * 2 + 0));
  EXPECT_EQ(row(moved, 1 * 2 + 0), row(base, 1 * 2 + 0));
}

TEST(NonAutoregressive, ShapeAndNoStateInput) {
  auto cfg = small_config();
  cfg.decoding = lf::Decoding::kNonAutoregressive;
  lf::Model model(cfg, 14);
  auto scene = lf::generate_intersection(15, 2);
  auto ctx = model.encode(scene);
  lf::ModeConfig z{{1, 1}};
  auto out = lf::decode_non_autoregressive(model, ctx, z);
  EXPECT_EQ(out.shape(), (lf::Shape{12, 5}));
  auto moved = scene;
  for (auto& p : moved.agents[0].future) p.x += 3.0;
  auto via_likelihood = lf::likelihood_decode(model, ctx, z, lf::scene_future(moved));
  EXPECT_EQ(max_abs_diff(out, via_likelihood), 0.0);
}
