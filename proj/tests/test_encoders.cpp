// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "latentformer/config.hpp"
#include "latentformer/error.hpp"
#include "latentformer/latent_intent.hpp"
#include "latentformer/map_encoder.hpp"
#include "latentformer/model.hpp"
#include "latentformer/trajectory_encoder.hpp"

namespace lf = latentformer;
using lf::Tensor;

namespace {

lf::ModelConfig small_config() { return lf::small_profile().model; }

lf::ObservationBatch observations(std::size_t agents, std::uint64_t seed) {
  return lf::ObservationBatch::from_scene(lf::generate_intersection(seed, agents));
}

std::vector<double> rows(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t d = t.size(1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
          t.data().begin() + static_cast<std::ptrdiff_t>(end * d)};
}

}  // namespace

TEST(TrajectoryEncoder, SequenceLengthAndTokenOrder) {
  lf::Model model(small_config(), 1);
  auto one = lf::embed_states(observations(1, 2), model.encoder, model.config());
  EXPECT_EQ(one.size(0), 5u);
  auto three = lf::encode_trajectories(observations(3, 3), model.encoder, model.config());
  EXPECT_EQ(three.phi_s.shape(), (lf::Shape{15, 64}));
  EXPECT_EQ(three.index.time_agent(7), (std::pair<std::size_t, std::size_t>{2, 1}));
  EXPECT_EQ(three.index.token(2, 1), 7u);
}

TEST(TrajectoryEncoder, TooManyAgentsIsCapacityError) {
  lf::Model model(small_config(), 1);
  lf::ObservationBatch obs;
  obs.states.assign(9, lf::Track(5, lf::Vec2{0.0, 0.0}));
  EXPECT_THROW(lf::embed_states(obs, model.encoder, model.config()), lf::CapacityError);
}

TEST(TrajectoryEncoder, PaddedAgentIsInvisible) {
  lf::Model model(small_config(), 4);
  auto obs = observations(2, 5);
  auto base = lf::encode_trajectories(obs, model.encoder, model.config());

  auto padded = obs;
  padded.states.push_back(lf::Track(5, lf::Vec2{7.0, -3.0}));
  padded.valid = {true, true, false};
  auto with_pad = lf::encode_trajectories(padded, model.encoder, model.config());
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t a = 0; a < 2; ++a)
      EXPECT_EQ(rows(with_pad.phi_s, t * 3 + a, t * 3 + a + 1),
                rows(base.phi_s, t * 2 + a, t * 2 + a + 1));
}

TEST(TrajectoryEncoder, AgentsInteract) {
  lf::Model model(small_config(), 6);
  auto obs = observations(3, 7);
  auto base = lf::encode_trajectories(obs, model.encoder, model.config());
  obs.states[2][4].x += 0.5;
  auto moved = lf::encode_trajectories(obs, model.encoder, model.config());
  EXPECT_NE(rows(base.phi_s, 1, 2), rows(moved.phi_s, 1, 2));

  auto cfg = small_config();
  cfg.interaction = false;
  lf::Model isolated(cfg, 6);
  auto obs2 = observations(3, 7);
  auto a = lf::encode_trajectories(obs2, isolated.encoder, cfg);
  obs2.states[2][4].x += 0.5;
  auto b = lf::encode_trajectories(obs2, isolated.encoder, cfg);
  for (std::size_t t = 0; t < 5; ++t)
    EXPECT_EQ(rows(a.phi_s, t * 3 + 1, t * 3 + 2), rows(b.phi_s, t * 3 + 1, t * 3 + 2));
}

TEST(MapEncoder, AugmentedChannels) {
  auto x = lf::augment_channels(lf::intersection_mask({0.0, 0.0}));
  ASSERT_EQ(x.shape(), (lf::Shape{4, 64, 64}));
  EXPECT_EQ(x.at({3, 0, 0}), 1.0);
  EXPECT_EQ(x.at({3, 63, 63}), 1.0);
  EXPECT_LT(x.at({3, 32, 32}), 0.05);
  for (std::size_t c = 0; c < 64; c += 9) EXPECT_EQ(x.at({1, 63, c}), 1.0);
  EXPECT_EQ(x.at({2, 10, 63}), 1.0);
}

TEST(MapEncoder, ConvStackShapeAndLinearity) {
  lf::Model model(small_config(), 8);
  auto p = *model.map_encoder;
  auto y = lf::conv_stack(lf::augment_channels(lf::intersection_mask({0.0, 0.0})), p);
  EXPECT_EQ(y.shape(), (lf::Shape{6, 32, 32}));

  for (auto& layer : p.conv) layer.bias = Tensor::zeros(layer.bias.shape());
  auto zero = lf::conv_stack(Tensor::zeros({4, 64, 64}), p);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(lf::conv_stack(Tensor::zeros({4, 32, 32}), p), lf::DimensionError);
}

TEST(MapEncoder, TokenCountAndConstantPatches) {
  lf::Model model(small_config(), 9);
  const auto& p = *model.map_encoder;
  auto tokens = lf::map_tokens(Tensor::full({6, 32, 32}, 0.7), p, model.config());
  ASSERT_EQ(tokens.size(0), 50u);
  for (std::size_t i = 2; i < 50; ++i) EXPECT_EQ(rows(tokens, i, i + 1), rows(tokens, 1, 2));
  EXPECT_EQ(model.config().map_tokens(), 50u);
}

TEST(MapEncoder, PositionEmbeddingIsLive) {
  lf::Model model(small_config(), 10);
  const auto& p = *model.map_encoder;
  auto fmap = lf::conv_stack(lf::augment_channels(lf::intersection_mask({3.0, -2.0})), p);
  auto tokens = lf::map_tokens(fmap, p, model.config());
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < 50; ++i) parts.push_back(lf::slice_rows(tokens, i, i + 1));
  std::swap(parts[3], parts[20]);
  auto swapped = lf::concat(parts, 0);
  auto a = lf::map_transformer(tokens, p, model.config());
  auto b = lf::map_transformer(swapped, p, model.config());
  EXPECT_NE(rows(a, 3, 4), rows(b, 20, 21));
}

TEST(Intent, TokenCountAndModeValidation) {
  auto cfg = small_config();
  cfg.modes = 12;
  lf::Model model(cfg, 11);
  lf::ModeConfig z{{3, 11}};
  EXPECT_EQ(lf::intention_embed(z, model.intent).size(0), 24u);
  lf::ModeConfig bad{{12}};
  EXPECT_THROW(lf::intention_embed(bad, model.intent), lf::ContractError);
}

TEST(Intent, ZeroedHeadGivesUniformPrior) {
  lf::Model model(small_config(), 12);
  for (auto* t : {&model.intent.prior_head.out.weight, &model.intent.prior_head.out.bias})
    for (auto& v : t->mutable_data()) v = 0.0;
  auto ctx = model.encode(lf::generate_intersection(13, 3));
  auto prior = lf::mode_prior(ctx.context.phi_s, ctx.phi_map, 3, model.intent, model.config());
  for (double p : prior.probs) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(LogMarginal, DegenerateAndIdenticalComponents) {
  std::vector<double> nll1{2.5}, lp1{0.0};
  EXPECT_DOUBLE_EQ(lf::log_marginal(nll1, lp1, 1, 1), -2.5);
  std::vector<double> nll2{1.3, 1.3}, lp2{std::log(0.5), std::log(0.5)};
  EXPECT_NEAR(lf::log_marginal(nll2, lp2, 1, 2), -1.3, 1e-15);
}

TEST(LogMarginal, MatchesSumThenLog) {
  std::vector<double> nll{0.4, 1.7, 2.2}, p{0.2, 0.5, 0.3}, lp;
  for (double v : p) lp.push_back(std::log(v));
  double direct = 0;
  for (std::size_t k = 0; k < 3; ++k) direct += std::exp(-nll[k]) * p[k];
  EXPECT_NEAR(lf::log_marginal(nll, lp, 1, 3), std::log(direct), 1e-12);
}
