// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "latentformer/config.hpp"
#include "latentformer/error.hpp"
#include "latentformer/evaluation.hpp"
#include "latentformer/render.hpp"

namespace lf = latentformer;

namespace {

lf::Track random_track(std::size_t n, std::uint64_t seed) {
  lf::Rng rng(seed);
  lf::Track t(n);
  for (auto& p : t) p = {rng.uniform(-20, 20), rng.uniform(-20, 20)};
  return t;
}

// Minimal structural check: every element is closed in order, attributes are
// quoted, and there is a single root.
bool well_formed_xml(const std::string& doc) {
  std::vector<std::string> stack;
  std::size_t roots = 0, i = 0;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const std::size_t end = doc.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = doc.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    std::size_t quotes = 0;
    for (char ch : tag) quotes += ch == '"';
    if (quotes % 2 != 0) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    if (stack.empty()) ++roots;
    if (tag.back() == '/') continue;
    stack.push_back(tag.substr(0, tag.find_first_of(" \n\t")));
  }
  return stack.empty() && roots == 1;
}

}  // namespace

TEST(Metrics, AdeFde) {
  auto gt = random_track(6, 1);
  EXPECT_EQ(lf::ade(gt, gt), 0.0);
  EXPECT_EQ(lf::fde(gt, gt), 0.0);
  auto shifted = gt;
  for (auto& p : shifted) p.x += 1.0;
  EXPECT_NEAR(lf::ade(shifted, gt), 1.0, 1e-12);
  EXPECT_NEAR(lf::fde(shifted, gt), 1.0, 1e-12);

  auto pred = random_track(6, 2);
  double sum = 0;
  for (std::size_t t = 0; t < 6; ++t) sum += std::hypot(pred[t].x - gt[t].x, pred[t].y - gt[t].y);
  EXPECT_NEAR(lf::ade(pred, gt), sum / 6, 1e-12);
  EXPECT_NEAR(lf::fde(pred, gt), std::hypot(pred[5].x - gt[5].x, pred[5].y - gt[5].y), 1e-12);
  EXPECT_THROW(lf::ade(random_track(5, 3), gt), lf::DimensionError);
}

TEST(Metrics, TranslationInvariant) {
  auto pred = random_track(6, 4), gt = random_track(6, 5);
  auto p2 = pred, g2 = gt;
  for (auto* t : {&p2, &g2})
    for (auto& p : *t) p.x += 0.25, p.y -= 4.0;
  EXPECT_EQ(lf::ade(pred, gt), lf::ade(p2, g2));
  EXPECT_EQ(lf::fde(pred, gt), lf::fde(p2, g2));
}

TEST(Metrics, AggregateAndRf) {
  std::vector<double> two{0.5, 1.5};
  EXPECT_EQ(lf::aggregate(two).min, 0.5);
  EXPECT_EQ(lf::aggregate(two).avg, 1.0);
  std::vector<double> one{0.7};
  EXPECT_EQ(lf::aggregate(one).min, lf::aggregate(one).avg);
  EXPECT_THROW(lf::aggregate(std::span<const double>{}), lf::ContractError);

  EXPECT_EQ(*lf::rf(2.0, 0.5), 4.0);
  EXPECT_EQ(*lf::rf(1.3, 1.3), 1.0);
  EXPECT_FALSE(lf::rf(0.0, 0.0).has_value());
  EXPECT_NEAR(*lf::rf(1.81, 0.72), 2.51, 0.005);
  EXPECT_EQ(std::round(*lf::rf(1.81, 0.72) * 100) / 100, 2.51);
}

TEST(Evaluate, OracleScoresZero) {
  auto data = lf::generate_scene_set(5, 6, {});
  lf::GroundTruthOracle oracle(12, 4, 6);
  auto report = lf::evaluate(oracle, data);
  EXPECT_EQ(report.k, 12u);
  EXPECT_EQ(report.aggregate.min_ade, 0.0);
  EXPECT_EQ(report.aggregate.avg_fde, 0.0);
  EXPECT_FALSE(report.aggregate.rf.has_value());
  EXPECT_EQ(lf::to_json(report)["aggregate"]["RF"], "exact-hit");
}

TEST(Evaluate, InvariantsAndDeterminism) {
  auto data = lf::generate_scene_set(6, 7, {});
  for (std::uint64_t seed : {1u, 2u}) {
    lf::Model model(lf::small_profile().model, seed);
    lf::ModelPredictor predictor(model);
    auto report = lf::evaluate(predictor, data);
    EXPECT_EQ(report.k, 4u);
    EXPECT_EQ(report.provenance, "mode_mean");
    for (const auto& s : report.scenes) {
      EXPECT_LE(s.metrics.min_ade, s.metrics.avg_ade);
      EXPECT_LE(s.metrics.min_fde, s.metrics.avg_fde);
      EXPECT_GE(*s.metrics.rf, 1.0);
    }
    EXPECT_EQ(lf::to_json(report).dump(), lf::to_json(lf::evaluate(predictor, data)).dump());
  }
}

TEST(Evaluate, HorizonMismatchIsConfigError) {
  lf::GenerateOptions opt;
  opt.horizon = 5;
  auto data = lf::generate_scene_set(2, 8, opt);
  lf::Model model(lf::small_profile().model, 1);
  lf::ModelPredictor predictor(model);
  EXPECT_THROW(lf::evaluate(predictor, data), lf::ConfigError);
}

TEST(Predictions, JsonRoundTrip) {
  auto data = lf::generate_scene_set(3, 9, {});
  lf::Model model(lf::small_profile().model, 3);
  lf::ModelPredictor predictor(model);
  auto set = lf::predict_all(predictor, data);
  auto back = lf::predictions_from_json(lf::to_json(set));
  EXPECT_EQ(lf::to_json(back).dump(), lf::to_json(set).dump());
  EXPECT_THROW(set.find("nope"), lf::FormatError);
}

TEST(Render, RampEndpoints) {
  EXPECT_EQ(lf::ramp_color(0, 6), "#0000ff");
  EXPECT_EQ(lf::ramp_color(5, 6), "#ff0000");
  // t / (T - 1) = 0.4 -> red 102, blue 153.
  EXPECT_EQ(lf::ramp_color(2, 6), "#660099");
}

TEST(Render, DeterministicWellFormedSvg) {
  auto scene = lf::generate_intersection(10, 3);
  lf::GroundTruthOracle oracle(2, 4, 6);
  auto preds = oracle.predict(scene, 2, false, 0);
  auto a = lf::render_svg(scene, &preds);
  EXPECT_EQ(a, lf::render_svg(scene, &preds));
  EXPECT_TRUE(well_formed_xml(a));
  EXPECT_TRUE(well_formed_xml(lf::render_svg(scene)));
  for (std::size_t t = 0; t < 6; ++t)
    EXPECT_NE(a.find("stroke=\"" + lf::ramp_color(t, 6) + "\""), std::string::npos) << t;
}
