// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "latentformer/error.hpp"
#include "latentformer/scene.hpp"

namespace lf = latentformer;

namespace {

// Replaces line `index` (0-based) of a scene file.
std::string replace_line(const std::string& text, std::size_t index, const std::string& line) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string cur;
  for (std::size_t i = 0; std::getline(in, cur); ++i) out << (i == index ? line : cur) << '\n';
  return out.str();
}

std::string nth_line(const std::string& text, std::size_t index) {
  std::istringstream in(text);
  std::string cur;
  for (std::size_t i = 0; i <= index; ++i) std::getline(in, cur);
  return cur;
}

}  // namespace

TEST(IntersectionMask, DrivableFraction) {
  auto mask = lf::intersection_mask({0.0, 0.0});
  const double expected = (2 * 8.0 * 50.0 - 64.0) / 2500.0;
  // One pixel row or column per strip.
  EXPECT_NEAR(mask.drivable_fraction(), expected, 2.0 * 64.0 / 4096.0);
  EXPECT_TRUE(mask.drivable({0.0, 20.0}));
  EXPECT_TRUE(mask.drivable({-20.0, 0.0}));
  EXPECT_FALSE(mask.drivable({15.0, 15.0}));
}

TEST(GenerateIntersection, Deterministic) {
  EXPECT_EQ(lf::generate_intersection(42, 3), lf::generate_intersection(42, 3));
  EXPECT_NE(lf::generate_intersection(42, 3), lf::generate_intersection(43, 3));
}

TEST(GenerateIntersection, RouteFrequencies) {
  // The +-3% band is about two standard errors for the straight share, so the
  // check is pinned to one set seed rather than run over arbitrary seeds.
  lf::GenerateOptions opt;
  opt.max_agents = 1;
  std::map<lf::Route, int> counts;
  for (const auto& scene : lf::generate_scene_set(1000, 1, opt).scenes)
    counts[scene.agents[0].route]++;
  EXPECT_NEAR(counts[lf::Route::kStraight] / 1000.0, 0.5, 0.03);
  EXPECT_NEAR(counts[lf::Route::kLeft] / 1000.0, 0.25, 0.03);
  EXPECT_NEAR(counts[lf::Route::kRight] / 1000.0, 0.25, 0.03);
}

TEST(GenerateIntersection, FuturesAreAdmissible) {
  lf::GenerateOptions opt;
  opt.crossing_offset = 6.0;
  auto set = lf::generate_scene_set(100, 5, opt);
  for (const auto& scene : set.scenes)
    for (const auto& agent : scene.agents) {
      for (const auto& p : agent.past) EXPECT_TRUE(scene.mask.drivable(p)) << scene.id;
      for (const auto& p : agent.future) EXPECT_TRUE(scene.mask.drivable(p)) << scene.id;
    }
}

TEST(GenerateIntersection, PastDoesNotRevealRoute) {
  // Noise-free traces of different routes share the observed segment.
  const lf::Vec2 c{0.0, 0.0};
  auto trace = [&](lf::Route r) {
    return lf::trace_intersection_route(lf::Arm::kSouth, r, c, 6.0, 5.0, 4, 6);
  };
  auto straight = trace(lf::Route::kStraight);
  auto left = trace(lf::Route::kLeft);
  auto right = trace(lf::Route::kRight);
  for (std::size_t t = 0; t <= 4; ++t) {
    EXPECT_EQ(straight[t], left[t]);
    EXPECT_EQ(straight[t], right[t]);
  }
  EXPECT_NE(lf::exit_arm(straight[9], straight[10]), lf::exit_arm(left[9], left[10]));
  EXPECT_NE(lf::exit_arm(left[9], left[10]), lf::exit_arm(right[9], right[10]));
}

TEST(GenerateFollow, GapAndBrakingResponse) {
  int braking_scenes = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    lf::FollowKinematics kin;
    lf::generate_follow(s, {}, &kin);
    for (double g : kin.gap) EXPECT_GE(g, 2.0);
    if (!kin.braking) continue;
    for (std::size_t i = 1; i + 1 < kin.leader_speed.size(); ++i) {
      if (kin.leader_speed[i] < kin.leader_speed[i - 1]) {
        ++braking_scenes;
        EXPECT_LT(kin.follower_speed[i + 1], kin.follower_speed[i]) << "seed " << s;
        break;
      }
    }
  }
  EXPECT_GT(braking_scenes, 20);
}

TEST(GenerateFollow, SpeedProfilesCorrelate) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, n = 0;
  for (std::uint64_t s = 0; s < 300; ++s) {
    lf::FollowKinematics kin;
    lf::generate_follow(s, {}, &kin);
    for (std::size_t i = 0; i < kin.leader_speed.size(); ++i) {
      double x = kin.leader_speed[i], y = kin.follower_speed[i];
      sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y, n += 1;
    }
  }
  double cov = sxy / n - sx / n * sy / n;
  double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_GT(corr, 0.9);
}

TEST(SceneFile, RoundTripIsExact) {
  lf::GenerateOptions opt;
  opt.kind = lf::SceneKind::kMixed;
  auto set = lf::generate_scene_set(100, 9, opt);
  std::stringstream buf;
  lf::write_scene_set(buf, set);
  auto back = lf::read_scene_set(buf);
  ASSERT_EQ(back.scenes.size(), set.scenes.size());
  for (std::size_t i = 0; i < set.scenes.size(); ++i) {
    EXPECT_EQ(back.scenes[i].mask, set.scenes[i].mask);
    ASSERT_EQ(back.scenes[i].agents.size(), set.scenes[i].agents.size());
    for (std::size_t a = 0; a < set.scenes[i].agents.size(); ++a) {
      EXPECT_EQ(back.scenes[i].agents[a].past, set.scenes[i].agents[a].past);
      EXPECT_EQ(back.scenes[i].agents[a].future, set.scenes[i].agents[a].future);
    }
  }
}

TEST(SceneFile, CorruptMaskRowNamesScene) {
  auto set = lf::generate_scene_set(2, 3, {});
  std::stringstream buf;
  lf::write_scene_set(buf, set);
  auto text = buf.str();
  auto j = nlohmann::json::parse(nth_line(text, 2));
  auto row = j["mask"][5].get<std::string>();
  j["mask"][5] = row.substr(1);
  std::istringstream in(replace_line(text, 2, j.dump()));
  try {
    lf::read_scene_set(in);
    FAIL() << "expected FormatError";
  } catch (const lf::FormatError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find(set.scenes[1].id), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  }
}

TEST(SceneFile, RejectsFutureOffRoad) {
  lf::SceneSet set;
  set.scenes.push_back(lf::generate_intersection(4, 1));
  set.scenes[0].agents[0].future.back() = {20.0, 20.0};
  std::stringstream buf;
  lf::write_scene_set(buf, set);
  EXPECT_THROW(lf::read_scene_set(buf), lf::FormatError);
}

TEST(SceneFile, RejectsVersionMismatch) {
  auto set = lf::generate_scene_set(1, 3, {});
  std::stringstream buf;
  lf::write_scene_set(buf, set);
  auto text = buf.str();
  auto header = nlohmann::json::parse(nth_line(text, 0));
  header["version"] = 99;
  std::istringstream in(replace_line(text, 0, header.dump()));
  EXPECT_THROW(lf::read_scene_set(in), lf::FormatError);
}
