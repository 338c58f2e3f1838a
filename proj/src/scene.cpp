// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "latentformer/error.hpp"
#include "latentformer/rng.hpp"

namespace latentformer {

namespace {

constexpr const char* kFormatName = "latentformer.sceneset";
constexpr int kFormatVersion = 1;
constexpr int kMaxPlacementTries = 100;

Vec2 rotate_quarter(const Vec2& p, int quarters) {
  switch (((quarters % 4) + 4) % 4) {
    case 1: return {-p.y, p.x};
    case 2: return {-p.x, -p.y};
    case 3: return {p.y, -p.x};
    default: return p;
  }
}

Vec2 jittered(const Vec2& p, Rng& rng) {
  const double dx = rng.normal(0.0, kPositionJitter);
  const double dy = rng.normal(0.0, kPositionJitter);
  return {p.x + dx, p.y + dy};
}

// Jittered samples that leave the drivable area fall back onto the centerline.
Vec2 reproject(const Vec2& noisy, const Vec2& clean, const DrivableMask& mask) {
  return mask.drivable(noisy) ? noisy : clean;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void order_by_center_distance(std::vector<AgentTrack>& agents) {
  std::stable_sort(agents.begin(), agents.end(), [](const AgentTrack& a, const AgentTrack& b) {
    return std::hypot(a.past.back().x, a.past.back().y) <
           std::hypot(b.past.back().x, b.past.back().y);
  });
}

}  // namespace

double distance(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// ---- DrivableMask -----------------------------------------------------------

Vec2 DrivableMask::pixel_center(std::size_t row, std::size_t col) const {
  return {origin.x + (static_cast<double>(col) + 0.5) * resolution,
          origin.y - (static_cast<double>(row) + 0.5) * resolution};
}

std::optional<std::pair<std::size_t, std::size_t>> DrivableMask::pixel_of(const Vec2& p) const {
  const double c = std::floor((p.x - origin.x) / resolution);
  const double r = std::floor((origin.y - p.y) / resolution);
  if (!(c >= 0.0 && r >= 0.0 && c < static_cast<double>(width) && r < static_cast<double>(height))) {
    return std::nullopt;
  }
  return std::make_pair(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

bool DrivableMask::drivable(const Vec2& p) const {
  const auto px = pixel_of(p);
  return px && at(px->first, px->second);
}

double DrivableMask::drivable_fraction() const {
  const auto n = std::count(cells.begin(), cells.end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(cells.size());
}

void DrivableMask::validate() const {
  if (height != kMapPixels || width != kMapPixels) {
    throw FormatError("mask must be " + std::to_string(kMapPixels) + "x" +
                      std::to_string(kMapPixels));
  }
  if (cells.size() != height * width) throw FormatError("mask cell count mismatch");
  if (std::none_of(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; })) {
    throw FormatError("mask has no drivable pixel");
  }
}

const char* to_string(Route route) {
  switch (route) {
    case Route::kStraight: return "straight";
    case Route::kLeft: return "left";
    case Route::kRight: return "right";
    case Route::kFollow: return "follow";
  }
  return "straight";
}

Route route_from_string(const std::string& name) {
  if (name == "straight") return Route::kStraight;
  if (name == "left") return Route::kLeft;
  if (name == "right") return Route::kRight;
  if (name == "follow") return Route::kFollow;
  throw FormatError("unknown route label '" + name + "'");
}

void Scene::validate(std::size_t tau, std::size_t horizon, std::size_t max_agents) const {
  const auto fail = [&](const std::string& what) {
    throw FormatError("scene '" + id + "': " + what);
  };
  try {
    mask.validate();
  } catch (const FormatError& e) {
    fail(e.what());
  }
  if (agents.empty() || agents.size() > max_agents) {
    fail("agent count " + std::to_string(agents.size()) + " outside [1, " +
         std::to_string(max_agents) + "]");
  }
  const double max_step = kMaxSpeed * kStepSeconds + 1e-9;
  for (const auto& a : agents) {
    if (a.past.size() != tau + 1) fail("agent '" + a.id + "' past length mismatch");
    if (a.future.size() != horizon) fail("agent '" + a.id + "' future length mismatch");
    Track all = a.past;
    all.insert(all.end(), a.future.begin(), a.future.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
      const Vec2& p = all[i];
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) fail("agent '" + a.id + "' non-finite point");
      if (!mask.drivable(p)) {
        fail("agent '" + a.id + "' point " + std::to_string(i) + " (" + fmt17(p.x) + ", " +
             fmt17(p.y) + ") is off the drivable area");
      }
      if (i > 0 && distance(all[i - 1], p) > max_step) {
        fail("agent '" + a.id + "' exceeds " + fmt17(kMaxSpeed) + " m/s at step " + std::to_string(i));
      }
    }
  }
}

const Scene& SceneSet::find(const std::string& id) const {
  for (const auto& s : scenes) {
    if (s.id == id) return s;
  }
  throw FormatError("no scene with id '" + id + "'");
}

// ---- geometry ---------------------------------------------------------------

DrivableMask intersection_mask(const Vec2& crossing) {
  DrivableMask m;
  const double half = kRoadWidth / 2.0;
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      const Vec2 p = m.pixel_center(r, c);
      m.set(r, c, std::abs(p.x - crossing.x) <= half || std::abs(p.y - crossing.y) <= half);
    }
  }
  return m;
}

DrivableMask straight_road_mask(bool horizontal) {
  DrivableMask m;
  const double half = kRoadWidth / 2.0;
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      const Vec2 p = m.pixel_center(r, c);
      m.set(r, c, std::abs(horizontal ? p.y : p.x) <= half);
    }
  }
  return m;
}

Track trace_intersection_route(Arm arm, Route route, const Vec2& crossing, double speed,
                               double lead, std::size_t tau, std::size_t horizon) {
  // Canonical frame: northbound on x = +2, stop line at y = -4.
  const double half = kRoadWidth / 2.0;
  const double right_r = half - kLaneOffset;  // 2 m
  const double left_r = half + kLaneOffset;   // 6 m
  const double right_len = std::numbers::pi / 2.0 * right_r;
  const double left_len = std::numbers::pi / 2.0 * left_r;
  Track out;
  for (std::ptrdiff_t t = -static_cast<std::ptrdiff_t>(tau); t <= static_cast<std::ptrdiff_t>(horizon);
       ++t) {
    const double u = -lead + speed * static_cast<double>(t) * kStepSeconds;
    Vec2 p;
    if (u <= 0.0 || route == Route::kStraight || route == Route::kFollow) {
      p = {kLaneOffset, -half + u};
    } else if (route == Route::kRight) {
      if (u <= right_len) {
        const double th = std::numbers::pi - u / right_r;
        p = {half + right_r * std::cos(th), -half + right_r * std::sin(th)};
      } else {
        p = {half + (u - right_len), -kLaneOffset};
      }
    } else {
      if (u <= left_len) {
        const double th = u / left_r;
        p = {-half + left_r * std::cos(th), -half + left_r * std::sin(th)};
      } else {
        p = {-half - (u - left_len), kLaneOffset};
      }
    }
    const Vec2 r = rotate_quarter(p, static_cast<int>(arm));
    out.push_back({r.x + crossing.x, r.y + crossing.y});
  }
  return out;
}

Arm exit_arm(const Vec2& before_last, const Vec2& last) {
  const double dx = last.x - before_last.x;
  const double dy = last.y - before_last.y;
  if (std::abs(dx) > std::abs(dy)) return dx > 0 ? Arm::kEast : Arm::kWest;
  return dy > 0 ? Arm::kNorth : Arm::kSouth;
}

Scene generate_intersection(std::uint64_t seed, std::size_t n_agents,
                            const IntersectionOptions& options) {
  if (n_agents < 1 || n_agents > options.max_agents) {
    throw GenerationError("generate_intersection: n_agents " + std::to_string(n_agents) +
                          " outside [1, " + std::to_string(options.max_agents) + "]");
  }
  Rng rng(seed);
  Scene scene;
  scene.id = "intersection-" + std::to_string(seed);
  Vec2 crossing{0.0, 0.0};
  if (options.crossing_offset > 0.0) {
    crossing.x = rng.uniform(-options.crossing_offset, options.crossing_offset);
    crossing.y = rng.uniform(-options.crossing_offset, options.crossing_offset);
  }
  scene.mask = intersection_mask(crossing);

  for (std::size_t a = 0; a < n_agents; ++a) {
    const double draw = rng.uniform();
    const Route route = draw < 0.5 ? Route::kStraight : (draw < 0.75 ? Route::kLeft : Route::kRight);
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
      const auto arm = static_cast<Arm>(rng.below(4));
      const double speed = rng.uniform(3.0, 8.0);
      const double lead = rng.uniform(0.0, 1.5 * speed);
      const Track clean = trace_intersection_route(arm, route, crossing, speed, lead, options.tau,
                                                   options.horizon);
      const bool admissible = std::all_of(clean.begin(), clean.end(), [&](const Vec2& p) {
        return scene.mask.drivable(p) && std::abs(p.x) < kMapExtent / 2.0 - 0.5 &&
               std::abs(p.y) < kMapExtent / 2.0 - 0.5;
      });
      if (!admissible) continue;
      const Vec2& now = clean[options.tau];
      const bool separated = std::all_of(scene.agents.begin(), scene.agents.end(),
                                         [&](const AgentTrack& o) {
                                           return distance(o.past.back(), now) >= 3.0;
                                         });
      if (!separated) continue;
      AgentTrack track;
      track.route = route;
      for (std::size_t i = 0; i < clean.size(); ++i) {
        const Vec2 p = reproject(jittered(clean[i], rng), clean[i], scene.mask);
        (i <= options.tau ? track.past : track.future).push_back(p);
      }
      scene.agents.push_back(std::move(track));
      placed = true;
    }
    if (!placed) {
      throw GenerationError("generate_intersection: could not place agent " + std::to_string(a) +
                            " after " + std::to_string(kMaxPlacementTries) + " tries");
    }
  }
  order_by_center_distance(scene.agents);
  for (std::size_t a = 0; a < scene.agents.size(); ++a) scene.agents[a].id = "a" + std::to_string(a);
  scene.validate(options.tau, options.horizon, options.max_agents);
  return scene;
}

Scene generate_follow(std::uint64_t seed, const FollowOptions& options,
                      FollowKinematics* kinematics) {
  Rng rng(seed);
  Scene scene;
  scene.id = "follow-" + std::to_string(seed);
  const auto orientation = static_cast<int>(rng.below(4));  // quarter turns of the heading
  const bool horizontal = orientation % 2 == 0;
  scene.mask = straight_road_mask(horizontal);

  constexpr double kDt = 0.05;
  constexpr double kMinGap = 2.0;
  constexpr double kHardGap = 2.5;
  constexpr double kTimeGap = 1.5;
  const std::size_t substeps = static_cast<std::size_t>(std::lround(kStepSeconds / kDt));
  const std::size_t samples = options.tau + 1 + options.horizon;

  const double v_lead0 = rng.uniform(3.5, 6.0);
  const double v_follow0 = std::max(0.5, v_lead0 + rng.uniform(-0.5, 0.5));
  const double gap0 = std::max(3.0, kMinGap + kTimeGap * v_follow0 + rng.uniform(-1.5, 1.5));
  const bool braking = rng.uniform() < 0.5;
  const double t_start = -static_cast<double>(options.tau) * kStepSeconds;
  const double brake_time = rng.uniform(-1.0, 2.0);
  const double brake_rate = rng.uniform(1.5, 3.0);
  const double brake_floor = v_lead0 * rng.uniform(0.2, 0.5);

  double s_lead = 0.0, s_follow = -gap0, v_lead = v_lead0, v_follow = v_follow0;
  std::vector<double> lead_s, follow_s;
  FollowKinematics kin;
  kin.braking = braking;
  for (std::size_t i = 0; i <= (samples - 1) * substeps; ++i) {
    const double t = t_start + static_cast<double>(i) * kDt;
    if (i % substeps == 0) {
      lead_s.push_back(s_lead);
      follow_s.push_back(s_follow);
      kin.leader_speed.push_back(v_lead);
      kin.follower_speed.push_back(v_follow);
      kin.gap.push_back(s_lead - s_follow);
    }
    if (braking && t >= brake_time && v_lead > brake_floor) {
      v_lead = std::max(brake_floor, v_lead - brake_rate * kDt);
    }
    const double gap = s_lead - s_follow;
    double accel = 0.4 * (gap - (kMinGap + kTimeGap * v_follow)) + 1.2 * (v_lead - v_follow);
    accel = std::clamp(accel, -6.0, 2.5);
    v_follow = std::max(0.0, v_follow + accel * kDt);
    s_lead += v_lead * kDt;
    s_follow += v_follow * kDt;
    if (s_lead - s_follow < kHardGap) {
      s_follow = s_lead - kHardGap;
      v_follow = std::min(v_follow, v_lead);
    }
  }

  const double lo = *std::min_element(follow_s.begin(), follow_s.end());
  const double hi = *std::max_element(lead_s.begin(), lead_s.end());
  if (hi - lo > kMapExtent - 2.0) throw GenerationError("generate_follow: motion exceeds the map");
  const double shift = -(lo + hi) / 2.0;
  const Vec2 dir = rotate_quarter({1.0, 0.0}, orientation);
  const Vec2 right{dir.y, -dir.x};
  const auto place = [&](double s) {
    return Vec2{(s + shift) * dir.x + kLaneOffset * right.x, (s + shift) * dir.y + kLaneOffset * right.y};
  };
  for (const auto* track_s : {&lead_s, &follow_s}) {
    AgentTrack track;
    track.route = Route::kFollow;
    for (std::size_t i = 0; i < samples; ++i) {
      const Vec2 clean = place((*track_s)[i]);
      const Vec2 p = reproject(jittered(clean, rng), clean, scene.mask);
      (i <= options.tau ? track.past : track.future).push_back(p);
    }
    scene.agents.push_back(std::move(track));
  }
  order_by_center_distance(scene.agents);
  for (std::size_t a = 0; a < scene.agents.size(); ++a) scene.agents[a].id = "a" + std::to_string(a);
  scene.validate(options.tau, options.horizon, kDefaultMaxAgents);
  if (kinematics != nullptr) *kinematics = std::move(kin);
  return scene;
}

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "intersection") return SceneKind::kIntersection;
  if (name == "follow") return SceneKind::kFollow;
  if (name == "mixed") return SceneKind::kMixed;
  throw ConfigError("unknown scene kind '" + name + "'");
}

SceneSet generate_scene_set(std::size_t count, std::uint64_t seed, const GenerateOptions& options) {
  if (options.min_agents < 1 || options.max_agents < options.min_agents) {
    throw ConfigError("generate: invalid agent count range");
  }
  SceneSet set;
  set.tau = options.tau;
  set.horizon = options.horizon;
  std::uint64_t sm = seed;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = splitmix64(sm);
    Rng pick(scene_seed ^ 0x5bd1e995ULL);
    bool follow = options.kind == SceneKind::kFollow;
    if (options.kind == SceneKind::kMixed) follow = pick.uniform() < 0.5;
    Scene s;
    if (follow) {
      s = generate_follow(scene_seed, {options.tau, options.horizon});
    } else {
      const std::size_t span = options.max_agents - options.min_agents + 1;
      const std::size_t n = options.min_agents + static_cast<std::size_t>(pick.below(span));
      IntersectionOptions io;
      io.crossing_offset = options.crossing_offset;
      io.tau = options.tau;
      io.horizon = options.horizon;
      s = generate_intersection(scene_seed, n, io);
    }
    char id[32];
    std::snprintf(id, sizeof id, "scene-%05zu", i);
    s.id = id;
    set.scenes.push_back(std::move(s));
  }
  return set;
}

// ---- file format ------------------------------------------------------------

void write_scene_set(std::ostream& out, const SceneSet& set) {
  out << "{\"format\":\"" << kFormatName << "\",\"version\":" << kFormatVersion
      << ",\"tau\":" << set.tau << ",\"horizon\":" << set.horizon
      << ",\"resolution\":" << fmt17(set.resolution) << ",\"height\":" << kMapPixels
      << ",\"width\":" << kMapPixels << "}\n";
  const auto points = [&](const Track& t) {
    std::string s = "[";
    for (std::size_t i = 0; i < t.size(); ++i) {
      s += (i ? ",[" : "[") + fmt17(t[i].x) + "," + fmt17(t[i].y) + "]";
    }
    return s + "]";
  };
  for (const auto& scene : set.scenes) {
    out << "{\"id\":" << nlohmann::json(scene.id).dump() << ",\"origin\":[" << fmt17(scene.mask.origin.x)
        << "," << fmt17(scene.mask.origin.y) << "],\"mask\":[";
    for (std::size_t r = 0; r < scene.mask.height; ++r) {
      out << (r ? ",\"" : "\"");
      for (std::size_t c = 0; c < scene.mask.width; ++c) out << (scene.mask.at(r, c) ? '1' : '0');
      out << '"';
    }
    out << "],\"agents\":[";
    for (std::size_t a = 0; a < scene.agents.size(); ++a) {
      const auto& ag = scene.agents[a];
      out << (a ? "," : "") << "{\"id\":" << nlohmann::json(ag.id).dump() << ",\"route\":\""
          << to_string(ag.route) << "\",\"past\":" << points(ag.past)
          << ",\"future\":" << points(ag.future) << "}";
    }
    out << "]}\n";
  }
}

SceneSet read_scene_set(std::istream& in, std::size_t max_agents) {
  SceneSet set;
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& what) -> void {
    throw FormatError("line " + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) throw FormatError("line 1: missing header record");
  line_no = 1;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
    if (header.value("format", std::string{}) != kFormatName) fail("not a scene set file");
    if (header.at("version").get<int>() != kFormatVersion) {
      fail("unsupported version " + header.at("version").dump());
    }
    set.tau = header.at("tau").get<std::size_t>();
    set.horizon = header.at("horizon").get<std::size_t>();
    set.resolution = header.at("resolution").get<double>();
    if (header.at("height").get<std::size_t>() != kMapPixels ||
        header.at("width").get<std::size_t>() != kMapPixels) {
      fail("mask geometry must be 64x64");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }

  const auto read_track = [&](const nlohmann::json& j) {
    Track t;
    for (const auto& p : j) {
      if (!p.is_array() || p.size() != 2) fail("point must be [x, y]");
      t.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return t;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Scene scene;
    try {
      const auto j = nlohmann::json::parse(line);
      scene.id = j.at("id").get<std::string>();
      scene.mask.resolution = set.resolution;
      scene.mask.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
      const auto& rows = j.at("mask");
      if (rows.size() != kMapPixels) {
        fail("scene '" + scene.id + "': mask has " + std::to_string(rows.size()) + " rows, expected " +
             std::to_string(kMapPixels));
      }
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto row = rows[r].get<std::string>();
        if (row.size() != kMapPixels) {
          fail("scene '" + scene.id + "': mask row " + std::to_string(r) + " has length " +
               std::to_string(row.size()) + ", expected " + std::to_string(kMapPixels));
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
          if (row[c] != '0' && row[c] != '1') {
            fail("scene '" + scene.id + "': mask row " + std::to_string(r) + " has a non-binary cell");
          }
          scene.mask.set(r, c, row[c] == '1');
        }
      }
      for (const auto& ja : j.at("agents")) {
        AgentTrack a;
        a.id = ja.at("id").get<std::string>();
        a.route = route_from_string(ja.at("route").get<std::string>());
        a.past = read_track(ja.at("past"));
        a.future = read_track(ja.at("future"));
        scene.agents.push_back(std::move(a));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed scene record: ") + e.what());
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      fail(msg);
    }
    try {
      scene.validate(set.tau, set.horizon, max_agents);
    } catch (const FormatError& e) {
      fail(e.what());
    }
    set.scenes.push_back(std::move(scene));
  }
  return set;
}

void save_scene_set(const std::string& path, const SceneSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_scene_set(out, set);
  if (!out) throw IoError("failed writing '" + path + "'");
}

SceneSet load_scene_set(const std::string& path, std::size_t max_agents) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_scene_set(in, max_agents);
}

}  // namespace latentformer
