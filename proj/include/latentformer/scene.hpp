// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace latentformer {

inline constexpr std::size_t kDefaultTau = 4;      // five observed states, t = -4..0
inline constexpr std::size_t kDefaultHorizon = 6;  // six predicted states, t = 1..6
inline constexpr double kStepSeconds = 0.5;        // 2 Hz
inline constexpr std::size_t kMapPixels = 64;
inline constexpr double kMapExtent = 50.0;         // meters, centered on the scene origin
inline constexpr double kMapResolution = kMapExtent / static_cast<double>(kMapPixels);
inline constexpr std::size_t kDefaultMaxAgents = 8;
inline constexpr double kMaxSpeed = 15.0;          // m/s
inline constexpr double kRoadWidth = 8.0;
inline constexpr double kLaneOffset = 2.0;
inline constexpr double kPositionJitter = 0.05;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(const Vec2& a, const Vec2& b);

using Track = std::vector<Vec2>;

/// Binary drivable-area raster. Row 0 is the northern edge; x grows with the
/// column index and y shrinks with the row index. `origin` is the scene-frame
/// coordinate of the outer (north-west) corner of pixel (0, 0).
struct DrivableMask {
  std::size_t height = kMapPixels;
  std::size_t width = kMapPixels;
  double resolution = kMapResolution;
  Vec2 origin{-kMapExtent / 2.0, kMapExtent / 2.0};
  std::vector<std::uint8_t> cells = std::vector<std::uint8_t>(kMapPixels * kMapPixels, 0);

  bool at(std::size_t row, std::size_t col) const { return cells[row * width + col] != 0; }
  void set(std::size_t row, std::size_t col, bool v) { cells[row * width + col] = v ? 1 : 0; }
  Vec2 pixel_center(std::size_t row, std::size_t col) const;
  /// Pixel containing a scene-frame point, if inside the raster.
  std::optional<std::pair<std::size_t, std::size_t>> pixel_of(const Vec2& p) const;
  bool drivable(const Vec2& p) const;
  double drivable_fraction() const;
  /// Throws FormatError on geometry mismatch or an empty drivable set.
  void validate() const;
  friend bool operator==(const DrivableMask&, const DrivableMask&) = default;
};

enum class Route { kStraight, kLeft, kRight, kFollow };

const char* to_string(Route route);
Route route_from_string(const std::string& name);

struct AgentTrack {
  std::string id;
  Track past;    // tau + 1 states ending at t = 0
  Track future;  // T states, t = 1..T
  Route route = Route::kStraight;  // generator metadata only
  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

struct Scene {
  std::string id;
  DrivableMask mask;
  std::vector<AgentTrack> agents;

  std::size_t agent_count() const { return agents.size(); }
  /// Agent count bounds, track lengths, admissibility and the speed limit.
  void validate(std::size_t tau, std::size_t horizon, std::size_t max_agents) const;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct SceneSet {
  std::size_t tau = kDefaultTau;
  std::size_t horizon = kDefaultHorizon;
  double resolution = kMapResolution;
  std::vector<Scene> scenes;

  const Scene& find(const std::string& id) const;
};

// ---- generation -------------------------------------------------------------

/// Approach arm, named by the side of the map the agent enters from.
enum class Arm { kSouth = 0, kEast = 1, kNorth = 2, kWest = 3 };

struct IntersectionOptions {
  /// Half-width of the uniform box the road crossing point is drawn from.
  /// Zero puts the crossing at the map center.
  double crossing_offset = 0.0;
  std::size_t tau = kDefaultTau;
  std::size_t horizon = kDefaultHorizon;
  std::size_t max_agents = kDefaultMaxAgents;
};

DrivableMask intersection_mask(const Vec2& crossing);
DrivableMask straight_road_mask(bool horizontal);

/// Noise-free route centerline sampled at 2 Hz for t = -tau..horizon.
/// `lead` is the distance (m) still to travel at t = 0 before the stop line.
Track trace_intersection_route(Arm arm, Route route, const Vec2& crossing, double speed,
                               double lead, std::size_t tau, std::size_t horizon);

/// Arm an agent leaves through, judged from the heading of its last segment.
Arm exit_arm(const Vec2& before_last, const Vec2& last);

Scene generate_intersection(std::uint64_t seed, std::size_t n_agents,
                            const IntersectionOptions& options = {});

struct FollowKinematics {
  std::vector<double> leader_speed;    // per 2 Hz sample
  std::vector<double> follower_speed;
  std::vector<double> gap;             // center-to-center along the lane
  bool braking = false;
};

struct FollowOptions {
  std::size_t tau = kDefaultTau;
  std::size_t horizon = kDefaultHorizon;
};

/// Leader plus a time-gap-controlled follower on a straight road. When
/// `kinematics` is non-null it receives the noise-free speed profiles.
Scene generate_follow(std::uint64_t seed, const FollowOptions& options = {},
                      FollowKinematics* kinematics = nullptr);

enum class SceneKind { kIntersection, kFollow, kMixed };

SceneKind scene_kind_from_string(const std::string& name);

struct GenerateOptions {
  SceneKind kind = SceneKind::kIntersection;
  std::size_t min_agents = 1;
  std::size_t max_agents = 4;
  double crossing_offset = 0.0;
  std::size_t tau = kDefaultTau;
  std::size_t horizon = kDefaultHorizon;
};

SceneSet generate_scene_set(std::size_t count, std::uint64_t seed, const GenerateOptions& options);

// ---- file format ------------------------------------------------------------

void write_scene_set(std::ostream& out, const SceneSet& set);
SceneSet read_scene_set(std::istream& in, std::size_t max_agents = kDefaultMaxAgents);
void save_scene_set(const std::string& path, const SceneSet& set);
SceneSet load_scene_set(const std::string& path, std::size_t max_agents = kDefaultMaxAgents);

}  // namespace latentformer
