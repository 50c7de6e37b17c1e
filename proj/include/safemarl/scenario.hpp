#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace safemarl {

using Vec2 = Eigen::Vector2d;

struct RectObstacle {
  Vec2 center;
  Vec2 half_extents;
};

struct CircleObstacle {
  Vec2 center;
  double radius = 0.0;
};

using Obstacle = std::variant<RectObstacle, CircleObstacle>;

/// Depth of `point` strictly inside `obstacle`; 0 on or outside the boundary.
double penetration_depth(const Obstacle& obstacle, const Vec2& point);

struct Rect {
  Vec2 lo;
  Vec2 hi;

  bool contains(const Vec2& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y();
  }
};

enum class ScenarioKind { gate, corridor, forest };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::gate;
  std::vector<Obstacle> obstacles;
  // Region sampled for the payload midpoint at reset.
  Rect start_region;
  // Link heading at reset is drawn from start_heading ± start_heading_range.
  double start_heading = 0.0;
  double start_heading_range = 0.5;
  Vec2 goal;
  double arrival_radius = 0.3;
  int episode_cap = 200;

  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
};

/// Geometry knobs for the built-in scenario families.
struct ScenarioParams {
  double gate_width = 1.5;
  double gate_depth = 0.8;
  // Distance from the gate axis to the far end of each wall.
  double gate_wall_span = 4.0;
  int forest_trees = 6;
  double forest_tree_radius = 0.15;
  double forest_clearance = 1.4;
  std::uint64_t layout_seed = 7;
  double arrival_radius = 0.3;
  int episode_cap = 200;
  double start_heading_range = 0.5;
};

ScenarioSpec make_scenario(ScenarioKind kind, const ScenarioParams& params);

// Fixed arena dimensions of the forest layout.
inline constexpr double kForestLength = 7.2;
inline constexpr double kForestWidth = 3.3;

}  // namespace safemarl
