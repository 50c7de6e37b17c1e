#include "safemarl/scenario.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace safemarl {

double penetration_depth(const Obstacle& obstacle, const Vec2& point) {
  if (const auto* rect = std::get_if<RectObstacle>(&obstacle)) {
    const double dx = rect->half_extents.x() - std::abs(point.x() - rect->center.x());
    const double dy = rect->half_extents.y() - std::abs(point.y() - rect->center.y());
    if (dx > 0.0 && dy > 0.0) return std::min(dx, dy);
    return 0.0;
  }
  const auto& circle = std::get<CircleObstacle>(obstacle);
  const double depth = circle.radius - (point - circle.center).norm();
  return depth > 0.0 ? depth : 0.0;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::gate: return "gate";
    case ScenarioKind::corridor: return "corridor";
    case ScenarioKind::forest: return "forest";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "gate") return ScenarioKind::gate;
  if (name == "corridor") return ScenarioKind::corridor;
  if (name == "forest") return ScenarioKind::forest;
  throw std::invalid_argument("unknown scenario kind '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (!(arrival_radius > 0.0)) throw std::invalid_argument("scenario: arrival_radius must be > 0");
  if (episode_cap < 1) throw std::invalid_argument("scenario: episode_cap must be >= 1");
  if (!(start_heading_range >= 0.0)) throw std::invalid_argument("scenario: start_heading_range must be >= 0");
  if (start_region.lo.x() > start_region.hi.x() || start_region.lo.y() > start_region.hi.y()) {
    throw std::invalid_argument("scenario: empty start region");
  }
  for (const auto& obstacle : obstacles) {
    if (const auto* rect = std::get_if<RectObstacle>(&obstacle)) {
      if (!(rect->half_extents.x() > 0.0 && rect->half_extents.y() > 0.0)) {
        throw std::invalid_argument("scenario: rectangle with non-positive half extent");
      }
    } else if (!(std::get<CircleObstacle>(obstacle).radius > 0.0)) {
      throw std::invalid_argument("scenario: circle with non-positive radius");
    }
    if (penetration_depth(obstacle, goal) > 0.0) {
      throw std::invalid_argument("scenario: goal point lies inside an obstacle");
    }
  }
}

namespace {

RectObstacle box(double x0, double y0, double x1, double y1) {
  return RectObstacle{Vec2{0.5 * (x0 + x1), 0.5 * (y0 + y1)}, Vec2{0.5 * (x1 - x0), 0.5 * (y1 - y0)}};
}

ScenarioSpec make_gate(const ScenarioParams& p) {
  if (!(p.gate_width > 0.0)) throw std::invalid_argument("gate: width must be > 0");
  if (!(p.gate_depth > 0.0)) throw std::invalid_argument("gate: depth must be > 0");
  if (!(p.gate_wall_span > 0.5 * p.gate_width)) throw std::invalid_argument("gate: wall span must exceed half the width");
  ScenarioSpec s;
  s.kind = ScenarioKind::gate;
  const double hx = 0.5 * p.gate_depth;
  const double opening = 0.5 * p.gate_width;
  // Wall along the y axis, centred on x = 0, with an opening around y = 0.
  s.obstacles.push_back(box(-hx, opening, hx, p.gate_wall_span));
  s.obstacles.push_back(box(-hx, -p.gate_wall_span, hx, -opening));
  s.start_region = Rect{Vec2{-3.0, -1.0}, Vec2{-2.0, 1.0}};
  s.start_heading = 0.0;
  s.start_heading_range = p.start_heading_range;
  s.goal = Vec2{2.5, 0.0};
  s.arrival_radius = p.arrival_radius;
  s.episode_cap = p.episode_cap;
  return s;
}

// Two 2.7 m x 1.3 m corridors joined by a left-hand corner.
ScenarioSpec make_corridor(const ScenarioParams& p) {
  constexpr double length = 2.7;
  constexpr double width = 1.3;
  constexpr double wall = 0.2;
  ScenarioSpec s;
  s.kind = ScenarioKind::corridor;
  const double half = 0.5 * width;
  const double x_end = length;
  const double x_inner = x_end - width;
  const double y_top = half + length;
  s.obstacles.push_back(box(0.0, -half - wall, x_end + wall, -half));
  s.obstacles.push_back(box(x_end, -half - wall, x_end + wall, y_top));
  s.obstacles.push_back(box(0.0, half, x_inner, half + wall));
  s.obstacles.push_back(box(x_inner - wall, half + wall, x_inner, y_top));
  s.start_region = Rect{Vec2{-2.0, -0.2}, Vec2{-1.5, 0.2}};
  s.start_heading = 0.0;
  s.start_heading_range = std::min(p.start_heading_range, 0.3);
  s.goal = Vec2{0.5 * (x_inner + x_end), y_top - 0.4};
  s.arrival_radius = p.arrival_radius;
  s.episode_cap = p.episode_cap;
  return s;
}

ScenarioSpec make_forest(const ScenarioParams& p) {
  if (p.forest_trees < 0) throw std::invalid_argument("forest: tree count must be >= 0");
  if (!(p.forest_tree_radius > 0.0)) throw std::invalid_argument("forest: tree radius must be > 0");
  if (!(p.forest_clearance >= 0.0)) throw std::invalid_argument("forest: clearance must be >= 0");
  constexpr double wall = 0.3;
  const double half_w = 0.5 * kForestWidth;
  ScenarioSpec s;
  s.kind = ScenarioKind::forest;
  s.obstacles.push_back(box(-wall, -half_w - wall, kForestLength + wall, -half_w));
  s.obstacles.push_back(box(-wall, half_w, kForestLength + wall, half_w + wall));
  s.obstacles.push_back(box(-wall, -half_w, 0.0, half_w));
  s.obstacles.push_back(box(kForestLength, -half_w, kForestLength + wall, half_w));

  const double r = p.forest_tree_radius;
  const double min_center_gap = 2.0 * r + p.forest_clearance;
  std::mt19937_64 rng(p.layout_seed);
  std::uniform_real_distribution<double> ux(1.9, 6.1);
  std::uniform_real_distribution<double> uy(-half_w + r, half_w - r);
  std::vector<Vec2> trees;
  constexpr int kLayoutRestarts = 2000;
  constexpr int kPlacementTries = 200;
  bool placed_all = false;
  for (int restart = 0; restart < kLayoutRestarts && !placed_all; ++restart) {
    trees.clear();
    for (int t = 0; t < kPlacementTries && static_cast<int>(trees.size()) < p.forest_trees; ++t) {
      const Vec2 c{ux(rng), uy(rng)};
      bool ok = true;
      for (const auto& other : trees) {
        if ((c - other).norm() < min_center_gap) {
          ok = false;
          break;
        }
      }
      if (ok) trees.push_back(c);
    }
    placed_all = static_cast<int>(trees.size()) == p.forest_trees;
  }
  if (!placed_all) throw std::invalid_argument("forest: could not place trees with the requested clearance");
  for (const auto& c : trees) s.obstacles.push_back(CircleObstacle{c, r});

  s.start_region = Rect{Vec2{0.95, -0.4}, Vec2{1.15, 0.4}};
  s.start_heading = 0.0;
  s.start_heading_range = std::min(p.start_heading_range, 0.3);
  s.goal = Vec2{6.7, 0.0};
  s.arrival_radius = p.arrival_radius;
  s.episode_cap = p.episode_cap;
  return s;
}

}  // namespace

ScenarioSpec make_scenario(ScenarioKind kind, const ScenarioParams& params) {
  if (!(params.arrival_radius > 0.0)) throw std::invalid_argument("scenario: arrival_radius must be > 0");
  if (params.episode_cap < 1) throw std::invalid_argument("scenario: episode_cap must be >= 1");
  ScenarioSpec spec;
  switch (kind) {
    case ScenarioKind::gate: spec = make_gate(params); break;
    case ScenarioKind::corridor: spec = make_corridor(params); break;
    case ScenarioKind::forest: spec = make_forest(params); break;
  }
  spec.validate();
  return spec;
}

}  // namespace safemarl
