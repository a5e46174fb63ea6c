// Grid A*, frontier extraction and goal choice, replanning cadence, entropy-seeking cost maps.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/common.hpp"
#include "affordance/mapping.hpp"
#include "affordance/navmodel.hpp"

namespace affordance {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Dense row-major cost grid; infinity marks impassable cells.
struct CostGrid {
  int width = 0;
  int height = 0;
  std::vector<double> cost;

  CostGrid() = default;
  CostGrid(int w, int h, double fill) : width(w), height(h), cost(static_cast<std::size_t>(w) * h, fill) {}

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width + c.x; }
  Cell cell(std::size_t i) const { return {static_cast<int>(i % width), static_cast<int>(i / width)}; }
  double at(Cell c) const { return cost[index(c)]; }
  double& at(Cell c) { return cost[index(c)]; }
};

/// Entry-cost convention: total = sum of the costs of every cell entered after the start.
struct PlanPath {
  std::vector<Cell> cells;
  double total_cost = 0.0;
};

inline constexpr std::array<std::pair<int, int>, 4> kNeighbors4{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

inline std::optional<PlanPath> astar(const CostGrid& g, Cell start, Cell goal) {
  if (!g.in_bounds(start) || !g.in_bounds(goal)) throw Error("astar endpoint outside the grid");
  if (!std::isfinite(g.at(start))) throw Error("astar start cell has infinite cost");
  if (!std::isfinite(g.at(goal))) return std::nullopt;

  double min_cost = kInfCost;
  for (double c : g.cost)
    if (std::isfinite(c)) min_cost = std::min(min_cost, c);
  min_cost = std::max(0.0, min_cost);
  auto h = [&](Cell c) { return (std::abs(c.x - goal.x) + std::abs(c.y - goal.y)) * min_cost; };

  const std::size_t n = g.cost.size();
  std::vector<double> dist(n, kInfCost);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  using Entry = std::tuple<double, double, std::size_t>;  // f, h, index: total order
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const auto si = g.index(start), gi = g.index(goal);
  dist[si] = 0.0;
  open.emplace(h(start), h(start), si);
  while (!open.empty()) {
    const auto [f, hh, i] = open.top();
    open.pop();
    if (closed[i]) continue;
    closed[i] = 1;
    if (i == gi) break;
    const Cell c = g.cell(i);
    for (auto [dx, dy] : kNeighbors4) {
      const Cell nb{c.x + dx, c.y + dy};
      if (!g.in_bounds(nb)) continue;
      const auto j = g.index(nb);
      const double step = g.cost[j];
      if (closed[j] || !std::isfinite(step)) continue;
      const double nd = dist[i] + step;
      if (nd < dist[j]) {
        dist[j] = nd;
        parent[j] = static_cast<std::int64_t>(i);
        const double hn = h(nb);
        open.emplace(nd + hn, hn, j);
      }
    }
  }
  if (!closed[gi]) return std::nullopt;
  PlanPath p;
  p.total_cost = dist[gi];
  for (std::int64_t i = static_cast<std::int64_t>(gi); i >= 0; i = parent[static_cast<std::size_t>(i)])
    p.cells.push_back(g.cell(static_cast<std::size_t>(i)));
  std::reverse(p.cells.begin(), p.cells.end());
  return p;
}

/// Cells reachable from `start` through finite-cost cells (4-connected).
inline std::vector<std::uint8_t> reachable_from(const CostGrid& g, Cell start) {
  std::vector<std::uint8_t> seen(g.cost.size(), 0);
  if (!g.in_bounds(start) || !std::isfinite(g.at(start))) return seen;
  std::deque<std::size_t> q{g.index(start)};
  seen[q.front()] = 1;
  while (!q.empty()) {
    const Cell c = g.cell(q.front());
    q.pop_front();
    for (auto [dx, dy] : kNeighbors4) {
      const Cell nb{c.x + dx, c.y + dy};
      if (!g.in_bounds(nb)) continue;
      const auto j = g.index(nb);
      if (seen[j] || !std::isfinite(g.cost[j])) continue;
      seen[j] = 1;
      q.push_back(j);
    }
  }
  return seen;
}

// ---------------------------------------------------------------------------
// Frontiers

struct FrontierGoal {
  Cell cell;  // global-map cell coordinates
  int cluster_size = 0;
  double distance = 0.0;  // gu, straight line from the agent's map position
};

inline bool is_frontier_cell(const GlobalMap& g, int x, int y) {
  const auto& c = g.at(x, y);
  if (!c.known || !std::isfinite(c.cost)) return false;
  for (auto [dx, dy] : kNeighbors4)
    if (!g.known(x + dx, y + dy)) return true;
  return false;
}

inline std::vector<FrontierGoal> find_frontiers(const GlobalMap& g) {
  const int w = g.width(), h = g.height();
  std::vector<std::uint8_t> front(static_cast<std::size_t>(w) * h, 0), seen(front.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) front[static_cast<std::size_t>(y) * w + x] = is_frontier_cell(g, g.min_x() + x, g.min_y() + y);

  const Vec2 agent = g.pose().position();
  std::vector<FrontierGoal> out;
  for (std::size_t s = 0; s < front.size(); ++s) {
    if (!front[s] || seen[s]) continue;
    std::vector<std::size_t> members{s};
    seen[s] = 1;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const int x = static_cast<int>(members[k] % w), y = static_cast<int>(members[k] / w);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const auto j = static_cast<std::size_t>(ny) * w + nx;
          if (front[j] && !seen[j]) {
            seen[j] = 1;
            members.push_back(j);
          }
        }
    }
    double mx = 0, my = 0;
    for (auto m : members) {
      mx += static_cast<double>(m % w);
      my += static_cast<double>(m / w);
    }
    mx /= members.size();
    my /= members.size();
    std::sort(members.begin(), members.end());
    std::size_t best = members[0];
    double best_d = kInfCost;
    for (auto m : members) {
      const double d = std::hypot(static_cast<double>(m % w) - mx, static_cast<double>(m / w) - my);
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    FrontierGoal fg;
    fg.cell = {g.min_x() + static_cast<int>(best % w), g.min_y() + static_cast<int>(best / w)};
    fg.cluster_size = static_cast<int>(members.size());
    fg.distance = distance(g.cell_center(fg.cell.x, fg.cell.y), agent);
    out.push_back(fg);
  }
  std::sort(out.begin(), out.end(), [](const FrontierGoal& a, const FrontierGoal& b) {
    return std::tie(a.distance, a.cell.y, a.cell.x) < std::tie(b.distance, b.cell.y, b.cell.x);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Planning grid over a global map

struct PlanningParams {
  int margin = 4;              // unknown cells added around the map bounds
  int footprint = 1;           // finite cells take the worst finite cost within this Chebyshev radius
  int hard_inflation = 1;      // Chebyshev radius around infinite cells made impassable
  int soft_inflation = 2;      // Chebyshev radius receiving an extra clearance penalty
  double soft_penalty = 10.0;
};

/// Cost grid in global-map coordinates offset by (origin_x, origin_y).
struct PlanningGrid {
  CostGrid grid;
  int origin_x = 0;
  int origin_y = 0;

  Cell to_grid(Cell map_cell) const { return {map_cell.x - origin_x, map_cell.y - origin_y}; }
  Cell to_map(Cell grid_cell) const { return {grid_cell.x + origin_x, grid_cell.y + origin_y}; }
};

/// Planning grid over the known map plus a margin, also spanning every cell in `include`.
/// include[0] is the agent cell; it is always left finite. Unknown cells take the prior cost.
inline PlanningGrid build_planning_grid(const GlobalMap& g, const std::vector<Cell>& include, const CostParams& cp = {},
                                        const PlanningParams& pp = {}) {
  if (include.empty()) throw Error("planning grid needs the agent cell");
  PlanningGrid pg;
  int x0 = g.min_x(), y0 = g.min_y(), x1 = g.min_x() + g.width() - 1, y1 = g.min_y() + g.height() - 1;
  if (g.width() == 0) {
    x0 = x1 = include[0].x;
    y0 = y1 = include[0].y;
  }
  for (const auto& c : include) {
    x0 = std::min(x0, c.x);
    y0 = std::min(y0, c.y);
    x1 = std::max(x1, c.x);
    y1 = std::max(y1, c.y);
  }
  x0 -= pp.margin;
  y0 -= pp.margin;
  x1 += pp.margin;
  y1 += pp.margin;
  const Cell agent_cell = include[0];
  pg.origin_x = x0;
  pg.origin_y = y0;
  CostGrid base(x1 - x0 + 1, y1 - y0 + 1, cp.prior_cost());
  for (int y = 0; y < base.height; ++y)
    for (int x = 0; x < base.width; ++x) {
      const auto& c = g.at(x0 + x, y0 + y);
      if (c.known) base.at({x, y}) = c.cost;
    }
  if (pp.footprint > 0) {
    // The body spans about one cell around its center; charge the worst cell it would touch.
    const CostGrid raw = base;
    for (int y = 0; y < base.height; ++y)
      for (int x = 0; x < base.width; ++x) {
        double& c = base.at({x, y});
        if (!std::isfinite(c)) continue;
        for (int dy = -pp.footprint; dy <= pp.footprint; ++dy)
          for (int dx = -pp.footprint; dx <= pp.footprint; ++dx) {
            const Cell nb{x + dx, y + dy};
            if (raw.in_bounds(nb) && std::isfinite(raw.at(nb))) c = std::max(c, raw.at(nb));
          }
      }
  }
  CostGrid out = base;
  std::vector<std::uint8_t> penalized(base.cost.size(), 0);
  const int r = std::max(pp.hard_inflation, pp.soft_inflation);
  for (int y = 0; y < base.height; ++y)
    for (int x = 0; x < base.width; ++x) {
      if (std::isfinite(base.at({x, y}))) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const Cell nb{x + dx, y + dy};
          if (!out.in_bounds(nb)) continue;
          const int cheb = std::max(std::abs(dx), std::abs(dy));
          if (cheb <= pp.hard_inflation)
            out.at(nb) = kInfCost;
          else if (cheb <= pp.soft_inflation && !penalized[out.index(nb)])
            penalized[out.index(nb)] = 1;
        }
    }
  for (std::size_t i = 0; i < out.cost.size(); ++i)
    if (penalized[i] && std::isfinite(out.cost[i])) out.cost[i] += pp.soft_penalty;
  const Cell s = pg.to_grid(agent_cell);
  if (!std::isfinite(out.at(s))) out.at(s) = std::isfinite(base.at(s)) ? base.at(s) : cp.prior_cost();
  pg.grid = std::move(out);
  return pg;
}

struct GoalChoice {
  FrontierGoal goal;
  PlanPath path;  // grid coordinates of the planning grid
};

/// Nearest frontier (list order) with an A* path from the agent.
inline std::optional<GoalChoice> select_goal(const std::vector<FrontierGoal>& frontiers, const PlanningGrid& pg,
                                             Cell agent_map_cell) {
  if (frontiers.empty()) return std::nullopt;
  const Cell start = pg.to_grid(agent_map_cell);
  if (!pg.grid.in_bounds(start) || !std::isfinite(pg.grid.at(start))) return std::nullopt;
  const auto reach = reachable_from(pg.grid, start);
  for (const auto& f : frontiers) {
    const Cell c = pg.to_grid(f.cell);
    if (!pg.grid.in_bounds(c) || !reach[pg.grid.index(c)]) continue;
    if (auto p = astar(pg.grid, start, c)) return GoalChoice{f, std::move(*p)};
  }
  return std::nullopt;
}

inline bool replan_policy(int step, int cadence, bool trigger) {
  if (cadence < 1) throw Error("replan cadence must be positive");
  return trigger || step % cadence == 0;
}

// ---------------------------------------------------------------------------
// Entropy-seeking local cost map

struct UncertaintyParams {
  double mu = 20.0;
  double semantic_range = 320.0;
};

inline LocalCostMap uncertainty_cost_map(const PredictionMap& pred, const Observation& obs, const EgoGeoMap& geo,
                                         const UncertaintyParams& up = {}) {
  const auto sem = project_values(pred.entropy, pred.width, pred.height, obs, up.semantic_range);
  LocalCostMap out;
  const double ln2 = std::log(2.0);
  for (std::size_t i = 0; i < EgoGrid::cells(); ++i) {
    out.sem_observed[i] = sem.observed(i);
    out.geo_free[i] = geo.cells[i] == GeoCell::Free;
    if (geo.cells[i] == GeoCell::Obstacle) {
      out.geo_obstacle[i] = 1;
      out.cost[i] = kInfCost;
    } else if (sem.observed(i)) {
      out.cost[i] = 1.0 + up.mu * (1.0 - std::clamp(sem.confidence(i) / ln2, 0.0, 1.0));
    } else {
      out.cost[i] = 1.0 + up.mu * 0.5;
    }
  }
  return out;
}

/// Ego cost map as a CostGrid (x index = forward cell, y index = right cell).
inline CostGrid to_cost_grid(const LocalCostMap& m) {
  CostGrid g(EgoGrid::kSize, EgoGrid::kSize, 0.0);
  g.cost = m.cost;
  return g;
}

inline nlohmann::json path_to_json(const PlanPath& p) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : p.cells) cells.push_back({c.x, c.y});
  return {{"cells", cells}, {"total_cost", p.total_cost}};
}

}  // namespace affordance
