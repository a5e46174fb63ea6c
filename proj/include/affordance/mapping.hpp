// Egocentric geometric and semantic grids, cost fusion, and the allocentric global map.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/common.hpp"
#include "affordance/navmodel.hpp"
#include "affordance/sensor.hpp"

namespace affordance {

inline constexpr double kInfCost = std::numeric_limits<double>::infinity();

struct CostParams {
  double lambda = 20.0;       // semantic cost scale
  double prior = 0.5;         // navigability prior for cells with no semantic evidence
  double ema_alpha = 0.3;
  double obstacle_cap = 41.0; // stand-in value for an infinite cell when blending
  double semantic_range = 320.0;

  double cost_of(double confidence) const { return 1.0 + lambda * (1.0 - confidence); }
  double prior_cost() const { return cost_of(prior); }
};

/// Agent-centred square grid: x forward, y right, cell (kCenter, kCenter) holds the agent.
struct EgoGrid {
  static constexpr int kCenter = 64;
  static constexpr int kSize = 2 * kCenter + 1;
  static constexpr double kExtent = kCenter * kCellSize;  // 512 gu

  static std::size_t index(int ix, int iy) { return static_cast<std::size_t>(iy) * kSize + ix; }
  static bool in_grid(int ix, int iy) { return ix >= 0 && iy >= 0 && ix < kSize && iy < kSize; }
  static int coord_of(double local) { return static_cast<int>(std::floor(local / kCellSize + 0.5)) + kCenter; }
  static std::optional<std::pair<int, int>> cell_of(Vec2 local) {
    const int ix = coord_of(local.x), iy = coord_of(local.y);
    if (!in_grid(ix, iy)) return std::nullopt;
    return std::make_pair(ix, iy);
  }
  static Vec2 center(int ix, int iy) { return {(ix - kCenter) * kCellSize, (iy - kCenter) * kCellSize}; }
  static constexpr std::size_t cells() { return static_cast<std::size_t>(kSize) * kSize; }
};

enum class GeoCell : std::uint8_t { Unknown, Free, Obstacle };

struct EgoGeoMap {
  std::vector<GeoCell> cells = std::vector<GeoCell>(EgoGrid::cells(), GeoCell::Unknown);
  GeoCell at(int ix, int iy) const { return cells[EgoGrid::index(ix, iy)]; }
};

struct EgoSemMap {
  std::vector<double> sum = std::vector<double>(EgoGrid::cells(), 0.0);
  std::vector<std::uint32_t> count = std::vector<std::uint32_t>(EgoGrid::cells(), 0);

  bool observed(std::size_t i) const { return count[i] > 0; }
  /// Mean of the deposited values; only meaningful when observed.
  double confidence(std::size_t i) const { return count[i] ? sum[i] / count[i] : 0.0; }
};

struct LocalCostMap {
  std::vector<double> cost = std::vector<double>(EgoGrid::cells(), 0.0);
  std::vector<std::uint8_t> geo_obstacle = std::vector<std::uint8_t>(EgoGrid::cells(), 0);
  std::vector<std::uint8_t> sem_observed = std::vector<std::uint8_t>(EgoGrid::cells(), 0);
  std::vector<std::uint8_t> geo_free = std::vector<std::uint8_t>(EgoGrid::cells(), 0);

  bool observed(std::size_t i) const { return geo_obstacle[i] || sem_observed[i] || geo_free[i]; }
};

namespace detail {

/// Visits grid cells crossed by the segment from the agent cell centre to `end` (exact grid
/// traversal), calling visit(ix, iy, is_last). Stops at the grid edge.
template <typename Visit>
void traverse_cells(Vec2 end, Visit&& visit) {
  const Vec2 g{end.x / kCellSize + EgoGrid::kCenter + 0.5, end.y / kCellSize + EgoGrid::kCenter + 0.5};
  const Vec2 s{EgoGrid::kCenter + 0.5, EgoGrid::kCenter + 0.5};
  int ix = EgoGrid::kCenter, iy = EgoGrid::kCenter;
  const int ex = static_cast<int>(std::floor(g.x)), ey = static_cast<int>(std::floor(g.y));
  const Vec2 d = g - s;
  const int sx = d.x > 0 ? 1 : -1, sy = d.y > 0 ? 1 : -1;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double dtx = d.x != 0 ? 1.0 / std::abs(d.x) : inf;
  const double dty = d.y != 0 ? 1.0 / std::abs(d.y) : inf;
  double tx = d.x != 0 ? (d.x > 0 ? (ix + 1 - s.x) : (s.x - ix)) * dtx : inf;
  double ty = d.y != 0 ? (d.y > 0 ? (iy + 1 - s.y) : (s.y - iy)) * dty : inf;
  while (true) {
    if (!EgoGrid::in_grid(ix, iy)) return;
    const bool last = ix == ex && iy == ey;
    visit(ix, iy, last);
    if (last) return;
    if (std::min(tx, ty) > 1.0) return;  // numerical guard
    if (tx < ty) {
      ix += sx;
      tx += dtx;
    } else {
      iy += sy;
      ty += dty;
    }
  }
}

}  // namespace detail

/// Range scan from the horizon row: the hit cell of each column is an obstacle, cells strictly
/// before it along the ray are free. Hits beyond the grid leave the whole in-grid ray free.
inline EgoGeoMap scanline_to_geomap(const Observation& obs, const CameraModel& cam = {}) {
  EgoGeoMap m;
  const auto scan = center_scanline(obs);
  const double f = cam.focal();
  std::vector<std::uint8_t> hit(EgoGrid::cells(), 0);
  for (int u = 0; u < obs.width; ++u) {
    const double d = scan[static_cast<std::size_t>(u)];
    if (!(d > 0.0) || !std::isfinite(d)) continue;
    const Vec2 end{d, d * (u - obs.width / 2.0) / f};
    const bool inside = EgoGrid::cell_of(end).has_value();
    detail::traverse_cells(end, [&](int ix, int iy, bool last) {
      const auto i = EgoGrid::index(ix, iy);
      if (last && inside)
        hit[i] = 1;
      else if (m.cells[i] == GeoCell::Unknown)
        m.cells[i] = GeoCell::Free;
    });
  }
  for (std::size_t i = 0; i < hit.size(); ++i)
    if (hit[i]) m.cells[i] = GeoCell::Obstacle;
  m.cells[EgoGrid::index(EgoGrid::kCenter, EgoGrid::kCenter)] = GeoCell::Free;
  return m;
}

/// Deposits each per-pixel value with a valid ground point into its ego cell (cell value = mean).
inline EgoSemMap project_values(const std::vector<float>& values, int width, int height, const Observation& obs,
                                double max_range) {
  if (width != obs.width || height != obs.height || values.size() != obs.size())
    throw Error("prediction size does not match observation");
  EgoSemMap m;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!obs.ground_valid(i)) continue;
    const Vec2 local = to_local(obs.pose_true, obs.ground(i));
    if (local.norm() > max_range) continue;
    const auto c = EgoGrid::cell_of(local);
    if (!c) continue;
    const auto k = EgoGrid::index(c->first, c->second);
    m.sum[k] += values[i];
    ++m.count[k];
  }
  return m;
}

inline EgoSemMap project_affordance(const PredictionMap& pred, const Observation& obs, const CostParams& cp = {}) {
  return project_values(pred.prob, pred.width, pred.height, obs, cp.semantic_range);
}

inline LocalCostMap fuse(const EgoSemMap& sem, const EgoGeoMap& geo, const CostParams& cp = {}) {
  LocalCostMap out;
  for (std::size_t i = 0; i < EgoGrid::cells(); ++i) {
    out.sem_observed[i] = sem.observed(i);
    out.geo_free[i] = geo.cells[i] == GeoCell::Free;
    if (geo.cells[i] == GeoCell::Obstacle) {
      out.geo_obstacle[i] = 1;
      out.cost[i] = kInfCost;
    } else if (sem.observed(i)) {
      out.cost[i] = cp.cost_of(std::clamp(sem.confidence(i), 0.0, 1.0));
    } else {
      out.cost[i] = cp.prior_cost();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Global map

/// World-axis-aligned grid in the odometry frame; cell (0, 0) is centred on the start position.
/// Grows on demand in every direction.
class GlobalMap {
 public:
  struct Cell {
    double cost = 0.0;
    std::uint32_t count = 0;
    bool known = false;
  };

  GlobalMap() : GlobalMap(Pose{}) {}
  explicit GlobalMap(const Pose& anchor) : anchor_(anchor), pose_(anchor) {}

  const Pose& anchor() const { return anchor_; }
  const Pose& pose() const { return pose_; }
  void set_pose(const Pose& p) { pose_ = p; }

  // Cell bounds in map coordinates, inclusive min / exclusive max.
  int min_x() const { return min_x_; }
  int min_y() const { return min_y_; }
  int width() const { return w_; }
  int height() const { return h_; }

  Vec2 cell_center(int cx, int cy) const { return {anchor_.x + cx * kCellSize, anchor_.y + cy * kCellSize}; }
  std::pair<int, int> cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - anchor_.x) / kCellSize + 0.5)),
            static_cast<int>(std::floor((p.y - anchor_.y) / kCellSize + 0.5))};
  }
  bool contains(int cx, int cy) const { return cx >= min_x_ && cy >= min_y_ && cx < min_x_ + w_ && cy < min_y_ + h_; }

  const Cell& at(int cx, int cy) const {
    static const Cell kEmpty{};
    return contains(cx, cy) ? cells_[offset(cx, cy)] : kEmpty;
  }
  Cell& at_mut(int cx, int cy) {
    ensure(cx, cy, cx, cy);
    return cells_[offset(cx, cy)];
  }
  bool known(int cx, int cy) const { return at(cx, cy).known; }
  std::size_t known_count() const { return known_count_; }

  void ensure(int x0, int y0, int x1, int y1) {
    if (w_ > 0 && contains(x0, y0) && contains(x1, y1)) return;
    int nx0 = w_ ? std::min(min_x_, x0) : x0, ny0 = h_ ? std::min(min_y_, y0) : y0;
    int nx1 = w_ ? std::max(min_x_ + w_ - 1, x1) : x1, ny1 = h_ ? std::max(min_y_ + h_ - 1, y1) : y1;
    // Pad so repeated growth stays amortised.
    const int pad = 32;
    if (w_) {
      if (nx0 < min_x_) nx0 -= pad;
      if (ny0 < min_y_) ny0 -= pad;
      if (nx1 > min_x_ + w_ - 1) nx1 += pad;
      if (ny1 > min_y_ + h_ - 1) ny1 += pad;
    }
    const int nw = nx1 - nx0 + 1, nh = ny1 - ny0 + 1;
    std::vector<Cell> next(static_cast<std::size_t>(nw) * nh);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        next[static_cast<std::size_t>(min_y_ + y - ny0) * nw + (min_x_ + x - nx0)] = cells_[static_cast<std::size_t>(y) * w_ + x];
    cells_ = std::move(next);
    min_x_ = nx0;
    min_y_ = ny0;
    w_ = nw;
    h_ = nh;
  }

  void note_known(Cell& c) {
    if (!c.known) ++known_count_;
    c.known = true;
  }

 private:
  std::size_t offset(int cx, int cy) const { return static_cast<std::size_t>(cy - min_y_) * w_ + (cx - min_x_); }

  Pose anchor_;
  Pose pose_;
  int min_x_ = 0, min_y_ = 0, w_ = 0, h_ = 0;
  std::vector<Cell> cells_;
  std::size_t known_count_ = 0;
};

/// One blend step for a single cell.
inline void blend_cell(GlobalMap::Cell& c, double local_cost, const CostParams& cp) {
  if (c.count == 0) {
    c.cost = local_cost;
  } else if (std::isinf(local_cost)) {
    c.cost = kInfCost;
  } else {
    const double prev = std::isinf(c.cost) ? cp.obstacle_cap : c.cost;
    c.cost = (1.0 - cp.ema_alpha) * prev + cp.ema_alpha * local_cost;
  }
  ++c.count;
}

/// Stitches an observed local map into `g`. Every global cell whose centre falls in an observed
/// local cell (nearest-cell lookup through pose_odom) is blended once.
inline void update_global(GlobalMap& g, const LocalCostMap& local, const Pose& pose_odom, const CostParams& cp = {}) {
  if (!std::isfinite(pose_odom.x) || !std::isfinite(pose_odom.y) || !std::isfinite(pose_odom.theta))
    throw Error("non-finite odometry pose");
  g.set_pose(pose_odom);
  int lx0 = EgoGrid::kSize, ly0 = EgoGrid::kSize, lx1 = -1, ly1 = -1;
  for (int iy = 0; iy < EgoGrid::kSize; ++iy)
    for (int ix = 0; ix < EgoGrid::kSize; ++ix)
      if (local.observed(EgoGrid::index(ix, iy))) {
        lx0 = std::min(lx0, ix);
        lx1 = std::max(lx1, ix);
        ly0 = std::min(ly0, iy);
        ly1 = std::max(ly1, iy);
      }
  if (lx1 < 0) return;
  double wx0 = kInfCost, wy0 = kInfCost, wx1 = -kInfCost, wy1 = -kInfCost;
  for (int cx : {lx0, lx1})
    for (int cy : {ly0, ly1}) {
      const Vec2 corner = EgoGrid::center(cx, cy);
      for (double ox : {-0.5, 0.5})
        for (double oy : {-0.5, 0.5}) {
          const Vec2 w = to_world(pose_odom, corner + Vec2{ox * kCellSize, oy * kCellSize});
          wx0 = std::min(wx0, w.x);
          wy0 = std::min(wy0, w.y);
          wx1 = std::max(wx1, w.x);
          wy1 = std::max(wy1, w.y);
        }
    }
  const auto [gx0, gy0] = g.cell_of({wx0, wy0});
  const auto [gx1, gy1] = g.cell_of({wx1, wy1});
  g.ensure(gx0, gy0, gx1, gy1);
  for (int gy = gy0; gy <= gy1; ++gy)
    for (int gx = gx0; gx <= gx1; ++gx) {
      const auto c = EgoGrid::cell_of(to_local(pose_odom, g.cell_center(gx, gy)));
      if (!c) continue;
      const auto i = EgoGrid::index(c->first, c->second);
      if (!local.observed(i)) continue;
      auto& cell = g.at_mut(gx, gy);
      blend_cell(cell, local.cost[i], cp);
      g.note_known(cell);
    }
}

inline double coverage_area(const GlobalMap& g) { return static_cast<double>(g.known_count()) * kCellSize * kCellSize; }

// ---------------------------------------------------------------------------
// Export

inline std::string format_cost(double c) {
  if (std::isinf(c)) return "inf";
  std::ostringstream s;
  s.precision(6);
  s << c;
  return s.str();
}

/// Cost grid as CSV, one row per map row from min_y upward; unknown cells are empty fields.
inline std::string global_map_csv(const GlobalMap& g) {
  std::string out;
  for (int y = g.min_y(); y < g.min_y() + g.height(); ++y) {
    for (int x = g.min_x(); x < g.min_x() + g.width(); ++x) {
      if (x > g.min_x()) out += ',';
      const auto& c = g.at(x, y);
      if (c.known) out += format_cost(c.cost);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json global_map_sidecar(const GlobalMap& g) {
  const Vec2 origin = g.cell_center(g.min_x(), g.min_y());
  return {{"origin", {origin.x, origin.y}},
          {"origin_cell", {g.min_x(), g.min_y()}},
          {"cell_size", kCellSize},
          {"width", g.width()},
          {"height", g.height()},
          {"agent_pose", {g.pose().x, g.pose().y, g.pose().theta}}};
}

}  // namespace affordance
