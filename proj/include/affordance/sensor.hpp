// First-person column raycaster with floor casting, pinhole ground projection and odometry.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "affordance/common.hpp"
#include "affordance/world.hpp"

namespace affordance {

struct CameraModel {
  int width = 160;
  int height = 120;
  double fov = deg_to_rad(60.0);
  double height_gu = 32.0;  // camera height above the floor

  double focal() const { return (width / 2.0) / std::tan(fov / 2.0); }
  double horizon() const { return height / 2.0; }
  double center_u() const { return width / 2.0; }
  /// Column ray direction; its forward component is 1, so ray parameter == planar depth.
  Vec2 column_dir(const Pose& pose, int u) const {
    return pose.forward() + pose.right() * ((u - center_u()) / focal());
  }
};

/// One rendered frame. Arrays are row-major, index v * width + u.
struct Observation {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> texture;
  std::vector<float> depth;
  std::vector<float> ground_x;  // NaN where the pixel shows no ground-plane point
  std::vector<float> ground_y;
  Pose pose_true;
  Pose pose_odom;
  std::uint32_t step_index = 0;

  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
  std::size_t size() const { return static_cast<std::size_t>(width) * height; }
  bool ground_valid(std::size_t i) const { return !std::isnan(ground_x[i]); }
  Vec2 ground(std::size_t i) const { return {ground_x[i], ground_y[i]}; }

  bool operator==(const Observation& o) const {
    auto bits_equal = [](const std::vector<float>& a, const std::vector<float>& b) {
      return a.size() == b.size() &&
             std::equal(a.begin(), a.end(), b.begin(), [](float x, float y) {
               return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
             });
    };
    return width == o.width && height == o.height && texture == o.texture && bits_equal(depth, o.depth) &&
           bits_equal(ground_x, o.ground_x) && bits_equal(ground_y, o.ground_y) && pose_true == o.pose_true &&
           pose_odom == o.pose_odom && step_index == o.step_index;
  }
};

namespace detail {

struct WallHit {
  double depth;
  TileCoord tile;
};

/// DDA through the tile grid; returns the first Wall tile along pos + t * dir.
inline WallHit dda_wall(const WorldMap& w, Vec2 pos, Vec2 dir) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int mx = static_cast<int>(std::floor(pos.x / kTileSize));
  int my = static_cast<int>(std::floor(pos.y / kTileSize));
  if (w.at(mx, my) == TileKind::Wall) return {1e-3, {mx, my}};
  const double delta_x = dir.x == 0.0 ? kInf : kTileSize / std::abs(dir.x);
  const double delta_y = dir.y == 0.0 ? kInf : kTileSize / std::abs(dir.y);
  const int step_x = dir.x < 0 ? -1 : 1;
  const int step_y = dir.y < 0 ? -1 : 1;
  double side_x = dir.x == 0.0 ? kInf
                               : (dir.x < 0 ? pos.x - mx * kTileSize : (mx + 1) * kTileSize - pos.x) / std::abs(dir.x);
  double side_y = dir.y == 0.0 ? kInf
                               : (dir.y < 0 ? pos.y - my * kTileSize : (my + 1) * kTileSize - pos.y) / std::abs(dir.y);
  for (int guard = 0; guard < 4 * (w.width + w.height) + 8; ++guard) {
    double t;
    if (side_x < side_y) {
      t = side_x;
      side_x += delta_x;
      mx += step_x;
    } else {
      t = side_y;
      side_y += delta_y;
      my += step_y;
    }
    if (w.at(mx, my) == TileKind::Wall) return {std::max(t, 1e-3), {mx, my}};
  }
  return {kInf, {mx, my}};
}

}  // namespace detail

inline Observation render(const WorldMap& world, const Pose& pose, const CameraModel& cam = {}) {
  const int W = cam.width, H = cam.height;
  const double f = cam.focal(), v0 = cam.horizon(), h = cam.height_gu;
  constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
  Observation o;
  o.width = W;
  o.height = H;
  o.texture.assign(o.size(), textures::kCeiling);
  o.depth.assign(o.size(), 0.0f);
  o.ground_x.assign(o.size(), kNaN);
  o.ground_y.assign(o.size(), kNaN);
  o.pose_true = pose;
  o.pose_odom = pose;

  const Vec2 p = pose.position();
  for (int u = 0; u < W; ++u) {
    const Vec2 dir = cam.column_dir(pose, u);
    const auto hit = detail::dda_wall(world, p, dir);
    const double t = hit.depth;
    const double wall_top = v0 - f * (kWallHeight - h) / t;
    const double wall_bottom = v0 + f * h / t;
    const auto wall_tex = world.texture_at(hit.tile.x, hit.tile.y);
    for (int v = 0; v < H; ++v) {
      const std::size_t i = o.index(u, v);
      if (v < wall_top) {
        o.texture[i] = textures::kCeiling;
        o.depth[i] = static_cast<float>(f * (kWallHeight - h) / (v0 - v));
      } else if (v <= wall_bottom) {
        o.texture[i] = wall_tex;
        o.depth[i] = static_cast<float>(t);
      } else {
        const double d = f * h / (v - v0);
        const Vec2 g = p + dir * d;
        const auto tc = WorldMap::tile_of(g);
        o.depth[i] = static_cast<float>(d);
        o.texture[i] = world.texture_at(tc.x, tc.y);
        // Floor, hazard and low-obstacle tops all lie on the ground plane.
        if (world.at(tc.x, tc.y) != TileKind::Wall) {
          o.ground_x[i] = static_cast<float>(g.x);
          o.ground_y[i] = static_cast<float>(g.y);
        }
      }
    }
  }

  // Actor billboards, far to near, each depth-tested against what is already drawn.
  std::vector<std::pair<double, const DynamicActor*>> order;
  for (const auto& a : world.actors) {
    const Vec2 rel = to_local(pose, a.position);
    if (rel.x > 1.0) order.push_back({rel.x, &a});
  }
  std::sort(order.begin(), order.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  for (const auto& [z, a] : order) {
    const Vec2 rel = to_local(pose, a->position);
    const double uc = cam.center_u() + f * rel.y / z;
    const double hw = f * a->radius / z;
    const int u0 = std::max(0, static_cast<int>(std::ceil(uc - hw)));
    const int u1 = std::min(W - 1, static_cast<int>(std::floor(uc + hw)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(v0 - f * (kActorHeight - h) / z)));
    const int r1 = std::min(H - 1, static_cast<int>(std::floor(v0 + f * h / z)));
    for (int u = u0; u <= u1; ++u) {
      // Every sprite pixel of a column reports the actor's base point on that column's ray.
      const Vec2 base = p + cam.column_dir(pose, u) * z;
      for (int v = r0; v <= r1; ++v) {
        const std::size_t i = o.index(u, v);
        if (z < o.depth[i]) {
          o.depth[i] = static_cast<float>(z);
          o.texture[i] = a->texture;
          o.ground_x[i] = static_cast<float>(base.x);
          o.ground_y[i] = static_cast<float>(base.y);
        }
      }
    }
  }
  return o;
}

inline std::vector<double> center_scanline(const Observation& obs) {
  std::vector<double> row(static_cast<std::size_t>(obs.width));
  const int v0 = obs.height / 2;
  for (int u = 0; u < obs.width; ++u) row[static_cast<std::size_t>(u)] = obs.depth[obs.index(u, v0)];
  return row;
}

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
  int ui() const { return static_cast<int>(std::lround(u)); }
  int vi() const { return static_cast<int>(std::lround(v)); }
};

/// Ground-plane pinhole projection. Returns nullopt behind the camera or when the point does not
/// land on a floor pixel of the image.
inline std::optional<PixelCoord> project_world_point(Vec2 point, const Pose& pose, const CameraModel& cam = {}) {
  const Vec2 rel = to_local(pose, point);
  if (rel.x <= 0.0) return std::nullopt;
  PixelCoord px{cam.center_u() + cam.focal() * rel.y / rel.x, cam.horizon() + cam.focal() * cam.height_gu / rel.x};
  if (!(px.v > cam.horizon() && px.v < cam.height)) return std::nullopt;
  if (px.ui() < 0 || px.ui() >= cam.width || px.vi() >= cam.height || px.vi() <= cam.horizon()) return std::nullopt;
  return px;
}

// ---------------------------------------------------------------------------
// Odometry

/// Body-frame motion increment: forward and rightward translation plus heading change.
struct MotionDelta {
  double forward = 0.0;
  double lateral = 0.0;
  double dtheta = 0.0;
};

inline MotionDelta motion_between(const Pose& from, const Pose& to) {
  const Vec2 l = to_local(from, to.position());
  return {l.x, l.y, wrap_angle(to.theta - from.theta)};
}

/// Proportional Gaussian noise: sigma is `fraction` of the translation length (per component)
/// and of |dtheta|. Zero motion yields zero noise.
inline MotionDelta odometry_step(const MotionDelta& truth, Rng& rng, double fraction = 0.02) {
  const double trans = std::hypot(truth.forward, truth.lateral);
  MotionDelta m = truth;
  m.forward += fraction * trans * rng.normal();
  m.lateral += fraction * trans * rng.normal();
  m.dtheta += fraction * std::abs(truth.dtheta) * rng.normal();
  return m;
}

inline Pose integrate_odometry(const Pose& odom, const MotionDelta& d) {
  const Vec2 p = to_world(odom, {d.forward, d.lateral});
  return {p.x, p.y, wrap_angle(odom.theta + d.dtheta)};
}

// ---------------------------------------------------------------------------
// AOBS binary block

inline void write_observation(ByteWriter& out, const Observation& o) {
  out.tag("AOBS");
  out.u16(1);
  out.u16(static_cast<std::uint16_t>(o.width));
  out.u16(static_cast<std::uint16_t>(o.height));
  for (double v : {o.pose_odom.x, o.pose_odom.y, o.pose_odom.theta}) out.f32(static_cast<float>(v));
  for (double v : {o.pose_true.x, o.pose_true.y, o.pose_true.theta}) out.f32(static_cast<float>(v));
  out.u32(o.step_index);
  for (auto t : o.texture) out.u16(t);
  for (auto d : o.depth) out.f32(d);
  for (auto g : o.ground_x) out.f32(g);
  for (auto g : o.ground_y) out.f32(g);
}

inline Observation read_observation(ByteReader& in) {
  in.expect_tag("AOBS");
  const std::size_t version_at = in.offset();
  if (in.u16() != 1) throw FormatError("unsupported observation version", version_at);
  Observation o;
  o.width = in.u16();
  o.height = in.u16();
  o.pose_odom.x = in.f32();
  o.pose_odom.y = in.f32();
  o.pose_odom.theta = in.f32();
  o.pose_true.x = in.f32();
  o.pose_true.y = in.f32();
  o.pose_true.theta = in.f32();
  o.step_index = in.u32();
  const std::size_t n = o.size();
  o.texture.resize(n);
  o.depth.resize(n);
  o.ground_x.resize(n);
  o.ground_y.resize(n);
  for (auto& t : o.texture) t = in.u16();
  for (auto& d : o.depth) d = in.f32();
  for (auto& g : o.ground_x) g = in.f32();
  for (auto& g : o.ground_y) g = in.f32();
  return o;
}

/// Poses are stored as f32 on disk; rounding them up front keeps round-trips exact.
inline Pose quantize_pose(const Pose& p) {
  return {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.theta)};
}

}  // namespace affordance
