#include <gtest/gtest.h>

#include "affordance/sensor.hpp"

using namespace affordance;

namespace {

// Brute-force march along a column ray; returns the planar depth of the first wall tile.
double marched_depth(const WorldMap& w, const Pose& pose, const CameraModel& cam, int u) {
  const Vec2 dir = cam.column_dir(pose, u);
  const double step = 0.005;
  for (double t = step; t < 5000; t += step)
    if (w.kind_at(pose.position() + dir * t) == TileKind::Wall) return t;
  return 5000;
}

WorldMap corridor() {
  return world_from_ascii({"############", "#..........#", "#..........#", "#..........#", "#..........#",
                           "#..........#", "############"},
                          {1.5 * kTileSize, 3.5 * kTileSize, 0.0});
}

}  // namespace

TEST(Camera, Defaults) {
  const CameraModel c;
  EXPECT_EQ(c.width, 160);
  EXPECT_EQ(c.height, 120);
  EXPECT_NEAR(c.focal(), 80.0 / std::tan(deg_to_rad(30)), 1e-12);
  EXPECT_DOUBLE_EQ(c.horizon(), 60.0);
}

TEST(Render, WallAheadCenterDepth) {
  // Wall face at x = 11 tiles; stand 128 gu before it.
  auto w = corridor();
  const Pose p{11 * kTileSize - 128, 3.5 * kTileSize, 0.0};
  const auto o = render(w, p);
  EXPECT_NEAR(o.depth[o.index(80, 60)], 128.0, 1e-3);
}

TEST(Render, BottomRowFloorDistance) {
  auto w = corridor();
  const CameraModel cam;
  const auto o = render(w, w.spawn, cam);
  const double want = cam.focal() * 32.0 / (cam.height / 2.0 - 1);
  const auto i = o.index(80, cam.height - 1);
  EXPECT_NEAR(o.depth[i], want, 1e-3);
  const Vec2 g = o.ground(i);
  EXPECT_NEAR(g.x - w.spawn.x, want, 1e-2);
  EXPECT_NEAR(g.y - w.spawn.y, 0.0, 1e-2);
}

TEST(Render, Deterministic) {
  const auto w = generate_world(4);
  EXPECT_EQ(render(w, w.spawn), render(w, w.spawn));
}

TEST(Render, ScanlineMatchesMarchedRays) {
  const auto w = generate_world(8);
  const CameraModel cam;
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    Pose p = w.spawn;
    p.theta = rng.uniform(-kPi, kPi);
    const auto s = center_scanline(render(w, p, cam));
    for (int u = 0; u < cam.width; u += 7) EXPECT_NEAR(s[static_cast<std::size_t>(u)], marched_depth(w, p, cam, u), 0.02);
  }
}

TEST(Render, FlatWallHasConstantScanline) {
  auto w = corridor();
  const Pose p{4 * kTileSize, 3.5 * kTileSize, 0.0};
  const auto s = center_scanline(render(w, p));
  // Columns whose rays hit the far wall face x = 11 tiles.
  for (int u = 60; u < 100; ++u) EXPECT_NEAR(s[static_cast<std::size_t>(u)], 11 * kTileSize - p.x, 0.5);
}

TEST(Render, LowObstacleInvisibleToScanline) {
  // Low obstacle 64 gu ahead, wall 256 gu ahead.
  const auto w = world_from_ascii({"#######", "#.....#", "#..o..#", "#.....#", "#######"}, {});
  const Pose q{3 * kTileSize - 64, 2.5 * kTileSize, 0.0};
  const auto o = render(w, q);
  EXPECT_NEAR(center_scanline(o)[80], 6 * kTileSize - q.x, 1e-3);
  // The obstacle top is visible on the floor with its own texture.
  bool seen = false;
  for (std::size_t i = 0; i < o.size(); ++i) seen = seen || textures::category(o.texture[i]) == textures::Category::LowObstacle;
  EXPECT_TRUE(seen);
}

TEST(Render, ScanlinePositiveAgainstWall) {
  auto w = corridor();
  const Pose p{11 * kTileSize - 16, 3.5 * kTileSize, 0.0};
  for (double d : center_scanline(render(w, p))) EXPECT_GT(d, 0.0);
}

TEST(Render, FloorPixelsAreConsistent) {
  const auto w = generate_world(12);
  const CameraModel cam;
  Rng rng(1);
  for (int k = 0; k < 4; ++k) {
    Pose p = w.spawn;
    p.theta = rng.uniform(-kPi, kPi);
    const auto o = render(w, p, cam);
    for (int u = 0; u < cam.width; ++u) {
      const double wall = marched_depth(w, p, cam, u);
      for (int v = 0; v < cam.height; ++v) {
        const auto i = o.index(u, v);
        if (!o.ground_valid(i) || textures::category(o.texture[i]) == textures::Category::Actor) continue;
        // Planar depth relation and round trip through the projection.
        ASSERT_NEAR(o.depth[i] * (v - cam.horizon()), cam.focal() * cam.height_gu, 0.05);
        const auto px = project_world_point(o.ground(i), p, cam);
        ASSERT_TRUE(px.has_value());
        ASSERT_LT(std::hypot(px->u - u, px->v - v), 0.5);
        // No wall between the camera and the floor point.
        ASSERT_GE(wall, o.depth[i] - 0.05);
      }
    }
  }
}

TEST(Projection, AheadIsCentered) {
  const Pose p{100, 100, 0.7};
  const auto px = project_world_point(to_world(p, {128, 0}), p);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, 80.0, 0.5);
}

TEST(Projection, BehindIsOutOfView) {
  const Pose p{100, 100, 0.7};
  EXPECT_FALSE(project_world_point(to_world(p, {-64, 0}), p));
  EXPECT_FALSE(project_world_point(to_world(p, {64, 64 * 2}), p));  // outside the 60 degree cone
}

TEST(Projection, RendererRoundTrip) {
  const auto w = generate_world(2);
  Rng rng(17);
  int checked = 0;
  while (checked < 1000) {
    Pose p = w.spawn;
    p.theta = rng.uniform(-kPi, kPi);
    const auto o = render(w, p);
    for (int k = 0; k < 50; ++k) {
      // Within 150 gu half a pixel row spans under 3 gu of floor.
      const double r = rng.uniform(40, 150), a = rng.uniform(-0.5, 0.5);
      const Vec2 q = to_world(p, {r * std::cos(a), r * std::sin(a)});
      const auto px = project_world_point(q, p);
      if (!px) continue;
      const auto i = o.index(px->ui(), px->vi());
      if (!o.ground_valid(i) || textures::category(o.texture[i]) == textures::Category::Actor) continue;
      EXPECT_LT(distance(o.ground(i), q), 4.0);
      ++checked;
    }
  }
}

TEST(Odometry, ZeroMotionZeroNoise) {
  Rng rng(1);
  const auto m = odometry_step({0, 0, 0}, rng);
  EXPECT_EQ(m.forward, 0.0);
  EXPECT_EQ(m.lateral, 0.0);
  EXPECT_EQ(m.dtheta, 0.0);
}

TEST(Odometry, TwoPercentNoiseStatistics) {
  Rng rng(2);
  double s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto m = odometry_step({16, 0, 0}, rng);
    s2 += (m.forward - 16) * (m.forward - 16);
  }
  EXPECT_NEAR(std::sqrt(s2 / n), 0.32, 0.01);
}

TEST(Odometry, DriftGrowsSublinearly) {
  // Straight-line walk: endpoint error relative to distance shrinks with length.
  Rng rng(3);
  auto rel_error = [&](int steps) {
    double acc = 0;
    for (int rep = 0; rep < 200; ++rep) {
      Pose odom{0, 0, 0};
      for (int i = 0; i < steps; ++i) odom = integrate_odometry(odom, odometry_step({16, 0, 0}, rng));
      acc += std::abs(odom.x - 16.0 * steps) / (16.0 * steps);
    }
    return acc / 200;
  };
  EXPECT_LT(rel_error(1000), rel_error(10));
}

TEST(ObservationIo, RoundTripIsExact) {
  const auto w = generate_world(6);
  Observation o = render(w, w.spawn);
  o.pose_odom = quantize_pose({1.25, -3.5, 0.5});
  o.pose_true = quantize_pose(o.pose_true);
  o.step_index = 42;
  ByteWriter out;
  write_observation(out, o);
  ByteReader in(out.data());
  EXPECT_EQ(read_observation(in), o);
  EXPECT_TRUE(in.at_end());
}

TEST(ObservationIo, BadMagicNamesOffset) {
  ByteWriter out;
  write_observation(out, render(generate_world(6), generate_world(6).spawn));
  auto bytes = out.data();
  bytes[0] = 'X';
  ByteReader in(bytes);
  try {
    read_observation(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}
