// Procedural tile worlds, agent kinematics, dynamic actors and the damage model.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/common.hpp"

namespace affordance {

enum class TileKind : std::uint8_t { Wall, Floor, EnvHazard, LowObstacle };

enum class Action : std::uint8_t { Forward, TurnLeft, TurnRight };

enum class ActorPolicy : std::uint8_t { RandomWalk, Patrol };

inline constexpr double kWallHeight = 64.0;
inline constexpr double kLowObstacleHeight = 16.0;
inline constexpr double kActorHeight = 56.0;

// Texture id layout. Id 0 is the ceiling; every tile/actor kind draws from its own pool.
namespace textures {
inline constexpr std::uint16_t kCeiling = 0;
inline constexpr std::uint16_t kWallBase = 1, kWallCount = 8;
inline constexpr std::uint16_t kFloorBase = 9, kFloorCount = 6;
inline constexpr std::uint16_t kHazardBase = 15, kHazardCount = 3;
inline constexpr std::uint16_t kLowBase = 18, kLowCount = 3;
inline constexpr std::uint16_t kActorBase = 21, kActorCount = 4;
inline constexpr std::uint16_t kCount = 25;

enum class Category : std::uint8_t { Ceiling, Wall, Floor, Hazard, LowObstacle, Actor };

/// Category a texture id was drawn from (ambiguous ids report their floor origin).
inline Category category(std::uint16_t id) {
  if (id == kCeiling) return Category::Ceiling;
  if (id < kFloorBase) return Category::Wall;
  if (id < kHazardBase) return Category::Floor;
  if (id < kLowBase) return Category::Hazard;
  if (id < kActorBase) return Category::LowObstacle;
  return Category::Actor;
}
}  // namespace textures

struct WorldParams {
  int tiles_w = 28;
  int tiles_h = 28;
  int room_count_min = 5;
  int room_count_max = 9;
  int room_size_min = 3;
  int room_size_max = 7;
  double hazard_density = 0.06;
  int actor_count = 3;
  double low_obstacle_density = 0.03;
  bool ambiguous_textures = false;
  double actor_radius = 20.0;
  double actor_speed = 8.0;

  friend bool operator==(const WorldParams&, const WorldParams&) = default;
};

/// Agent motion constants. None of these are fixed by the source method; all are configurable.
struct Kinematics {
  double forward_step = 16.0;
  double turn_step = deg_to_rad(15.0);
  double agent_radius = 16.0;
  double blocked_threshold = 1.0;
};

namespace damage {
inline constexpr int kDynamicContact = 4;
inline constexpr int kEnvironmental = 20;
}  // namespace damage

struct DynamicActor {
  Vec2 position;
  double radius = 20.0;
  double speed = 8.0;
  ActorPolicy policy = ActorPolicy::RandomWalk;
  std::uint64_t policy_seed = 0;
  std::uint16_t texture = textures::kActorBase;

  // policy state
  double heading = 0.0;
  std::uint64_t steps = 0;
  std::vector<Vec2> waypoints;
  std::size_t waypoint_index = 0;

  friend bool operator==(const DynamicActor&, const DynamicActor&) = default;
};

struct TileCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

struct WorldMap {
  std::uint64_t seed = 0;
  WorldParams params;
  int width = 0;   // tiles
  int height = 0;  // tiles
  std::vector<TileKind> tiles;         // row-major, index y * width + x
  std::vector<std::uint16_t> texture;  // per-tile texture id, same layout
  std::vector<DynamicActor> actors;
  Pose spawn;

  bool in_bounds(int tx, int ty) const { return tx >= 0 && ty >= 0 && tx < width && ty < height; }
  TileKind at(int tx, int ty) const {
    return in_bounds(tx, ty) ? tiles[static_cast<std::size_t>(ty) * width + tx] : TileKind::Wall;
  }
  TileKind& at_mut(int tx, int ty) { return tiles[static_cast<std::size_t>(ty) * width + tx]; }
  std::uint16_t texture_at(int tx, int ty) const {
    return in_bounds(tx, ty) ? texture[static_cast<std::size_t>(ty) * width + tx] : textures::kWallBase;
  }
  static TileCoord tile_of(Vec2 p) {
    return {static_cast<int>(std::floor(p.x / kTileSize)), static_cast<int>(std::floor(p.y / kTileSize))};
  }
  TileKind kind_at(Vec2 p) const {
    const auto t = tile_of(p);
    return at(t.x, t.y);
  }
  /// Wall and LowObstacle tiles block bodies.
  bool solid(int tx, int ty) const {
    const TileKind k = at(tx, ty);
    return k == TileKind::Wall || k == TileKind::LowObstacle;
  }
  static Vec2 tile_center(int tx, int ty) { return {(tx + 0.5) * kTileSize, (ty + 0.5) * kTileSize}; }

  friend bool operator==(const WorldMap&, const WorldMap&) = default;
};

struct AgentState {
  Pose pose;
  double radius = 16.0;
  std::int64_t cumulative_damage = 0;
  std::int64_t step_count = 0;
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct StepEvent {
  int damage = 0;
  bool blocked = false;
  Vec2 contact_position;
  friend bool operator==(const StepEvent&, const StepEvent&) = default;
};

struct StepResult {
  AgentState agent;
  StepEvent event;
};

// ---------------------------------------------------------------------------
// Geometry queries

/// True when a circle overlaps any solid (Wall/LowObstacle) tile.
inline bool circle_blocked(const WorldMap& w, Vec2 c, double r) {
  const int x0 = static_cast<int>(std::floor((c.x - r) / kTileSize));
  const int x1 = static_cast<int>(std::floor((c.x + r) / kTileSize));
  const int y0 = static_cast<int>(std::floor((c.y - r) / kTileSize));
  const int y1 = static_cast<int>(std::floor((c.y + r) / kTileSize));
  for (int ty = y0; ty <= y1; ++ty) {
    for (int tx = x0; tx <= x1; ++tx) {
      if (!w.solid(tx, ty)) continue;
      const double qx = std::clamp(c.x, tx * kTileSize, (tx + 1) * kTileSize);
      const double qy = std::clamp(c.y, ty * kTileSize, (ty + 1) * kTileSize);
      const double dx = c.x - qx, dy = c.y - qy;
      if (dx * dx + dy * dy < r * r - 1e-9) return true;
    }
  }
  return false;
}

inline bool passable(TileKind k) { return k == TileKind::Floor || k == TileKind::EnvHazard; }

/// 4-connected flood fill over passable tiles; returns a visited mask.
inline std::vector<std::uint8_t> flood_fill_passable(const WorldMap& w, TileCoord start) {
  std::vector<std::uint8_t> seen(w.tiles.size(), 0);
  if (!passable(w.at(start.x, start.y))) return seen;
  std::deque<TileCoord> q{start};
  seen[static_cast<std::size_t>(start.y) * w.width + start.x] = 1;
  constexpr std::array<std::pair<int, int>, 4> kNbr{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!q.empty()) {
    const auto t = q.front();
    q.pop_front();
    for (auto [dx, dy] : kNbr) {
      const int nx = t.x + dx, ny = t.y + dy;
      if (!w.in_bounds(nx, ny) || !passable(w.at(nx, ny))) continue;
      auto& s = seen[static_cast<std::size_t>(ny) * w.width + nx];
      if (!s) {
        s = 1;
        q.push_back({nx, ny});
      }
    }
  }
  return seen;
}

inline bool all_passable_reachable(const WorldMap& w, TileCoord from) {
  const auto seen = flood_fill_passable(w, from);
  for (std::size_t i = 0; i < w.tiles.size(); ++i)
    if (passable(w.tiles[i]) && !seen[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Actors

inline DynamicActor actor_policy_step(const DynamicActor& actor, const WorldMap& world) {
  DynamicActor a = actor;
  if (a.policy == ActorPolicy::RandomWalk) {
    if (a.steps % 8 == 0)
      a.heading = 2.0 * kPi * unit_from_bits(derive_seed(a.policy_seed, stream_id("heading"), a.steps / 8));
    // Try the commanded heading, then its x/y/both reflections.
    const std::array<double, 4> candidates{a.heading, kPi - a.heading, -a.heading, a.heading + kPi};
    for (double h : candidates) {
      const Vec2 next = a.position + Vec2{std::cos(h), std::sin(h)} * a.speed;
      if (!circle_blocked(world, next, a.radius)) {
        a.position = next;
        a.heading = wrap_angle(h);
        break;
      }
    }
  } else if (!a.waypoints.empty()) {
    const Vec2 target = a.waypoints[a.waypoint_index % a.waypoints.size()];
    const double d = distance(a.position, target);
    Vec2 next;
    bool arrived = false;
    if (d <= a.speed) {
      next = target;
      arrived = true;
    } else {
      next = a.position + (target - a.position) * (a.speed / d);
    }
    if (!circle_blocked(world, next, a.radius)) {
      a.position = next;
      if (arrived) a.waypoint_index = (a.waypoint_index + 1) % a.waypoints.size();
    }
  }
  ++a.steps;
  return a;
}

// ---------------------------------------------------------------------------
// Agent step

inline StepResult step(WorldMap& world, const AgentState& agent, Action action, const Kinematics& kin = {}) {
  AgentState next = agent;
  StepEvent ev;
  if (action == Action::Forward) {
    const Vec2 p = agent.pose.position();
    const Vec2 d = agent.pose.forward() * kin.forward_step;
    Vec2 q = p;
    // slide-or-stop: full move, then each axis alone
    for (Vec2 cand : {p + d, p + Vec2{d.x, 0.0}, p + Vec2{0.0, d.y}}) {
      if (!circle_blocked(world, cand, agent.radius)) {
        q = cand;
        break;
      }
    }
    next.pose.x = q.x;
    next.pose.y = q.y;
    ev.blocked = distance(p, q) < kin.blocked_threshold;
  } else {
    const double sgn = action == Action::TurnLeft ? 1.0 : -1.0;
    next.pose.theta = wrap_angle(agent.pose.theta + sgn * kin.turn_step);
  }

  for (auto& a : world.actors) a = actor_policy_step(a, world);

  const Vec2 pos = next.pose.position();
  for (const auto& a : world.actors) {
    if (distance(a.position, pos) < a.radius + agent.radius) {
      ev.damage += damage::kDynamicContact;
      break;
    }
  }
  if (world.kind_at(pos) == TileKind::EnvHazard) ev.damage += damage::kEnvironmental;

  // Blocked events are anchored where the body met the obstacle.
  ev.contact_position = ev.blocked ? pos + next.pose.forward() * agent.radius : pos;
  next.cumulative_damage += ev.damage;
  next.step_count += 1;
  return {next, ev};
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

struct Rect {
  int x0, y0, x1, y1;  // inclusive tile bounds
  bool overlaps(const Rect& o, int margin) const {
    return !(x1 + margin < o.x0 || o.x1 + margin < x0 || y1 + margin < o.y0 || o.y1 + margin < y0);
  }
  Rect unite(const Rect& o) const {
    return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
  }
  TileCoord center() const { return {(x0 + x1) / 2, (y0 + y1) / 2}; }
};

inline bool patrol_loop_clear(const WorldMap& w, const std::vector<Vec2>& pts, double r) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 a = pts[i], b = pts[(i + 1) % pts.size()];
    const int n = std::max(1, static_cast<int>(distance(a, b) / 4.0));
    for (int k = 0; k <= n; ++k)
      if (circle_blocked(w, a + (b - a) * (static_cast<double>(k) / n), r)) return false;
  }
  return true;
}

inline std::optional<WorldMap> try_generate(std::uint64_t seed, const WorldParams& p, std::uint64_t attempt_seed) {
  Rng rng(attempt_seed);
  WorldMap w;
  w.seed = seed;
  w.params = p;
  w.width = p.tiles_w;
  w.height = p.tiles_h;
  w.tiles.assign(static_cast<std::size_t>(w.width) * w.height, TileKind::Wall);
  w.texture.assign(w.tiles.size(), textures::kWallBase);
  // -1 wall, -2 corridor, otherwise room index
  std::vector<int> region(w.tiles.size(), -1);
  auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * w.width + x; };

  // Rooms: a base rectangle plus an optional attached lobe for irregular outlines.
  const int want_rooms = rng.uniform_int(p.room_count_min, p.room_count_max);
  std::vector<std::pair<Rect, std::optional<Rect>>> rooms;
  std::vector<Rect> bounds;
  for (int tries = 0; tries < 400 && static_cast<int>(rooms.size()) < want_rooms; ++tries) {
    const int rw = rng.uniform_int(p.room_size_min, p.room_size_max);
    const int rh = rng.uniform_int(p.room_size_min, p.room_size_max);
    if (rw > w.width - 2 || rh > w.height - 2) continue;
    const int x0 = rng.uniform_int(1, w.width - 1 - rw);
    const int y0 = rng.uniform_int(1, w.height - 1 - rh);
    Rect base{x0, y0, x0 + rw - 1, y0 + rh - 1};
    std::optional<Rect> lobe;
    if (rng.bernoulli(0.5)) {
      const int lw = rng.uniform_int(2, std::max(2, p.room_size_max - 2));
      const int lh = rng.uniform_int(2, std::max(2, p.room_size_max - 2));
      const int ax = rng.uniform_int(base.x0, base.x1), ay = rng.uniform_int(base.y0, base.y1);
      Rect l{ax - lw / 2, ay - lh / 2, ax - lw / 2 + lw - 1, ay - lh / 2 + lh - 1};
      l.x0 = std::max(l.x0, 1);
      l.y0 = std::max(l.y0, 1);
      l.x1 = std::min(l.x1, w.width - 2);
      l.y1 = std::min(l.y1, w.height - 2);
      lobe = l;
    }
    const Rect bb = lobe ? base.unite(*lobe) : base;
    if (std::any_of(bounds.begin(), bounds.end(), [&](const Rect& o) { return bb.overlaps(o, 1); })) continue;
    rooms.push_back({base, lobe});
    bounds.push_back(bb);
  }
  if (rooms.size() < 2) return std::nullopt;

  for (std::size_t r = 0; r < rooms.size(); ++r) {
    auto carve = [&](const Rect& rc) {
      for (int y = rc.y0; y <= rc.y1; ++y)
        for (int x = rc.x0; x <= rc.x1; ++x) {
          w.at_mut(x, y) = TileKind::Floor;
          region[idx(x, y)] = static_cast<int>(r);
        }
    };
    carve(rooms[r].first);
    if (rooms[r].second) carve(*rooms[r].second);
  }

  // Corridors: each room links to its nearest predecessor; one optional extra link adds a loop.
  auto carve_corridor = [&](TileCoord a, TileCoord b, int width) {
    auto put = [&](int x, int y) {
      for (int o = 0; o < width; ++o) {
        for (auto [cx, cy] : {std::pair{x + o, y}, std::pair{x, y + o}}) {
          if (cx < 1 || cy < 1 || cx > w.width - 2 || cy > w.height - 2) continue;
          if (w.at(cx, cy) == TileKind::Wall) {
            w.at_mut(cx, cy) = TileKind::Floor;
            region[idx(cx, cy)] = -2;
          }
        }
      }
    };
    const bool horizontal_first = rng.bernoulli(0.5);
    int x = a.x, y = a.y;
    auto walk_x = [&] {
      while (x != b.x) {
        put(x, y);
        x += (b.x > x) ? 1 : -1;
      }
    };
    auto walk_y = [&] {
      while (y != b.y) {
        put(x, y);
        y += (b.y > y) ? 1 : -1;
      }
    };
    if (horizontal_first) {
      walk_x();
      walk_y();
    } else {
      walk_y();
      walk_x();
    }
    put(x, y);
  };
  for (std::size_t i = 1; i < rooms.size(); ++i) {
    std::size_t best = 0;
    int best_d = 1 << 30;
    const auto ci = rooms[i].first.center();
    for (std::size_t j = 0; j < i; ++j) {
      const auto cj = rooms[j].first.center();
      const int d = std::abs(ci.x - cj.x) + std::abs(ci.y - cj.y);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    carve_corridor(ci, rooms[best].first.center(), rng.uniform_int(1, 2));
  }
  if (rooms.size() > 2 && rng.bernoulli(0.5)) {
    const int a = rng.uniform_int(0, static_cast<int>(rooms.size()) - 1);
    const int b = rng.uniform_int(0, static_cast<int>(rooms.size()) - 1);
    if (a != b) carve_corridor(rooms[a].first.center(), rooms[b].first.center(), 1);
  }

  // Spawn at the first room's center tile.
  const TileCoord spawn_tile = rooms[0].first.center();
  w.spawn = Pose{(spawn_tile.x + 0.5) * kTileSize, (spawn_tile.y + 0.5) * kTileSize,
                 wrap_angle(deg_to_rad(15.0 * rng.uniform_int(0, 23)))};
  auto near_spawn = [&](int x, int y, int cheb) {
    return std::max(std::abs(x - spawn_tile.x), std::abs(y - spawn_tile.y)) <= cheb;
  };

  // Textures: walls by 4x4 block, floors per room / corridor.
  const std::uint64_t tex_seed = derive_seed(attempt_seed, stream_id("textures"));
  std::vector<std::uint16_t> room_floor(rooms.size());
  for (auto& f : room_floor) f = static_cast<std::uint16_t>(textures::kFloorBase + rng.uniform_int(0, textures::kFloorCount - 1));
  const auto corridor_floor = static_cast<std::uint16_t>(textures::kFloorBase + rng.uniform_int(0, textures::kFloorCount - 1));
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      const int reg = region[idx(x, y)];
      if (reg == -1) {
        const auto h = derive_seed(tex_seed, static_cast<std::uint64_t>(x / 4), static_cast<std::uint64_t>(y / 4));
        w.texture[idx(x, y)] = static_cast<std::uint16_t>(textures::kWallBase + h % textures::kWallCount);
      } else {
        w.texture[idx(x, y)] = reg == -2 ? corridor_floor : room_floor[static_cast<std::size_t>(reg)];
      }
    }

  std::vector<TileCoord> room_floor_tiles;
  int floor_count = 0;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      if (w.at(x, y) != TileKind::Floor) continue;
      ++floor_count;
      if (region[idx(x, y)] >= 0) room_floor_tiles.push_back({x, y});
    }

  // Hazard pools grown by randomized BFS inside rooms.
  std::array<std::uint16_t, textures::kHazardCount> hazard_pool{};
  for (std::uint16_t i = 0; i < textures::kHazardCount; ++i) hazard_pool[i] = textures::kHazardBase + i;
  if (p.ambiguous_textures) hazard_pool[0] = textures::kFloorBase;
  const int hazard_target = static_cast<int>(std::lround(p.hazard_density * floor_count));
  int hazards = 0;
  for (int tries = 0; tries < 2000 && hazards < hazard_target && !room_floor_tiles.empty(); ++tries) {
    const auto s = room_floor_tiles[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(room_floor_tiles.size()) - 1))];
    if (w.at(s.x, s.y) != TileKind::Floor || near_spawn(s.x, s.y, 1)) continue;
    const int pool_size = std::min(rng.uniform_int(2, 6), hazard_target - hazards);
    const auto tex = hazard_pool[static_cast<std::size_t>(rng.uniform_int(0, textures::kHazardCount - 1))];
    std::vector<TileCoord> frontier{s};
    int grown = 0;
    while (!frontier.empty() && grown < pool_size) {
      const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(frontier.size()) - 1));
      const auto t = frontier[k];
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(k));
      if (w.at(t.x, t.y) != TileKind::Floor || region[idx(t.x, t.y)] < 0 || near_spawn(t.x, t.y, 1)) continue;
      w.at_mut(t.x, t.y) = TileKind::EnvHazard;
      w.texture[idx(t.x, t.y)] = tex;
      ++grown;
      for (auto [dx, dy] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}})
        frontier.push_back({t.x + dx, t.y + dy});
    }
    hazards += grown;
  }

  // Low obstacles: single tiles, each kept only if connectivity survives.
  const int low_target = static_cast<int>(std::lround(p.low_obstacle_density * floor_count));
  int lows = 0;
  for (int tries = 0; tries < 2000 && lows < low_target && !room_floor_tiles.empty(); ++tries) {
    const auto t = room_floor_tiles[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(room_floor_tiles.size()) - 1))];
    if (w.at(t.x, t.y) != TileKind::Floor || near_spawn(t.x, t.y, 1)) continue;
    w.at_mut(t.x, t.y) = TileKind::LowObstacle;
    if (!all_passable_reachable(w, spawn_tile)) {
      w.at_mut(t.x, t.y) = TileKind::Floor;
      continue;
    }
    w.texture[idx(t.x, t.y)] = static_cast<std::uint16_t>(textures::kLowBase + rng.uniform_int(0, textures::kLowCount - 1));
    ++lows;
  }

  // Actors on plain floor away from spawn.
  std::vector<TileCoord> actor_tiles;
  for (const auto& t : room_floor_tiles)
    if (w.at(t.x, t.y) == TileKind::Floor && !near_spawn(t.x, t.y, 2)) actor_tiles.push_back(t);
  for (int i = 0; i < p.actor_count && !actor_tiles.empty(); ++i) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(actor_tiles.size()) - 1));
    const auto t = actor_tiles[k];
    actor_tiles.erase(actor_tiles.begin() + static_cast<std::ptrdiff_t>(k));
    DynamicActor a;
    a.position = WorldMap::tile_center(t.x, t.y);
    a.radius = p.actor_radius;
    a.speed = p.actor_speed;
    a.policy_seed = derive_seed(attempt_seed, stream_id("actor"), static_cast<std::uint64_t>(i));
    a.texture = static_cast<std::uint16_t>(textures::kActorBase + rng.uniform_int(0, textures::kActorCount - 1));
    a.policy = rng.bernoulli(0.5) ? ActorPolicy::Patrol : ActorPolicy::RandomWalk;
    if (circle_blocked(w, a.position, a.radius)) continue;
    if (a.policy == ActorPolicy::Patrol) {
      const double h = 48.0;
      const Vec2 c = a.position;
      std::vector<Vec2> loop{c, c + Vec2{h, 0}, c + Vec2{h, h}, c + Vec2{0, h}};
      if (patrol_loop_clear(w, loop, a.radius)) {
        a.waypoints = loop;
        a.waypoint_index = 1;
      } else {
        a.policy = ActorPolicy::RandomWalk;
      }
    }
    w.actors.push_back(std::move(a));
  }

  if (!all_passable_reachable(w, spawn_tile)) return std::nullopt;
  return w;
}

}  // namespace detail

inline WorldMap generate_world(std::uint64_t seed, const WorldParams& params = {}) {
  if (params.tiles_w < 16 || params.tiles_h < 16) throw Error("world tile dims must be at least 16x16");
  for (double d : {params.hazard_density, params.low_obstacle_density})
    if (!(d >= 0.0 && d <= 1.0)) throw Error("densities must lie in [0,1]");
  if (params.room_size_min < 2 || params.room_size_max < params.room_size_min || params.room_count_min < 2 ||
      params.room_count_max < params.room_count_min || params.actor_count < 0)
    throw Error("invalid room or actor parameters");
  for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
    if (auto w = detail::try_generate(seed, params, derive_seed(seed, stream_id("generate"), attempt))) return std::move(*w);
  }
  throw Error("world generation failed after 32 attempts (seed " + std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// JSON

inline char tile_char(TileKind k) {
  switch (k) {
    case TileKind::Wall: return '#';
    case TileKind::Floor: return '.';
    case TileKind::EnvHazard: return '~';
    case TileKind::LowObstacle: return 'o';
  }
  return '#';
}

inline TileKind tile_from_char(char c) {
  switch (c) {
    case '#': return TileKind::Wall;
    case '.': return TileKind::Floor;
    case '~': return TileKind::EnvHazard;
    case 'o': return TileKind::LowObstacle;
    default: throw Error(std::string("invalid tile character '") + c + "'");
  }
}

inline nlohmann::json params_to_json(const WorldParams& p) {
  return {{"tiles_w", p.tiles_w},
          {"tiles_h", p.tiles_h},
          {"room_count_min", p.room_count_min},
          {"room_count_max", p.room_count_max},
          {"room_size_min", p.room_size_min},
          {"room_size_max", p.room_size_max},
          {"hazard_density", p.hazard_density},
          {"actor_count", p.actor_count},
          {"low_obstacle_density", p.low_obstacle_density},
          {"ambiguous_textures", p.ambiguous_textures},
          {"actor_radius", p.actor_radius},
          {"actor_speed", p.actor_speed}};
}

namespace detail {
template <typename T>
void read_key(const nlohmann::json& j, const std::string& prefix, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error("invalid value for config key '" + prefix + key + "'");
  }
}

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& prefix,
                                std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw Error("unknown config key '" + prefix + k + "'");
}
}  // namespace detail

/// Missing keys keep their defaults; present keys must have the right type; unknown keys are rejected.
inline WorldParams params_from_json(const nlohmann::json& j, const std::string& prefix = "world_params.") {
  if (!j.is_object()) throw Error("config key '" + prefix.substr(0, prefix.size() - 1) + "' must be an object");
  detail::reject_unknown_keys(j, prefix,
                              {"tiles_w", "tiles_h", "room_count_min", "room_count_max", "room_size_min", "room_size_max",
                               "hazard_density", "actor_count", "low_obstacle_density", "ambiguous_textures",
                               "actor_radius", "actor_speed"});
  WorldParams p;
  detail::read_key(j, prefix, "tiles_w", p.tiles_w);
  detail::read_key(j, prefix, "tiles_h", p.tiles_h);
  detail::read_key(j, prefix, "room_count_min", p.room_count_min);
  detail::read_key(j, prefix, "room_count_max", p.room_count_max);
  detail::read_key(j, prefix, "room_size_min", p.room_size_min);
  detail::read_key(j, prefix, "room_size_max", p.room_size_max);
  detail::read_key(j, prefix, "hazard_density", p.hazard_density);
  detail::read_key(j, prefix, "actor_count", p.actor_count);
  detail::read_key(j, prefix, "low_obstacle_density", p.low_obstacle_density);
  detail::read_key(j, prefix, "ambiguous_textures", p.ambiguous_textures);
  detail::read_key(j, prefix, "actor_radius", p.actor_radius);
  detail::read_key(j, prefix, "actor_speed", p.actor_speed);
  return p;
}

inline nlohmann::json world_to_json(const WorldMap& w) {
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json tex = nlohmann::json::array();
  for (int y = 0; y < w.height; ++y) {
    std::string row;
    nlohmann::json trow = nlohmann::json::array();
    for (int x = 0; x < w.width; ++x) {
      row.push_back(tile_char(w.at(x, y)));
      trow.push_back(w.texture_at(x, y));
    }
    rows.push_back(row);
    tex.push_back(trow);
  }
  nlohmann::json actors = nlohmann::json::array();
  for (const auto& a : w.actors) {
    nlohmann::json wp = nlohmann::json::array();
    for (auto p : a.waypoints) wp.push_back({p.x, p.y});
    actors.push_back({{"x", a.position.x},
                      {"y", a.position.y},
                      {"radius", a.radius},
                      {"speed", a.speed},
                      {"policy", a.policy == ActorPolicy::Patrol ? "patrol" : "random_walk"},
                      {"policy_seed", a.policy_seed},
                      {"texture", a.texture},
                      {"heading", a.heading},
                      {"steps", a.steps},
                      {"waypoints", wp},
                      {"waypoint_index", a.waypoint_index}});
  }
  return {{"seed", w.seed},
          {"params", params_to_json(w.params)},
          {"tile_grid", rows},
          {"texture_assignment", tex},
          {"actors", actors},
          {"spawn", {{"x", w.spawn.x}, {"y", w.spawn.y}, {"theta", w.spawn.theta}}}};
}

inline WorldMap world_from_json(const nlohmann::json& j) {
  try {
    WorldMap w;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.params = params_from_json(j.at("params"), "params.");
    const auto& rows = j.at("tile_grid");
    w.height = static_cast<int>(rows.size());
    if (w.height == 0) throw Error("world JSON: empty tile_grid");
    w.width = static_cast<int>(rows[0].get<std::string>().size());
    const auto& tex = j.at("texture_assignment");
    if (static_cast<int>(tex.size()) != w.height) throw Error("world JSON: texture_assignment row count mismatch");
    for (int y = 0; y < w.height; ++y) {
      const auto row = rows[static_cast<std::size_t>(y)].get<std::string>();
      if (static_cast<int>(row.size()) != w.width) throw Error("world JSON: ragged tile_grid");
      const auto& trow = tex[static_cast<std::size_t>(y)];
      if (static_cast<int>(trow.size()) != w.width) throw Error("world JSON: ragged texture_assignment");
      for (int x = 0; x < w.width; ++x) {
        w.tiles.push_back(tile_from_char(row[static_cast<std::size_t>(x)]));
        w.texture.push_back(trow[static_cast<std::size_t>(x)].get<std::uint16_t>());
      }
    }
    for (const auto& ja : j.at("actors")) {
      DynamicActor a;
      a.position = {ja.at("x").get<double>(), ja.at("y").get<double>()};
      a.radius = ja.at("radius").get<double>();
      a.speed = ja.at("speed").get<double>();
      a.policy = ja.at("policy").get<std::string>() == "patrol" ? ActorPolicy::Patrol : ActorPolicy::RandomWalk;
      a.policy_seed = ja.at("policy_seed").get<std::uint64_t>();
      a.texture = ja.at("texture").get<std::uint16_t>();
      a.heading = ja.at("heading").get<double>();
      a.steps = ja.at("steps").get<std::uint64_t>();
      for (const auto& p : ja.at("waypoints")) a.waypoints.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      a.waypoint_index = ja.at("waypoint_index").get<std::size_t>();
      w.actors.push_back(std::move(a));
    }
    const auto& s = j.at("spawn");
    w.spawn = {s.at("x").get<double>(), s.at("y").get<double>(), s.at("theta").get<double>()};
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("world JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Small builders used by fixtures and tests

/// A world from ASCII rows ('#', '.', '~', 'o'); textures take the first id of each pool.
inline WorldMap world_from_ascii(const std::vector<std::string>& rows, Pose spawn) {
  WorldMap w;
  w.height = static_cast<int>(rows.size());
  w.width = static_cast<int>(rows.at(0).size());
  w.params.tiles_w = w.width;
  w.params.tiles_h = w.height;
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != w.width) throw Error("ragged ascii world");
    for (char c : r) {
      const TileKind k = tile_from_char(c);
      w.tiles.push_back(k);
      switch (k) {
        case TileKind::Wall: w.texture.push_back(textures::kWallBase); break;
        case TileKind::Floor: w.texture.push_back(textures::kFloorBase); break;
        case TileKind::EnvHazard: w.texture.push_back(textures::kHazardBase); break;
        case TileKind::LowObstacle: w.texture.push_back(textures::kLowBase); break;
      }
    }
  }
  w.spawn = spawn;
  return w;
}

}  // namespace affordance
