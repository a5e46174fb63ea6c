#include <gtest/gtest.h>

#include <deque>
#include <set>

#include "affordance/world.hpp"

using namespace affordance;

namespace {

// Independent flood fill over tiles that a body may stand on.
std::size_t reachable_tiles(const WorldMap& w, TileCoord s) {
  std::set<std::pair<int, int>> seen{{s.x, s.y}};
  std::deque<TileCoord> q{s};
  while (!q.empty()) {
    auto t = q.front();
    q.pop_front();
    for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const int x = t.x + dx, y = t.y + dy;
      const auto k = w.at(x, y);
      if ((k == TileKind::Floor || k == TileKind::EnvHazard) && seen.insert({x, y}).second) q.push_back({x, y});
    }
  }
  return seen.size();
}

std::size_t passable_tiles(const WorldMap& w) {
  return static_cast<std::size_t>(std::count_if(w.tiles.begin(), w.tiles.end(), [](TileKind k) {
    return k == TileKind::Floor || k == TileKind::EnvHazard;
  }));
}

WorldMap open_room() {
  return world_from_ascii({"##########", "#........#", "#........#", "#........#", "#........#", "##########"},
                          {2.5 * kTileSize, 2.5 * kTileSize, 0.0});
}

}  // namespace

TEST(WorldGeneration, SeedOneFullyConnected) {
  const auto w = generate_world(1);
  EXPECT_EQ(reachable_tiles(w, WorldMap::tile_of(w.spawn.position())), passable_tiles(w));
}

TEST(WorldGeneration, DeterministicPerSeed) {
  EXPECT_EQ(generate_world(1), generate_world(1));
  EXPECT_EQ(world_to_json(generate_world(1)).dump(), world_to_json(generate_world(1)).dump());
  EXPECT_NE(generate_world(1), generate_world(2));
}

TEST(WorldGeneration, ZeroDensityHasNoHazardsOrActors) {
  WorldParams p;
  p.hazard_density = 0.0;
  p.actor_count = 0;
  const auto w = generate_world(7, p);
  EXPECT_EQ(std::count(w.tiles.begin(), w.tiles.end(), TileKind::EnvHazard), 0);
  EXPECT_TRUE(w.actors.empty());
}

TEST(WorldGeneration, ConnectivityAndBordersOverManySeeds) {
  for (std::uint64_t seed = 100; seed < 200; ++seed) {
    const auto w = generate_world(seed);
    ASSERT_EQ(reachable_tiles(w, WorldMap::tile_of(w.spawn.position())), passable_tiles(w)) << "seed " << seed;
    for (int x = 0; x < w.width; ++x) ASSERT_EQ(w.at(x, 0), TileKind::Wall);
    for (int y = 0; y < w.height; ++y) ASSERT_EQ(w.at(w.width - 1, y), TileKind::Wall);
    ASSERT_EQ(w.kind_at(w.spawn.position()), TileKind::Floor);
    for (const auto& a : w.actors) ASSERT_FALSE(circle_blocked(w, a.position, a.radius));
  }
}

TEST(WorldGeneration, TextureIdsComeFromKindPools) {
  const auto w = generate_world(5);
  for (std::size_t i = 0; i < w.tiles.size(); ++i) {
    const auto c = textures::category(w.texture[i]);
    switch (w.tiles[i]) {
      case TileKind::Wall: EXPECT_EQ(c, textures::Category::Wall); break;
      case TileKind::Floor: EXPECT_EQ(c, textures::Category::Floor); break;
      case TileKind::EnvHazard: EXPECT_EQ(c, textures::Category::Hazard); break;
      case TileKind::LowObstacle: EXPECT_EQ(c, textures::Category::LowObstacle); break;
    }
  }
}

TEST(WorldGeneration, RejectsBadParams) {
  WorldParams p;
  p.tiles_w = 8;
  EXPECT_THROW(generate_world(1, p), Error);
  p = {};
  p.hazard_density = 1.5;
  EXPECT_THROW(generate_world(1, p), Error);
}

TEST(WorldJson, RoundTrip) {
  const auto w = generate_world(11);
  EXPECT_EQ(world_from_json(world_to_json(w)), w);
}

TEST(WorldJson, UnknownParamKeyIsNamed) {
  auto j = world_to_json(generate_world(11));
  j["params"]["bogus"] = 1;
  try {
    world_from_json(j);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Step, ForwardInOpenFloor) {
  auto w = open_room();
  AgentState a;
  a.pose = w.spawn;
  const auto r = step(w, a, Action::Forward);
  EXPECT_NEAR(distance(r.agent.pose.position(), a.pose.position()), 16.0, 1e-12);
  EXPECT_EQ(r.event.damage, 0);
  EXPECT_FALSE(r.event.blocked);
}

TEST(Step, ForwardIntoWallIsBlocked) {
  auto w = open_room();
  AgentState a;
  // Body edge 8 gu from the east wall at x = 9 tiles.
  a.pose = {9 * kTileSize - 16 - 8, 2.5 * kTileSize, 0.0};
  a.pose.x += 8;  // now flush against the wall
  const auto r = step(w, a, Action::Forward);
  EXPECT_LT(distance(r.agent.pose.position(), a.pose.position()), 1.0);
  EXPECT_TRUE(r.event.blocked);
}

TEST(Step, TurnsAreExactlyFifteenDegrees) {
  auto w = open_room();
  AgentState a;
  a.pose = w.spawn;
  const auto l = step(w, a, Action::TurnLeft);
  EXPECT_NEAR(l.agent.pose.theta, deg_to_rad(15), 1e-12);
  EXPECT_EQ(l.agent.pose.position(), a.pose.position());
  const auto r = step(w, a, Action::TurnRight);
  EXPECT_NEAR(r.agent.pose.theta, -deg_to_rad(15), 1e-12);
}

TEST(Step, ActorContactCostsFour) {
  auto w = open_room();
  DynamicActor act;
  act.position = w.spawn.position() + Vec2{30, 0};
  act.speed = 0;
  w.actors.push_back(act);
  AgentState a;
  a.pose = w.spawn;
  const auto r = step(w, a, Action::TurnLeft);
  EXPECT_EQ(r.event.damage, damage::kDynamicContact);
}

TEST(Step, HazardTileCostsTwentyAndCombinedTwentyFour) {
  auto w = world_from_ascii({"#####", "#.~.#", "#####"}, {2.5 * kTileSize, 1.5 * kTileSize, 0.0});
  AgentState a;
  a.pose = w.spawn;
  EXPECT_EQ(step(w, a, Action::TurnLeft).event.damage, damage::kEnvironmental);
  DynamicActor act;
  act.position = w.spawn.position();
  act.speed = 0;
  w.actors.push_back(act);
  EXPECT_EQ(step(w, a, Action::TurnLeft).event.damage, 24);
}

TEST(Step, LowObstacleBlocksBodies) {
  auto w = world_from_ascii({"######", "#..o.#", "######"}, {1.5 * kTileSize, 1.5 * kTileSize, 0.0});
  AgentState a;
  a.pose = w.spawn;
  bool blocked = false;
  for (int i = 0; i < 6; ++i) {
    auto r = step(w, a, Action::Forward);
    a = r.agent;
    blocked = blocked || r.event.blocked;
  }
  EXPECT_TRUE(blocked);
  EXPECT_LT(a.pose.x, 3 * kTileSize);
}

TEST(Step, RandomActionsKeepInvariants) {
  auto w = generate_world(21);
  AgentState a;
  a.pose = w.spawn;
  Rng rng(4);
  std::int64_t dmg = 0;
  for (int t = 0; t < 2000; ++t) {
    const auto act = static_cast<Action>(rng.uniform_int(0, 2));
    const auto prev = a;
    const auto r = step(w, a, act);
    a = r.agent;
    dmg += r.event.damage;
    ASSERT_FALSE(circle_blocked(w, a.pose.position(), a.radius));
    ASSERT_TRUE(r.event.damage == 0 || r.event.damage == 4 || r.event.damage == 20 || r.event.damage == 24);
    ASSERT_GE(a.cumulative_damage, prev.cumulative_damage);
    if (act != Action::Forward) {
      ASSERT_FALSE(r.event.blocked);
    }
  }
  EXPECT_EQ(dmg, a.cumulative_damage);
  EXPECT_EQ(a.step_count, 2000);
}

TEST(Step, SameActionsSameTrace) {
  auto run = [] {
    auto w = generate_world(33);
    AgentState a;
    a.pose = w.spawn;
    Rng rng(9);
    std::vector<StepEvent> events;
    for (int t = 0; t < 300; ++t) {
      const auto r = step(w, a, static_cast<Action>(rng.uniform_int(0, 2)));
      a = r.agent;
      events.push_back(r.event);
    }
    return std::pair{a, events};
  };
  EXPECT_EQ(run(), run());
}

TEST(Actors, SealedCellNeverMoves) {
  const auto w = world_from_ascii({"###", "#.#", "###"}, {1.5 * kTileSize, 1.5 * kTileSize, 0.0});
  DynamicActor a;
  a.position = WorldMap::tile_center(1, 1);
  a.radius = 30;
  for (int i = 0; i < 50; ++i) {
    a = actor_policy_step(a, w);
    EXPECT_EQ(a.position, WorldMap::tile_center(1, 1));
  }
}

TEST(Actors, RandomWalkDeterministic) {
  const auto w = generate_world(3);
  DynamicActor a;
  a.position = w.spawn.position();
  a.policy_seed = 12;
  auto b = a;
  for (int i = 0; i < 100; ++i) {
    a = actor_policy_step(a, w);
    b = actor_policy_step(b, w);
    ASSERT_EQ(a.position, b.position);
    ASSERT_FALSE(circle_blocked(w, a.position, a.radius));
  }
}

TEST(Actors, PatrolReturnsAfterLoop) {
  auto w = open_room();
  DynamicActor a;
  a.policy = ActorPolicy::Patrol;
  const Vec2 c = WorldMap::tile_center(3, 2);
  a.position = c;
  a.waypoints = {c + Vec2{64, 0}, c + Vec2{64, 64}, c + Vec2{0, 64}, c};
  // 4 legs of 64 gu at 8 gu per step.
  for (int i = 0; i < 32; ++i) a = actor_policy_step(a, w);
  EXPECT_NEAR(distance(a.position, c), 0.0, 1e-9);
}
