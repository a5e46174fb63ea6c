#include <gtest/gtest.h>

#include "affordance/selfsup.hpp"

using namespace affordance;

namespace {

WorldMap open_hall() {
  return world_from_ascii({"##############", "#............#", "#............#", "#............#", "#............#",
                           "#............#", "##############"},
                          {1.5 * kTileSize, 3.5 * kTileSize, 0.0});
}

SamplingConfig noiseless() {
  SamplingConfig c;
  c.odometry_noise = 0.0;
  return c;
}

TrajectoryStep fake_step(Pose p, StepEvent ev = {}) {
  TrajectoryStep s;
  s.observation.pose_odom = p;
  s.observation.pose_true = p;
  s.true_after = p;
  s.odom_after = p;
  s.event = ev;
  return s;
}

// One-frame log looking from `p`.
TrajectoryLog single_frame(const WorldMap& w, Pose p) {
  TrajectoryLog log;
  auto s = fake_step(p);
  s.observation = render(w, p);
  s.observation.pose_odom = p;
  log.steps.push_back(std::move(s));
  return log;
}

std::size_t count_label(const LabeledSample& s, std::uint8_t tag) {
  return static_cast<std::size_t>(std::count(s.label.begin(), s.label.end(), tag));
}

}  // namespace

TEST(SamplingEpisode, OpenFloorGoalAhead) {
  const auto w = open_hall();
  const Pose start = w.spawn;
  const auto log = run_waypoint_episode(w, start, {start.position() + Vec2{128, 0}}, 1, noiseless());
  ASSERT_GE(log.steps.size(), 6u);
  ASSERT_LE(log.steps.size(), 9u);
  for (const auto& s : log.steps) {
    EXPECT_EQ(s.action, Action::Forward);
    EXPECT_EQ(s.event.damage, 0);
  }
  for (std::size_t t = 0; t < log.steps.size(); ++t) EXPECT_EQ(log.steps[t].observation.step_index, t);
}

TEST(SamplingEpisode, MonsterOnTheOnlyPath) {
  auto w = world_from_ascii({"##########", "#........#", "##########"}, {1.5 * kTileSize, 1.5 * kTileSize, 0.0});
  DynamicActor m;
  m.position = WorldMap::tile_center(5, 1);
  m.speed = 0;
  w.actors.push_back(m);
  const auto log = run_waypoint_episode(w, w.spawn, {WorldMap::tile_center(8, 1)}, 2, noiseless());
  ASSERT_FALSE(log.steps.empty());
  EXPECT_TRUE(std::any_of(log.steps.begin(), log.steps.end(), [](const auto& s) { return s.event.damage > 0; }));
}

TEST(SamplingEpisode, SingleStepBudget) {
  const auto w = generate_world(3);
  Rng rng(1);
  EXPECT_EQ(run_sampling_episode(w, rng, 1).steps.size(), 1u);
  EXPECT_THROW(run_sampling_episode(w, rng, 0), Error);
}

TEST(SamplingEpisode, GoalWithinAnnulus) {
  const auto w = generate_world(3);
  Rng rng(2);
  const SamplingConfig cfg;
  for (int i = 0; i < 200; ++i) {
    const Vec2 c = w.spawn.position();
    const Vec2 g = random_goal_near(w, c, rng, cfg);
    EXPECT_LE(distance(g, c), cfg.goal_max + 1e-9);
    EXPECT_GE(g.x, 0.0);
    EXPECT_LE(g.y, w.height * kTileSize);
  }
}

TEST(WorldLabels, TenCleanStepsGiveTenPositives) {
  TrajectoryLog log;
  for (int i = 0; i < 10; ++i) log.steps.push_back(fake_step({16.0 * i, 0, 0}));
  const auto labels = extract_world_labels(log);
  ASSERT_EQ(labels.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(labels[static_cast<std::size_t>(i)].polarity, Polarity::Navigable);
    EXPECT_EQ(labels[static_cast<std::size_t>(i)].radius, 16.0);
    EXPECT_EQ(labels[static_cast<std::size_t>(i)].source_step, i);
  }
}

TEST(WorldLabels, NegativeRadiusScalesWithDamage) {
  TrajectoryLog log;
  StepEvent hit;
  hit.damage = 4;
  hit.contact_position = {5, 6};
  log.steps.push_back(fake_step({0, 0, 0}, hit));
  StepEvent bump;
  bump.blocked = true;
  bump.contact_position = {7, 8};
  log.steps.push_back(fake_step({0, 0, 0}, bump));
  const auto labels = extract_world_labels(log);
  ASSERT_EQ(labels.size(), 4u);
  EXPECT_EQ(labels[1].polarity, Polarity::NonNavigable);
  EXPECT_DOUBLE_EQ(labels[1].radius, 32.0);
  EXPECT_EQ(labels[1].center, (Vec2{5, 6}));
  EXPECT_DOUBLE_EQ(labels[3].radius, 16.0);
  EXPECT_EQ(labels[3].source_step, 1);
  EXPECT_DOUBLE_EQ(negative_radius(20), 64.0);
  EXPECT_DOUBLE_EQ(negative_radius(24), 64.0);
}

TEST(WorldLabels, ContactMovesIntoOdometryFrame) {
  TrajectoryLog log;
  StepEvent hit;
  hit.damage = 4;
  hit.contact_position = {110, 0};
  auto s = fake_step({100, 0, 0}, hit);
  s.odom_after = {0, 50, kPi / 2};
  log.steps.push_back(s);
  const auto labels = extract_world_labels(log);
  // 10 gu ahead of the true pose becomes 10 gu ahead of the odometry pose.
  EXPECT_NEAR(labels[1].center.x, 0.0, 1e-9);
  EXPECT_NEAR(labels[1].center.y, 60.0, 1e-9);
}

TEST(Backproject, OccludedDiscGivesNothing) {
  auto w = world_from_ascii({"###########", "#.........#", "#.........#", "#....#....#", "#.........#",
                             "#.........#", "###########"},
                            {1.5 * kTileSize, 3.5 * kTileSize, 0.0});
  const auto log = single_frame(w, w.spawn);
  const std::vector<WorldLabel> hidden{{WorldMap::tile_center(7, 3), 16.0, Polarity::Navigable, 0}};
  EXPECT_TRUE(backproject_labels(log, hidden).empty());
}

TEST(Backproject, VisibleDiscStaysInsideRadius) {
  const auto w = open_hall();
  const auto log = single_frame(w, w.spawn);
  const WorldLabel l{w.spawn.position() + Vec2{64, 0}, 16.0, Polarity::Navigable, 0};
  const auto out = backproject_labels(log, {l});
  ASSERT_EQ(out.size(), 1u);
  const auto& s = out[0];
  ASSERT_GT(count_label(s, pixel_label::kNavigable), 10u);
  int u_lo = 1 << 20, u_hi = -1;
  for (std::size_t i = 0; i < s.label.size(); ++i) {
    if (s.label[i] == pixel_label::kUnknown) {
      EXPECT_EQ(s.weight[i], 0.0f);
      continue;
    }
    EXPECT_GT(s.weight[i], 0.0f);
    EXPECT_LE(distance(odom_ground_point(s.observation, i), l.center), l.radius + 8.0);
    u_lo = std::min(u_lo, static_cast<int>(i % 160));
    u_hi = std::max(u_hi, static_cast<int>(i % 160));
  }
  // A single blob around the image center.
  EXPECT_LT(u_lo, 80);
  EXPECT_GT(u_hi, 80);
}

TEST(Backproject, WeightIsInverseDistance) {
  const auto w = open_hall();
  const auto log = single_frame(w, w.spawn);
  const WorldLabel l{w.spawn.position() + Vec2{96, 0}, 32.0, Polarity::Navigable, 0};
  const auto s = backproject_labels(log, {l}).at(0);
  bool near_one = false, near_half = false;
  for (std::size_t i = 0; i < s.label.size(); ++i) {
    if (s.label[i] == pixel_label::kUnknown) continue;
    const double d = distance(odom_ground_point(s.observation, i), l.center);
    EXPECT_NEAR(s.weight[i], 1.0 / std::max(1.0, d / 8.0), 1e-6);
    near_one = near_one || s.weight[i] == 1.0f;
    near_half = near_half || std::abs(d - 16.0) < 1.0;
  }
  EXPECT_TRUE(near_one);
  EXPECT_TRUE(near_half);
}

TEST(Backproject, NegativeWinsConflicts) {
  const auto w = open_hall();
  const auto log = single_frame(w, w.spawn);
  const Vec2 c = w.spawn.position() + Vec2{80, 0};
  const auto s = backproject_labels(log, {{c, 24.0, Polarity::Navigable, 0}, {c, 16.0, Polarity::NonNavigable, 0}}).at(0);
  for (std::size_t i = 0; i < s.label.size(); ++i)
    if (s.label[i] != pixel_label::kUnknown && distance(odom_ground_point(s.observation, i), c) <= 15.0) {
      EXPECT_EQ(s.label[i], pixel_label::kNonNavigable);
    }
  EXPECT_GT(count_label(s, pixel_label::kNavigable), 0u);
}

TEST(Backproject, HorizonBoundsSources) {
  const auto w = open_hall();
  const auto log = single_frame(w, w.spawn);
  const WorldLabel late{w.spawn.position() + Vec2{64, 0}, 16.0, Polarity::Navigable, 21};
  EXPECT_TRUE(backproject_labels(log, {late}).empty());
  LabelConfig cfg;
  cfg.horizon = 0;
  EXPECT_THROW(backproject_labels(log, {late}, cfg), Error);
}

TEST(Backproject, LabelsAreSoundOnGeneratedWorlds) {
  Rng rng(6);
  std::size_t labeled = 0, bad = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto w = generate_world(seed);
    for (int e = 0; e < 2; ++e) {
      const auto log = run_sampling_episode(w, rng);
      const auto labels = extract_world_labels(log);
      for (const auto& s : backproject_labels(log, labels)) {
        const int t = static_cast<int>(s.observation.step_index);
        for (std::size_t i = 0; i < s.label.size(); ++i) {
          if (s.label[i] == pixel_label::kUnknown) continue;
          ++labeled;
          const Polarity want = s.label[i] == pixel_label::kNavigable ? Polarity::Navigable : Polarity::NonNavigable;
          const Vec2 g = odom_ground_point(s.observation, i);
          const bool ok = std::any_of(labels.begin(), labels.end(), [&](const WorldLabel& l) {
            return l.polarity == want && l.source_step >= t && l.source_step <= t + 20 && distance(g, l.center) <= l.radius + 1.0;
          });
          bad += !ok;
        }
      }
    }
  }
  EXPECT_GT(labeled, 0u);
  EXPECT_EQ(bad, 0u);
}

TEST(Backproject, DenseLabelsOnOpenFloor) {
  const auto w = open_hall();
  const auto log = run_waypoint_episode(w, w.spawn, {w.spawn.position() + Vec2{512, 0}}, 3, noiseless());
  ASSERT_GE(log.steps.size(), 10u);
  const auto samples = backproject_labels(log, extract_world_labels(log));
  ASSERT_FALSE(samples.empty());
  double frac = 0;
  for (const auto& s : samples) frac += static_cast<double>(s.labeled_count()) / static_cast<double>(s.label.size());
  EXPECT_GT(frac / static_cast<double>(samples.size()), 0.01);
}

TEST(Backproject, ApproachingActorMarkedBeforeContact) {
  auto w = open_hall();
  const Vec2 a = WorldMap::tile_center(6, 2), b = WorldMap::tile_center(6, 3);
  DynamicActor m;
  m.policy = ActorPolicy::Patrol;
  m.position = a;
  m.speed = 4;
  m.waypoints = {b};
  w.actors.push_back(m);
  const auto log = run_waypoint_episode(w, w.spawn, {WorldMap::tile_center(11, 3)}, 4, noiseless());
  std::size_t hit = log.steps.size();
  for (std::size_t t = 0; t < log.steps.size() && hit == log.steps.size(); ++t)
    if (log.steps[t].event.damage > 0) hit = t;
  ASSERT_LT(hit, log.steps.size());
  ASSERT_GT(hit, 3u);
  const auto samples = backproject_labels(log, extract_world_labels(log));
  bool marked = false;
  for (const auto& s : samples) {
    if (s.observation.step_index >= hit) continue;
    for (std::size_t i = 0; i < s.label.size(); ++i)
      marked = marked || (s.label[i] == pixel_label::kNonNavigable && distance(odom_ground_point(s.observation, i), b) < 48.0);
  }
  EXPECT_TRUE(marked);
}

TEST(DatasetIo, RoundTrip) {
  const auto samples = collect_random_samples({generate_world(9), generate_world(10)}, 100, 5);
  ASSERT_EQ(samples.size(), 100u);
  EXPECT_EQ(decode_dataset(encode_dataset(samples)), samples);
}

TEST(DatasetIo, TruncationIsAnError) {
  const auto samples = collect_random_samples({generate_world(9)}, 3, 5);
  auto bytes = encode_dataset(samples);
  const std::size_t cut = bytes.size() / 2;
  bytes.resize(cut);
  try {
    decode_dataset(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_LE(e.offset(), cut);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(DatasetIo, EmptyList) {
  const auto bytes = encode_dataset({});
  EXPECT_EQ(bytes.size(), 10u);
  EXPECT_TRUE(decode_dataset(bytes).empty());
}

TEST(DatasetIo, DeterministicSampling) {
  EXPECT_EQ(collect_random_samples({generate_world(9)}, 20, 8), collect_random_samples({generate_world(9)}, 20, 8));
}
