#include <gtest/gtest.h>

#include "affordance/agents.hpp"

using namespace affordance;

namespace {

// Reads semantics straight off the texture id: a stand-in for a well-trained model.
Predictor texture_oracle() {
  return [](const Observation& o) {
    PredictionMap m = constant_prediction(o, 0.5);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const auto c = textures::category(o.texture[i]);
      const double p = (c == textures::Category::Hazard || c == textures::Category::LowObstacle || c == textures::Category::Actor)
                           ? 0.02
                           : 0.98;
      m.prob[i] = static_cast<float>(p);
      m.entropy[i] = static_cast<float>(bernoulli_entropy(p));
    }
    return m;
  };
}

WorldMap room_with_block(char kind) {
  std::vector<std::string> rows(11, "#............#");
  rows.front() = rows.back() = std::string(14, '#');
  for (int y = 4; y <= 6; ++y)
    for (int x = 5; x <= 7; ++x) rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = kind;
  return world_from_ascii(rows, {2.5 * kTileSize, 5.5 * kTileSize, 0.0});
}

WorldMap two_rooms() {
  std::vector<std::string> rows(10, "#........#........#");
  rows.front() = rows.back() = std::string(19, '#');
  rows[5][9] = '.';
  return world_from_ascii(rows, {3.5 * kTileSize, 4.5 * kTileSize, 0.0});
}

double passable_area(const WorldMap& w) {
  return static_cast<double>(std::count(w.tiles.begin(), w.tiles.end(), TileKind::Floor)) * kTileSize * kTileSize;
}

}  // namespace

TEST(Modes, StringRoundTrip) {
  for (auto m : {AgentMode::ExploreRandom, AgentMode::ExploreFrontierGeo, AgentMode::ExploreFrontierAff, AgentMode::Navigate})
    EXPECT_EQ(mode_from_string(to_string(m)), m);
  EXPECT_THROW(mode_from_string("teleport"), Error);
  EXPECT_EQ(outcome_from_string("Stuck"), Outcome::Stuck);
}

TEST(Exploration, RandomUsesWholeBudget) {
  WorldParams p;
  p.hazard_density = 0;
  p.actor_count = 0;
  const auto w = generate_world(4, p);
  const auto m = run_exploration(w, EpisodeConfig::exploration(AgentMode::ExploreRandom, 1));
  EXPECT_EQ(m.outcome, Outcome::BudgetExhausted);
  ASSERT_EQ(m.records.size(), 2000u);
  for (std::size_t t = 0; t < m.records.size(); ++t) EXPECT_EQ(m.records[t].step, static_cast<int>(t));
  EXPECT_EQ(m.damage(), 0);
}

TEST(Exploration, FrontierCoversSealedRooms) {
  const auto w = two_rooms();
  auto cfg = EpisodeConfig::exploration(AgentMode::ExploreFrontierGeo, 3);
  cfg.step_budget = 1500;
  const auto m = run_exploration(w, cfg);
  const double truth = passable_area(w);
  EXPECT_NEAR(m.terminal_coverage(), truth, 0.1 * truth) << to_string(m.outcome);
  EXPECT_EQ(m.damage(), 0);
}

TEST(Exploration, ConstantModelMatchesGeometricMode) {
  const auto w = generate_world(6);
  auto geo = EpisodeConfig::exploration(AgentMode::ExploreFrontierGeo, 9);
  geo.step_budget = 300;
  auto aff = geo;
  aff.mode = AgentMode::ExploreFrontierAff;
  aff.model = [](const Observation& o) { return constant_prediction(o, 0.5); };
  const auto a = run_exploration(w, geo), b = run_exploration(w, aff);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    ASSERT_EQ(a.records[t].pose, b.records[t].pose) << t;
    ASSERT_EQ(a.records[t].coverage, b.records[t].coverage) << t;
  }
  EXPECT_EQ(a.outcome, b.outcome);
}

TEST(Exploration, NeverEndsStuck) {
  WorldParams p;
  p.low_obstacle_density = 0.15;
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    auto cfg = EpisodeConfig::exploration(AgentMode::ExploreFrontierGeo, seed);
    cfg.step_budget = 300;
    const auto m = run_exploration(generate_world(seed, p), cfg);
    EXPECT_NE(m.outcome, Outcome::Stuck) << seed;
    if (m.outcome == Outcome::BudgetExhausted) {
      EXPECT_EQ(m.steps(), 300) << seed;
    }
  }
}

TEST(Exploration, AffordanceModeNeedsModel) {
  EXPECT_THROW(run_exploration(generate_world(1), EpisodeConfig::exploration(AgentMode::ExploreFrontierAff, 1)), Error);
  EXPECT_THROW(run_exploration(generate_world(1), EpisodeConfig::navigation({64, 0}, 1)), Error);
}

TEST(Exploration, BudgetsAreEnforced) {
  WorldParams p;
  p.hazard_density = 0.3;
  p.actor_count = 6;
  const auto w = generate_world(8, p);
  auto cfg = EpisodeConfig::exploration(AgentMode::ExploreRandom, 2);
  cfg.step_budget = 400;
  cfg.damage_budget = 30;
  const auto m = run_exploration(w, cfg);
  EXPECT_LE(m.steps(), 400);
  if (m.outcome == Outcome::DamageExhausted) {
    EXPECT_GE(m.damage(), 30);
    EXPECT_LT(m.damage(), 30 + 24);
  } else {
    EXPECT_LT(m.damage(), 30);
  }
  for (std::size_t t = 1; t < m.records.size(); ++t) EXPECT_LE(m.records[t].cum_damage - m.records[t - 1].cum_damage, 24);
}

TEST(Exploration, MetricsCsvAndSummary) {
  auto cfg = EpisodeConfig::exploration(AgentMode::ExploreRandom, 4);
  cfg.step_budget = 5;
  const auto m = run_exploration(generate_world(2), cfg);
  const auto csv = metrics_csv(m);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.rfind("step,coverage_gu2,cum_damage,x,y,theta\n", 0), 0u);
  const auto j = metrics_summary(m);
  EXPECT_EQ(j["steps"], 5);
  EXPECT_EQ(j["outcome"], "BudgetExhausted");
  EXPECT_FALSE(j.contains("wall_time_s"));
}

TEST(Navigation, OpenFloorGoal) {
  std::vector<std::string> rows(7, "#..........#");
  rows.front() = rows.back() = std::string(12, '#');
  const auto w = world_from_ascii(rows, {2.5 * kTileSize, 3.5 * kTileSize, 0.0});
  const auto m = run_navigation(w, EpisodeConfig::navigation({10 * kCellSize, 0}, 1));
  EXPECT_EQ(m.outcome, Outcome::GoalReached);
  EXPECT_EQ(m.damage(), 0);
  EXPECT_TRUE(success_within(m, 0));
}

TEST(Navigation, HazardBlockDetour) {
  const auto w = room_with_block('~');
  const Vec2 goal{8 * kTileSize, 0};
  const auto geo = run_navigation(w, EpisodeConfig::navigation(goal, 5));
  auto cfg = EpisodeConfig::navigation(goal, 5);
  cfg.model = texture_oracle();
  const auto aff = run_navigation(w, cfg);
  EXPECT_GE(geo.damage(), 20);
  EXPECT_EQ(aff.outcome, Outcome::GoalReached);
  EXPECT_EQ(aff.damage(), 0);
}

TEST(Navigation, LowBlockDetour) {
  const auto w = room_with_block('o');
  const Vec2 goal{8 * kTileSize, 0};
  const auto geo = run_navigation(w, EpisodeConfig::navigation(goal, 6));
  auto cfg = EpisodeConfig::navigation(goal, 6);
  cfg.model = texture_oracle();
  const auto aff = run_navigation(w, cfg);
  EXPECT_EQ(geo.outcome, Outcome::Stuck);
  EXPECT_EQ(aff.outcome, Outcome::GoalReached);
}

TEST(ActiveLoop, ScheduleArithmetic) {
  const std::vector<WorldMap> worlds{generate_world(21), generate_world(22)};
  ActiveConfig cfg;
  cfg.schedule = {20, 10, 2};
  cfg.train.epochs = 2;
  cfg.seed = 3;
  const auto r = active_learning_loop(worlds, cfg);
  EXPECT_EQ(r.dataset_sizes, (std::vector<std::size_t>{20, 30, 40}));
  EXPECT_EQ(r.dataset.size(), 40u);
  EXPECT_EQ(r.models_trained, 3);
  ASSERT_FALSE(r.traces.empty());
  for (const auto& t : r.traces) {
    EXPECT_GE(t.iteration, 1);
    if (t.straight_feasible) {
      EXPECT_GE(t.path_entropy, t.straight_entropy - 1e-9);
    }
  }
}

TEST(ActiveLoop, NoBatchesIsPlainTraining) {
  const std::vector<WorldMap> worlds{generate_world(23)};
  ActiveConfig cfg;
  cfg.schedule = {15, 0, 4};
  cfg.train.epochs = 3;
  cfg.seed = 5;
  const auto r = active_learning_loop(worlds, cfg);
  const auto data = collect_random_samples(worlds, 15, derive_seed(5, stream_id("seed-phase")), cfg.sampling, cfg.labels);
  EXPECT_EQ(r.dataset, data);
  EXPECT_EQ(r.models_trained, 1);
  EXPECT_EQ(r.model, train(data, cfg.train).params);
}

TEST(ActiveLoop, BadScheduleThrows) {
  ActiveConfig cfg;
  cfg.schedule = {0, 10, 1};
  EXPECT_THROW(active_learning_loop({generate_world(1)}, cfg), Error);
  EXPECT_THROW(active_learning_loop({}, ActiveConfig{}), Error);
}

TEST(Evaluation, OracleScoresPerfectly) {
  WorldParams p;
  p.hazard_density = 0.2;
  const auto w = generate_world(30, p);
  Rng rng(1);
  std::vector<EvalFrame> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(make_eval_frame(w, random_start_pose(w, rng, 16)));
  const auto s = hazard_pixel_score(texture_oracle(), frames);
  EXPECT_GT(s.tp, 0u);
  EXPECT_EQ(s.fn, 0u);
  EXPECT_EQ(s.fp, 0u);
  EXPECT_DOUBLE_EQ(s.f1(), 1.0);
  const auto none = hazard_pixel_score([](const Observation& o) { return constant_prediction(o, 0.9); }, frames);
  EXPECT_EQ(none.f1(), 0.0);
}
