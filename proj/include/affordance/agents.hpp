// Closed-loop episode runners (random, frontier exploration, goal navigation) and the
// iterated active sampling / training loop.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/common.hpp"
#include "affordance/mapping.hpp"
#include "affordance/navmodel.hpp"
#include "affordance/planning.hpp"
#include "affordance/selfsup.hpp"
#include "affordance/sensor.hpp"
#include "affordance/world.hpp"

namespace affordance {

enum class AgentMode : std::uint8_t { ExploreRandom, ExploreFrontierGeo, ExploreFrontierAff, Navigate };
enum class Outcome : std::uint8_t { BudgetExhausted, DamageExhausted, GoalReached, Stuck, Explored };

inline std::string to_string(AgentMode m) {
  switch (m) {
    case AgentMode::ExploreRandom: return "random";
    case AgentMode::ExploreFrontierGeo: return "frontier-geo";
    case AgentMode::ExploreFrontierAff: return "frontier-aff";
    case AgentMode::Navigate: return "navigate";
  }
  return "?";
}

inline AgentMode mode_from_string(const std::string& s) {
  if (s == "random") return AgentMode::ExploreRandom;
  if (s == "frontier-geo") return AgentMode::ExploreFrontierGeo;
  if (s == "frontier-aff") return AgentMode::ExploreFrontierAff;
  if (s == "navigate") return AgentMode::Navigate;
  throw Error("unknown mode: " + s);
}

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::BudgetExhausted: return "BudgetExhausted";
    case Outcome::DamageExhausted: return "DamageExhausted";
    case Outcome::GoalReached: return "GoalReached";
    case Outcome::Stuck: return "Stuck";
    case Outcome::Explored: return "Explored";
  }
  return "?";
}

inline Outcome outcome_from_string(const std::string& s) {
  for (auto o : {Outcome::BudgetExhausted, Outcome::DamageExhausted, Outcome::GoalReached, Outcome::Stuck, Outcome::Explored})
    if (to_string(o) == s) return o;
  throw Error("unknown outcome: " + s);
}

struct StuckParams {
  int blocked_run = 20;     // consecutive blocked forward steps
  int window = 150;         // steps
  double min_progress = 48; // gu the agent must move away from where the window began
  int no_plan_limit = 30;   // consecutive steps without any usable plan
};

struct EpisodeConfig {
  AgentMode mode = AgentMode::ExploreFrontierGeo;
  int step_budget = 2000;
  int damage_budget = 100;
  int replan_cadence = 10;
  std::optional<Predictor> model;  // affordance predictor; required by frontier-aff
  std::optional<Vec2> goal;        // Navigate: offset from the start position, world axes, gu
  std::uint64_t seed = 0;
  double odometry_noise = 0.02;
  double goal_radius = 24.0;
  double lookahead = 16.0;
  double aim_tolerance = deg_to_rad(7.5);
  Kinematics kinematics;
  CameraModel camera;
  CostParams cost;
  PlanningParams planning;
  StuckParams stuck;
  std::function<void(const std::string&)> debug;  // optional trace sink

  static EpisodeConfig exploration(AgentMode m, std::uint64_t seed) {
    EpisodeConfig c;
    c.mode = m;
    c.seed = seed;
    return c;
  }
  static EpisodeConfig navigation(Vec2 goal, std::uint64_t seed) {
    EpisodeConfig c;
    c.mode = AgentMode::Navigate;
    c.step_budget = 1000;
    c.goal = goal;
    c.seed = seed;
    return c;
  }
};

struct StepRecord {
  int step = 0;
  double coverage = 0.0;
  int cum_damage = 0;
  Pose pose;  // simulator pose after the step
};

struct EpisodeMetrics {
  std::vector<StepRecord> records;
  Outcome outcome = Outcome::BudgetExhausted;
  std::string mode;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;  // not serialised

  double terminal_coverage() const { return records.empty() ? 0.0 : records.back().coverage; }
  int damage() const { return records.empty() ? 0 : records.back().cum_damage; }
  int steps() const { return static_cast<int>(records.size()); }
};

namespace detail {

/// Action that steers `pose` toward `target`.
inline Action steer(const Pose& pose, Vec2 target, double tolerance) {
  const Vec2 d = target - pose.position();
  const double err = wrap_angle(std::atan2(d.y, d.x) - pose.theta);
  if (std::abs(err) > tolerance) return err > 0 ? Action::TurnLeft : Action::TurnRight;
  return Action::Forward;
}

struct PathFollower {
  std::vector<Vec2> points;  // odometry frame
  std::size_t progress = 0;

  bool empty() const { return points.empty(); }
  void reset(std::vector<Vec2> p) {
    points = std::move(p);
    progress = 0;
  }
  bool finished(Vec2 at, double radius) const { return points.empty() || distance(at, points.back()) < radius; }

  Vec2 target(Vec2 at, double lookahead) {
    // Advance past points already close by, then look ahead.
    std::size_t nearest = progress;
    double best = kInfCost;
    for (std::size_t i = progress; i < points.size() && i < progress + 12; ++i) {
      const double d = distance(at, points[i]);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    progress = nearest;
    for (std::size_t i = progress; i < points.size(); ++i)
      if (distance(at, points[i]) >= lookahead) return points[i];
    return points.back();
  }
};

}  // namespace detail

/// Shared closed loop for exploration and navigation.
inline EpisodeMetrics run_episode(WorldMap world, const Pose& start, const EpisodeConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const bool random_mode = cfg.mode == AgentMode::ExploreRandom;
  const bool navigate = cfg.mode == AgentMode::Navigate;
  if (cfg.mode == AgentMode::ExploreFrontierAff && !cfg.model) throw Error("frontier-aff requires a model");
  if (navigate && !cfg.goal) throw Error("navigation requires a goal");
  if (cfg.step_budget < 0 || cfg.replan_cadence < 1) throw Error("invalid episode configuration");

  EpisodeMetrics m;
  m.mode = to_string(cfg.mode);
  m.seed = cfg.seed;
  Rng noise(derive_seed(cfg.seed, stream_id("odometry")));
  Rng actions(derive_seed(cfg.seed, stream_id("random-actions")));

  AgentState agent;
  agent.pose = start;
  agent.radius = cfg.kinematics.agent_radius;
  Pose odom = start;
  GlobalMap gmap(start);

  const Vec2 goal_true = navigate ? start.position() + *cfg.goal : Vec2{};
  const auto goal_cell = [&] {
    const auto [x, y] = gmap.cell_of(start.position() + (navigate ? *cfg.goal : Vec2{}));
    return Cell{x, y};
  }();

  detail::PathFollower follower;
  Cell current_goal{};
  bool has_goal = false;
  int blocked_run = 0;
  int no_plan = 0;
  bool trigger = true;
  m.outcome = Outcome::BudgetExhausted;

  for (int t = 0; t < cfg.step_budget; ++t) {
    if (navigate && distance(agent.pose.position(), goal_true) < cfg.goal_radius) {
      m.outcome = Outcome::GoalReached;
      break;
    }

    Observation obs = render(world, agent.pose, cfg.camera);
    obs.pose_odom = odom;
    obs.step_index = static_cast<std::uint32_t>(t);
    const PredictionMap pred = cfg.model && cfg.mode != AgentMode::ExploreFrontierGeo ? (*cfg.model)(obs)
                                                                                     : constant_prediction(obs, cfg.cost.prior);
    const auto geo = scanline_to_geomap(obs, cfg.camera);
    const auto local = fuse(project_affordance(pred, obs, cfg.cost), geo, cfg.cost);
    update_global(gmap, local, odom, cfg.cost);

    Action action = Action::TurnLeft;
    if (random_mode) {
      action = static_cast<Action>(actions.uniform_int(0, 2));
    } else {
      const auto [ax, ay] = gmap.cell_of(odom.position());
      const Cell agent_cell{ax, ay};
      if (has_goal && !navigate && !is_frontier_cell(gmap, current_goal.x, current_goal.y)) trigger = true;
      if (follower.finished(odom.position(), kCellSize * 1.5)) trigger = true;
      if (replan_policy(t, cfg.replan_cadence, trigger)) {
        trigger = false;
        follower.reset({});
        has_goal = false;
        if (navigate) {
          const auto pg = build_planning_grid(gmap, {agent_cell, goal_cell}, cfg.cost, cfg.planning);
          auto grid = pg.grid;
          const Cell gc = pg.to_grid(goal_cell);
          if (!std::isfinite(grid.at(gc))) grid.at(gc) = cfg.cost.prior_cost();
          if (auto path = astar(grid, pg.to_grid(agent_cell), gc)) {
            std::vector<Vec2> pts;
            for (const auto& c : path->cells) {
              const Cell mc = pg.to_map(c);
              pts.push_back(gmap.cell_center(mc.x, mc.y));
            }
            follower.reset(std::move(pts));
            current_goal = goal_cell;
            has_goal = true;
          }
        } else {
          const auto frontiers = find_frontiers(gmap);
          if (frontiers.empty()) {
            m.outcome = Outcome::Explored;
            break;
          }
          const auto pg = build_planning_grid(gmap, {agent_cell}, cfg.cost, cfg.planning);
          if (auto choice = select_goal(frontiers, pg, agent_cell)) {
            std::vector<Vec2> pts;
            for (const auto& c : choice->path.cells) {
              const Cell mc = pg.to_map(c);
              pts.push_back(gmap.cell_center(mc.x, mc.y));
            }
            follower.reset(std::move(pts));
            current_goal = choice->goal.cell;
            has_goal = true;
            if (cfg.debug)
              cfg.debug("step " + std::to_string(t) + ": goal (" + std::to_string(current_goal.x) + "," +
                        std::to_string(current_goal.y) + ") cost " + std::to_string(choice->path.total_cost) +
                        " frontiers " + std::to_string(frontiers.size()));
          }
        }
        if (follower.empty()) trigger = true;
      }
      if (follower.empty()) {
        ++no_plan;
        action = Action::TurnLeft;
      } else {
        no_plan = 0;
        action = detail::steer(odom, follower.target(odom.position(), cfg.lookahead), cfg.aim_tolerance);
      }
    }

    const auto res = step(world, agent, action, cfg.kinematics);
    odom = integrate_odometry(odom, odometry_step(motion_between(agent.pose, res.agent.pose), noise, cfg.odometry_noise));
    agent = res.agent;
    m.records.push_back({t, coverage_area(gmap), static_cast<int>(agent.cumulative_damage), agent.pose});

    if (agent.cumulative_damage >= cfg.damage_budget) {
      m.outcome = Outcome::DamageExhausted;
      break;
    }
    if (random_mode) continue;
    if (res.event.blocked) {
      ++blocked_run;
      trigger = true;
    } else if (action == Action::Forward) {
      blocked_run = 0;
    }
    bool no_progress = false;
    if (static_cast<int>(m.records.size()) > cfg.stuck.window) {
      // Stuck when the agent never left a small disc during the whole window.
      const auto first = m.records.end() - cfg.stuck.window - 1;
      const Vec2 anchor = first->pose.position();
      no_progress = std::all_of(first, m.records.end(), [&](const StepRecord& r) {
        return distance(r.pose.position(), anchor) < cfg.stuck.min_progress;
      });
    }
    if (blocked_run >= cfg.stuck.blocked_run || no_progress || no_plan >= cfg.stuck.no_plan_limit) {
      if (!navigate) {
        // Exploration ends on budgets or when no frontier is left to reach; otherwise it keeps replanning.
        if (no_plan >= cfg.stuck.no_plan_limit) {
          m.outcome = Outcome::Explored;
          break;
        }
        trigger = true;
        blocked_run = 0;
        no_plan = 0;
        continue;
      }
      if (cfg.debug)
        cfg.debug("stuck at step " + std::to_string(t) + ": blocked_run=" + std::to_string(blocked_run) +
                  " no_progress=" + std::to_string(no_progress) + " no_plan=" + std::to_string(no_plan));
      m.outcome = Outcome::Stuck;
      break;
    }
  }
  if (navigate && m.outcome != Outcome::GoalReached && distance(agent.pose.position(), goal_true) < cfg.goal_radius &&
      agent.cumulative_damage < cfg.damage_budget)
    m.outcome = Outcome::GoalReached;
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

inline EpisodeMetrics run_exploration(const WorldMap& world, const EpisodeConfig& cfg) {
  if (cfg.mode == AgentMode::Navigate) throw Error("run_exploration needs an exploration mode");
  return run_episode(world, world.spawn, cfg);
}

inline EpisodeMetrics run_navigation(const WorldMap& world, const EpisodeConfig& cfg) {
  if (cfg.mode != AgentMode::Navigate) throw Error("run_navigation needs mode Navigate");
  return run_episode(world, world.spawn, cfg);
}

/// Whether the episode reached its goal without exceeding `damage_budget`.
inline bool success_within(const EpisodeMetrics& m, int damage_budget) {
  return m.outcome == Outcome::GoalReached && m.damage() <= damage_budget;
}

// ---------------------------------------------------------------------------
// Metrics I/O

inline std::string metrics_csv(const EpisodeMetrics& m) {
  std::string out = "step,coverage_gu2,cum_damage,x,y,theta\n";
  char buf[160];
  for (const auto& r : m.records) {
    std::snprintf(buf, sizeof buf, "%d,%.1f,%d,%.4f,%.4f,%.6f\n", r.step, r.coverage, r.cum_damage, r.pose.x, r.pose.y,
                  r.pose.theta);
    out += buf;
  }
  return out;
}

inline nlohmann::json metrics_summary(const EpisodeMetrics& m) {
  return {{"outcome", to_string(m.outcome)},
          {"terminal_coverage", m.terminal_coverage()},
          {"damage", m.damage()},
          {"steps", m.steps()},
          {"seed", m.seed},
          {"mode", m.mode}};
}

// ---------------------------------------------------------------------------
// Active sampling

struct ActiveSchedule {
  int seed_n = 200;
  int batch_n = 200;
  int iterations = 4;
};

struct ActiveConfig {
  ActiveSchedule schedule;
  SamplingConfig sampling;
  LabelConfig labels;
  TrainConfig train;
  FeatureSpec features;
  UncertaintyParams uncertainty;
  double min_goal_distance = 64.0;
  double max_goal_distance = 320.0;
  std::uint64_t seed = 0;
};

/// First-step plan of one active episode, kept for inspection.
struct ActivePlanTrace {
  double path_entropy = 0.0;      // mean projected entropy over planned path cells
  double straight_entropy = 0.0;  // same over the straight segment between the endpoints
  bool straight_feasible = false; // straight segment avoids every impassable cell
  int iteration = 0;
};

struct ActiveResult {
  Model model;
  std::vector<LabeledSample> dataset;
  std::vector<std::size_t> dataset_sizes;  // after phase 0 and each iteration
  std::vector<ActivePlanTrace> traces;
  int models_trained = 0;
};

namespace detail {

/// Mean per-cell entropy over the cells entered after the first one. Cells with no projected
/// pixels count at half of ln 2, the value the uncertainty cost map implies for them.
inline double mean_cell_entropy(const EgoSemMap& ent, const std::vector<Cell>& cells) {
  if (cells.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t k = 1; k < cells.size(); ++k) {
    const auto i = EgoGrid::index(cells[k].x, cells[k].y);
    s += ent.observed(i) ? ent.confidence(i) : 0.5 * std::log(2.0);
  }
  return s / static_cast<double>(cells.size() - 1);
}

inline std::vector<Cell> straight_cells(Cell goal) {
  std::vector<Cell> out;
  traverse_cells(EgoGrid::center(goal.x, goal.y), [&](int x, int y, bool) { out.push_back({x, y}); });
  return out;
}

struct ActivePlan {
  std::vector<Vec2> waypoints;  // world frame of the start pose
  ActivePlanTrace trace;
};

/// Plans the entropy-seeking path from the first observation of an episode.
inline std::optional<ActivePlan> plan_active_path(const Observation& obs, const Predictor& model, Rng& rng,
                                                  const ActiveConfig& cfg) {
  const auto pred = model(obs);
  const auto geo = scanline_to_geomap(obs, cfg.sampling.camera);
  const auto local = uncertainty_cost_map(pred, obs, geo, cfg.uncertainty);
  const auto ent = project_values(pred.entropy, pred.width, pred.height, obs, cfg.uncertainty.semantic_range);
  CostGrid grid = to_cost_grid(local);
  // Keep plans off geometric obstacles by one cell.
  CostGrid inflated = grid;
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x)
      if (std::isinf(grid.at({x, y})))
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            if (inflated.in_bounds({x + dx, y + dy})) inflated.at({x + dx, y + dy}) = kInfCost;
  const Cell start{EgoGrid::kCenter, EgoGrid::kCenter};
  inflated.at(start) = grid.at(start);

  std::vector<Cell> candidates;
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x) {
      const auto i = EgoGrid::index(x, y);
      const double d = EgoGrid::center(x, y).norm();
      if (local.sem_observed[i] && std::isfinite(inflated.cost[i]) && d >= cfg.min_goal_distance &&
          d <= cfg.max_goal_distance)
        candidates.push_back({x, y});
    }
  if (candidates.empty()) return std::nullopt;
  const auto reach = reachable_from(inflated, start);
  for (int tries = 0; tries < 16; ++tries) {
    const Cell goal = candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
    if (!reach[inflated.index(goal)]) continue;
    const auto path = astar(inflated, start, goal);
    if (!path) continue;
    ActivePlan plan;
    for (const auto& c : path->cells) plan.waypoints.push_back(to_world(obs.pose_odom, EgoGrid::center(c.x, c.y)));
    const auto line = straight_cells(goal);
    plan.trace.path_entropy = mean_cell_entropy(ent, path->cells);
    plan.trace.straight_entropy = mean_cell_entropy(ent, line);
    plan.trace.straight_feasible =
        std::all_of(line.begin(), line.end(), [&](Cell c) { return std::isfinite(inflated.at(c)); });
    return plan;
  }
  return std::nullopt;
}

}  // namespace detail

/// Appends up to `n` actively sampled frames to `out`.
inline void collect_active_samples(const std::vector<WorldMap>& worlds, std::size_t n, const Model& model, Rng& rng,
                                   int iteration, const ActiveConfig& cfg, std::vector<LabeledSample>& out,
                                   std::vector<ActivePlanTrace>& traces) {
  const Predictor predictor = model_predictor(model, cfg.features);
  std::size_t added = 0;
  for (int episode = 0; added < n; ++episode) {
    if (episode > 100000) throw Error("active sampling produced no labels");
    const auto& w = worlds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(worlds.size()) - 1))];
    const Pose start = random_start_pose(w, rng, cfg.sampling.kinematics.agent_radius);
    Observation first = render(w, start, cfg.sampling.camera);
    first.pose_true = quantize_pose(start);
    first.pose_odom = first.pose_true;
    auto plan = detail::plan_active_path(first, predictor, rng, cfg);
    std::vector<Vec2> waypoints;
    if (plan) {
      plan->trace.iteration = iteration;
      traces.push_back(plan->trace);
      waypoints = std::move(plan->waypoints);
    } else {
      waypoints = {random_goal_near(w, start.position(), rng, cfg.sampling)};
    }
    const auto log = run_waypoint_episode(w, start, waypoints, rng.bits(), cfg.sampling);
    auto samples = backproject_labels(log, extract_world_labels(log, cfg.labels), cfg.labels);
    for (auto& s : samples) {
      if (added >= n) break;
      out.push_back(std::move(s));
      ++added;
    }
  }
}

inline ActiveResult active_learning_loop(const std::vector<WorldMap>& worlds, const ActiveConfig& cfg) {
  if (worlds.empty()) throw Error("active learning needs at least one training world");
  const auto& s = cfg.schedule;
  if (s.seed_n < 1 || s.batch_n < 0 || s.iterations < 0) throw Error("invalid active-learning schedule");
  ActiveResult r;
  r.dataset = collect_random_samples(worlds, static_cast<std::size_t>(s.seed_n), derive_seed(cfg.seed, stream_id("seed-phase")),
                                     cfg.sampling, cfg.labels);
  std::vector<PreparedSample<float>> prepared;
  for (const auto& d : r.dataset) prepared.push_back(prepare_sample<float>(d, cfg.features));
  r.dataset_sizes.push_back(r.dataset.size());
  TrainConfig tc = cfg.train;
  r.model = train_prepared(prepared, tc, cfg.features).params;
  r.models_trained = 1;
  if (s.batch_n == 0) return r;
  Rng rng(derive_seed(cfg.seed, stream_id("active-phase")));
  for (int it = 1; it <= s.iterations; ++it) {
    const std::size_t before = r.dataset.size();
    collect_active_samples(worlds, static_cast<std::size_t>(s.batch_n), r.model, rng, it, cfg, r.dataset, r.traces);
    for (std::size_t k = before; k < r.dataset.size(); ++k) prepared.push_back(prepare_sample<float>(r.dataset[k], cfg.features));
    r.dataset_sizes.push_back(r.dataset.size());
    tc.seed = derive_seed(cfg.train.seed, stream_id("retrain"), static_cast<std::uint64_t>(it));
    r.model = train_prepared(prepared, tc, cfg.features).params;
    ++r.models_trained;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Held-out evaluation

struct BinaryScore {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

/// Held-out frame with per-pixel ground truth: -1 excluded, 0 plain floor, 1 hazard.
struct EvalFrame {
  Observation obs;
  std::vector<std::int8_t> truth;
};

inline EvalFrame make_eval_frame(const WorldMap& world, const Pose& pose, const CameraModel& cam = {}) {
  EvalFrame f{render(world, pose, cam), {}};
  f.truth.assign(f.obs.size(), -1);
  for (std::size_t i = 0; i < f.obs.size(); ++i) {
    if (!f.obs.ground_valid(i) || textures::category(f.obs.texture[i]) == textures::Category::Actor) continue;
    const auto k = world.kind_at(f.obs.ground(i));
    if (k == TileKind::Floor) f.truth[i] = 0;
    if (k == TileKind::EnvHazard) f.truth[i] = 1;
  }
  return f;
}

/// Hazard detection on floor and hazard pixels; predicted positive = p < 0.5.
inline BinaryScore hazard_pixel_score(const Predictor& model, const std::vector<EvalFrame>& frames) {
  BinaryScore s;
  for (const auto& f : frames) {
    const auto pred = model(f.obs);
    for (std::size_t i = 0; i < f.obs.size(); ++i) {
      if (f.truth[i] < 0) continue;
      const bool truth = f.truth[i] == 1;
      const bool guess = pred.prob[i] < 0.5f;
      if (truth && guess) ++s.tp;
      else if (!truth && guess) ++s.fp;
      else if (truth) ++s.fn;
      else ++s.tn;
    }
  }
  return s;
}

}  // namespace affordance
