// Self-supervised label harvesting: sampling episodes, world-space affordance labels and their
// back-projection into earlier camera frames, plus the AFDS dataset format.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "affordance/common.hpp"
#include "affordance/sensor.hpp"
#include "affordance/world.hpp"

namespace affordance {

enum class Polarity : std::uint8_t { Navigable, NonNavigable };

namespace pixel_label {
inline constexpr std::uint8_t kUnknown = 0;
inline constexpr std::uint8_t kNavigable = 1;
inline constexpr std::uint8_t kNonNavigable = 2;
}  // namespace pixel_label

struct TrajectoryStep {
  Observation observation;
  Action action = Action::Forward;
  StepEvent event;
  Pose true_after;  // simulator pose after the action (evaluation only)
  Pose odom_after;  // agent's estimate after the action
};

struct TrajectoryLog {
  std::vector<TrajectoryStep> steps;
  std::uint64_t episode_seed = 0;
  std::uint64_t world_id = 0;
};

struct WorldLabel {
  Vec2 center;  // odometry frame
  double radius = 16.0;
  Polarity polarity = Polarity::Navigable;
  int source_step = 0;
};

struct LabeledSample {
  Observation observation;
  std::vector<std::uint8_t> label;
  std::vector<float> weight;

  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count_if(label.begin(), label.end(), [](auto l) { return l != 0; }));
  }
  bool operator==(const LabeledSample&) const = default;
};

struct SamplingConfig {
  int max_steps = 64;
  double goal_min = 64.0;
  double goal_max = 512.0;
  double reach_radius = 24.0;
  int damage_limit = 40;
  int blocked_limit = 4;
  double aim_tolerance = deg_to_rad(15.0);
  double waypoint_radius = 12.0;
  double odometry_noise = 0.02;
  Kinematics kinematics;
  CameraModel camera;
};

struct LabelConfig {
  double positive_radius = 16.0;
  double negative_base = 16.0;  // radius = base * (1 + damage / 4)
  double negative_cap = 64.0;
  int horizon = 20;
  double occlusion_slack = 8.0;
  double weight_scale = 8.0;  // w = 1 / max(1, dist / weight_scale)
  double disc_resolution = 2.0;
  CameraModel camera;
};

// ---------------------------------------------------------------------------
// Episodes

/// Drives the agent through `waypoints` (world coordinates in the odometry frame) using
/// turn-toward / forward control. Ends at the final waypoint, on the step budget, on the
/// damage limit, or after `blocked_limit` consecutive blocked steps.
inline TrajectoryLog run_waypoint_episode(WorldMap world, Pose start, const std::vector<Vec2>& waypoints,
                                          std::uint64_t seed, const SamplingConfig& cfg = {}) {
  TrajectoryLog log;
  log.episode_seed = seed;
  log.world_id = world.seed;
  if (waypoints.empty()) return log;
  Rng noise(derive_seed(seed, stream_id("odometry")));
  AgentState agent;
  agent.pose = start;
  agent.radius = cfg.kinematics.agent_radius;
  Pose odom = start;
  std::size_t wp = 0;
  int episode_damage = 0;
  int blocked_run = 0;
  for (int t = 0; t < cfg.max_steps; ++t) {
    while (wp + 1 < waypoints.size() && distance(odom.position(), waypoints[wp]) < cfg.waypoint_radius) ++wp;
    if (wp + 1 == waypoints.size() && distance(odom.position(), waypoints[wp]) < cfg.reach_radius) break;

    // Rounded before render(): g++ 11 -O3 loses the rounding when these follow render's own pose stores.
    const Pose q_true = quantize_pose(agent.pose), q_odom = quantize_pose(odom);
    Observation obs = render(world, agent.pose, cfg.camera);
    obs.pose_true = q_true;
    obs.pose_odom = q_odom;
    obs.step_index = static_cast<std::uint32_t>(t);

    const Vec2 to_goal = waypoints[wp] - odom.position();
    const double err = wrap_angle(std::atan2(to_goal.y, to_goal.x) - odom.theta);
    Action action = Action::Forward;
    if (std::abs(err) > cfg.aim_tolerance) action = err > 0 ? Action::TurnLeft : Action::TurnRight;

    const auto res = step(world, agent, action, cfg.kinematics);
    odom = integrate_odometry(odom, odometry_step(motion_between(agent.pose, res.agent.pose), noise, cfg.odometry_noise));
    agent = res.agent;
    log.steps.push_back({std::move(obs), action, res.event, agent.pose, odom});

    episode_damage += res.event.damage;
    blocked_run = res.event.blocked ? blocked_run + 1 : 0;
    if (episode_damage >= cfg.damage_limit || blocked_run >= cfg.blocked_limit) break;
  }
  return log;
}

/// Random passable start pose (plain floor, clear of actors) with a random heading.
inline Pose random_start_pose(const WorldMap& world, Rng& rng, double radius) {
  std::vector<TileCoord> floor;
  for (int y = 0; y < world.height; ++y)
    for (int x = 0; x < world.width; ++x)
      if (world.at(x, y) == TileKind::Floor) floor.push_back({x, y});
  if (floor.empty()) throw Error("world has no floor tiles");
  for (int tries = 0; tries < 1000; ++tries) {
    const auto t = floor[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(floor.size()) - 1))];
    const Vec2 p{(t.x + rng.uniform(0.3, 0.7)) * kTileSize, (t.y + rng.uniform(0.3, 0.7)) * kTileSize};
    if (circle_blocked(world, p, radius)) continue;
    const bool near_actor = std::any_of(world.actors.begin(), world.actors.end(),
                                        [&](const DynamicActor& a) { return distance(a.position, p) < a.radius + radius + 16.0; });
    if (near_actor) continue;
    return {p.x, p.y, wrap_angle(rng.uniform(-kPi, kPi))};
  }
  const auto c = WorldMap::tile_center(floor.front().x, floor.front().y);
  return {c.x, c.y, 0.0};
}

/// Goal uniformly distributed over the annulus [goal_min, goal_max] around `center`, clamped to the world.
inline Vec2 random_goal_near(const WorldMap& world, Vec2 center, Rng& rng, const SamplingConfig& cfg) {
  const double r = std::sqrt(rng.uniform(cfg.goal_min * cfg.goal_min, cfg.goal_max * cfg.goal_max));
  const double a = rng.uniform(-kPi, kPi);
  Vec2 g = center + Vec2{std::cos(a), std::sin(a)} * r;
  g.x = std::clamp(g.x, 0.0, world.width * kTileSize);
  g.y = std::clamp(g.y, 0.0, world.height * kTileSize);
  return g;
}

/// Random start, random nearby goal, straight-line attempt.
inline TrajectoryLog run_sampling_episode(const WorldMap& world, Rng& rng, int max_steps = 64, SamplingConfig cfg = {}) {
  if (max_steps < 1) throw Error("max_steps must be >= 1");
  cfg.max_steps = max_steps;
  const Pose start = random_start_pose(world, rng, cfg.kinematics.agent_radius);
  const Vec2 goal = random_goal_near(world, start.position(), rng, cfg);
  return run_waypoint_episode(world, start, {goal}, rng.bits(), cfg);
}

// ---------------------------------------------------------------------------
// Labels

inline double negative_radius(int damage, const LabelConfig& cfg = {}) {
  return std::min(cfg.negative_cap, cfg.negative_base * (1.0 + damage / 4.0));
}

inline std::vector<WorldLabel> extract_world_labels(const TrajectoryLog& log, const LabelConfig& cfg = {}) {
  std::vector<WorldLabel> out;
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const auto& s = log.steps[t];
    const int src = static_cast<int>(t);
    out.push_back({s.observation.pose_odom.position(), cfg.positive_radius, Polarity::Navigable, src});
    if (s.event.damage > 0 || s.event.blocked) {
      // Contact point re-expressed in the odometry frame via the post-step pose pair.
      const Vec2 contact = to_world(s.odom_after, to_local(s.true_after, s.event.contact_position));
      out.push_back({contact, negative_radius(s.event.damage, cfg), Polarity::NonNavigable, src});
    }
  }
  return out;
}

/// Pixel ground point in the frame of the observation's odometry pose.
inline Vec2 odom_ground_point(const Observation& o, std::size_t i) {
  return to_world(o.pose_odom, to_local(o.pose_true, o.ground(i)));
}

namespace detail {

/// Column span covered by a polar sampling of the disc, or nullopt when no sample is in view.
inline std::optional<std::pair<int, int>> disc_columns(const WorldLabel& l, const Pose& pose, const CameraModel& cam,
                                                       double resolution) {
  int lo = cam.width, hi = -1;
  for (double r = 0.0; r <= l.radius + 1e-9; r += resolution) {
    const int n = std::max(1, static_cast<int>(std::ceil(2.0 * kPi * r / resolution)));
    for (int k = 0; k < n; ++k) {
      const double a = 2.0 * kPi * k / n;
      if (auto px = project_world_point(l.center + Vec2{std::cos(a), std::sin(a)} * r, pose, cam)) {
        lo = std::min(lo, px->ui());
        hi = std::max(hi, px->ui());
      }
    }
  }
  if (hi < lo) return std::nullopt;
  return std::pair{lo, hi};
}

}  // namespace detail

inline std::vector<LabeledSample> backproject_labels(const TrajectoryLog& log, const std::vector<WorldLabel>& labels,
                                                     const LabelConfig& cfg = {}) {
  if (cfg.horizon < 1) throw Error("horizon must be >= 1");
  std::vector<LabeledSample> out;
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const Observation& o = log.steps[t].observation;
    CameraModel cam = cfg.camera;
    cam.width = o.width;
    cam.height = o.height;
    const int ti = static_cast<int>(t);

    std::vector<const WorldLabel*> active;
    for (const auto& l : labels)
      if (l.source_step >= ti && l.source_step <= ti + cfg.horizon) active.push_back(&l);
    if (active.empty()) continue;

    LabeledSample s;
    s.label.assign(o.size(), pixel_label::kUnknown);
    s.weight.assign(o.size(), 0.0f);
    std::vector<Vec2> ground(o.size());
    for (std::size_t i = 0; i < o.size(); ++i)
      if (o.ground_valid(i)) ground[i] = odom_ground_point(o, i);

    for (const WorldLabel* l : active) {
      const auto cols = detail::disc_columns(*l, o.pose_odom, cam, cfg.disc_resolution);
      if (!cols) continue;
      const std::uint8_t tag = l->polarity == Polarity::Navigable ? pixel_label::kNavigable : pixel_label::kNonNavigable;
      for (int u = cols->first; u <= cols->second; ++u) {
        for (int v = 0; v < o.height; ++v) {
          const std::size_t i = o.index(u, v);
          if (!o.ground_valid(i)) continue;
          const double d = distance(ground[i], l->center);
          if (d > l->radius) continue;
          if (o.depth[i] < to_local(o.pose_odom, ground[i]).x - cfg.occlusion_slack) continue;
          const auto w = static_cast<float>(1.0 / std::max(1.0, d / cfg.weight_scale));
          auto& cur = s.label[i];
          if (cur == pixel_label::kUnknown || (cur == pixel_label::kNavigable && tag == pixel_label::kNonNavigable)) {
            cur = tag;
            s.weight[i] = w;
          } else if (cur == tag) {
            s.weight[i] = std::max(s.weight[i], w);
          }
        }
      }
    }
    if (s.labeled_count() == 0) continue;
    s.observation = o;
    out.push_back(std::move(s));
  }
  return out;
}

/// Runs random sampling episodes over `worlds` until exactly `n` samples are collected.
inline std::vector<LabeledSample> collect_random_samples(const std::vector<WorldMap>& worlds, std::size_t n,
                                                         std::uint64_t seed, const SamplingConfig& scfg = {},
                                                         const LabelConfig& lcfg = {}) {
  if (worlds.empty()) throw Error("no worlds to sample from");
  std::vector<LabeledSample> out;
  Rng rng(derive_seed(seed, stream_id("random-sampling")));
  for (std::uint64_t episode = 0; out.size() < n; ++episode) {
    if (episode > 100000) throw Error("sampling produced no labels");
    const auto& w = worlds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(worlds.size()) - 1))];
    const auto log = run_sampling_episode(w, rng, scfg.max_steps, scfg);
    auto samples = backproject_labels(log, extract_world_labels(log, lcfg), lcfg);
    for (auto& s : samples) {
      if (out.size() >= n) break;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AFDS dataset files

inline std::vector<std::uint8_t> encode_dataset(const std::vector<LabeledSample>& samples) {
  ByteWriter out;
  out.tag("AFDS");
  out.u16(1);
  out.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    write_observation(out, s.observation);
    for (auto l : s.label) out.u8(l);
    for (auto w : s.weight) out.f32(w);
  }
  return out.take();
}

inline std::vector<LabeledSample> decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_tag("AFDS");
  const std::size_t version_at = in.offset();
  if (in.u16() != 1) throw FormatError("unsupported dataset version", version_at);
  const std::uint32_t count = in.u32();
  std::vector<LabeledSample> out;
  out.reserve(std::min<std::uint32_t>(count, 4096));
  for (std::uint32_t k = 0; k < count; ++k) {
    LabeledSample s;
    s.observation = read_observation(in);
    const std::size_t n = s.observation.size();
    s.label.resize(n);
    s.weight.resize(n);
    for (auto& l : s.label) {
      const std::size_t at = in.offset();
      l = in.u8();
      if (l > pixel_label::kNonNavigable) throw FormatError("invalid pixel label", at);
    }
    for (auto& w : s.weight) w = in.f32();
    out.push_back(std::move(s));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after last sample", in.offset());
  return out;
}

inline void write_dataset(const std::vector<LabeledSample>& samples, const std::string& path) {
  write_file_bytes(path, encode_dataset(samples));
}

inline std::vector<LabeledSample> read_dataset(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_dataset(bytes);
}

}  // namespace affordance
