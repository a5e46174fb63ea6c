// Experiment orchestration: JSON config, world sets and hazard tagging, a bounded worker pool,
// per-episode files, aggregate reports and the navigation fixture trials.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/agents.hpp"
#include "affordance/common.hpp"
#include "affordance/navmodel.hpp"
#include "affordance/world.hpp"

namespace affordance {

inline constexpr int kMetricsSchema = 1;

// ---------------------------------------------------------------------------
// Config

struct SamplingSchedule {
  int seed_n = 200;
  int batch_n = 200;
  int iterations = 4;
  int random_n = 1000;
  int episode_steps = 64;
};

struct EpisodeSettings {
  int explore_steps = 2000;
  int navigate_steps = 1000;
  int damage_budget = 100;
  int replan_cadence = 10;
  double odometry_noise = 0.02;
};

struct ExperimentConfig {
  WorldParams world_params;
  int n_train_worlds = 60;
  int n_test_worlds = 15;
  double hazard_threshold = 0.05;
  SamplingSchedule sampling;
  TrainConfig train;
  EpisodeSettings episode;
  int eval_reps = 5;
  std::uint64_t seed = 0;
  std::vector<int> ablation_sizes{50, 100, 200, 500};
  int bucket_steps = 50;

  bool operator==(const ExperimentConfig& o) const;
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"world_params", params_to_json(c.world_params)},
          {"n_train_worlds", c.n_train_worlds},
          {"n_test_worlds", c.n_test_worlds},
          {"hazard_threshold", c.hazard_threshold},
          {"sampling",
           {{"seed_n", c.sampling.seed_n},
            {"batch_n", c.sampling.batch_n},
            {"iterations", c.sampling.iterations},
            {"random_n", c.sampling.random_n},
            {"episode_steps", c.sampling.episode_steps}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"minibatch", c.train.minibatch},
            {"learning_rate", c.train.learning_rate},
            {"momentum", c.train.momentum},
            {"hidden1", c.train.hidden1},
            {"hidden2", c.train.hidden2}}},
          {"episode",
           {{"explore_steps", c.episode.explore_steps},
            {"navigate_steps", c.episode.navigate_steps},
            {"damage_budget", c.episode.damage_budget},
            {"replan_cadence", c.episode.replan_cadence},
            {"odometry_noise", c.episode.odometry_noise}}},
          {"eval_reps", c.eval_reps},
          {"seed", c.seed},
          {"ablation_sizes", c.ablation_sizes},
          {"bucket_steps", c.bucket_steps}};
}

inline bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return config_to_json(*this) == config_to_json(o);
}

namespace detail {
inline const nlohmann::json& object_at(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_object()) throw Error("config key '" + key + "' must be an object");
  return j.at(key);
}
}  // namespace detail

/// Missing keys keep defaults. Unknown keys and ill-typed values raise an error naming the key.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  using detail::read_key;
  detail::reject_unknown_keys(j, "",
                              {"world_params", "n_train_worlds", "n_test_worlds", "hazard_threshold", "sampling", "train",
                               "episode", "eval_reps", "seed", "ablation_sizes", "bucket_steps"});
  ExperimentConfig c;
  if (j.contains("world_params")) c.world_params = params_from_json(j.at("world_params"), "world_params.");
  read_key(j, "", "n_train_worlds", c.n_train_worlds);
  read_key(j, "", "n_test_worlds", c.n_test_worlds);
  read_key(j, "", "hazard_threshold", c.hazard_threshold);
  read_key(j, "", "eval_reps", c.eval_reps);
  read_key(j, "", "seed", c.seed);
  read_key(j, "", "ablation_sizes", c.ablation_sizes);
  read_key(j, "", "bucket_steps", c.bucket_steps);
  if (j.contains("sampling")) {
    const auto& s = detail::object_at(j, "sampling");
    detail::reject_unknown_keys(s, "sampling.", {"seed_n", "batch_n", "iterations", "random_n", "episode_steps"});
    read_key(s, "sampling.", "seed_n", c.sampling.seed_n);
    read_key(s, "sampling.", "batch_n", c.sampling.batch_n);
    read_key(s, "sampling.", "iterations", c.sampling.iterations);
    read_key(s, "sampling.", "random_n", c.sampling.random_n);
    read_key(s, "sampling.", "episode_steps", c.sampling.episode_steps);
  }
  if (j.contains("train")) {
    const auto& t = detail::object_at(j, "train");
    detail::reject_unknown_keys(t, "train.", {"epochs", "minibatch", "learning_rate", "momentum", "hidden1", "hidden2"});
    read_key(t, "train.", "epochs", c.train.epochs);
    read_key(t, "train.", "minibatch", c.train.minibatch);
    read_key(t, "train.", "learning_rate", c.train.learning_rate);
    read_key(t, "train.", "momentum", c.train.momentum);
    read_key(t, "train.", "hidden1", c.train.hidden1);
    read_key(t, "train.", "hidden2", c.train.hidden2);
  }
  if (j.contains("episode")) {
    const auto& e = detail::object_at(j, "episode");
    detail::reject_unknown_keys(e, "episode.",
                                {"explore_steps", "navigate_steps", "damage_budget", "replan_cadence", "odometry_noise"});
    read_key(e, "episode.", "explore_steps", c.episode.explore_steps);
    read_key(e, "episode.", "navigate_steps", c.episode.navigate_steps);
    read_key(e, "episode.", "damage_budget", c.episode.damage_budget);
    read_key(e, "episode.", "replan_cadence", c.episode.replan_cadence);
    read_key(e, "episode.", "odometry_noise", c.episode.odometry_noise);
  }
  auto positive = [](int v, const char* key) {
    if (v < 1) throw Error(std::string("config key '") + key + "' must be positive");
  };
  positive(c.n_train_worlds, "n_train_worlds");
  positive(c.n_test_worlds, "n_test_worlds");
  positive(c.eval_reps, "eval_reps");
  positive(c.bucket_steps, "bucket_steps");
  positive(c.sampling.seed_n, "sampling.seed_n");
  positive(c.sampling.episode_steps, "sampling.episode_steps");
  positive(c.train.minibatch, "train.minibatch");
  positive(c.episode.replan_cadence, "episode.replan_cadence");
  if (c.sampling.batch_n < 0) throw Error("config key 'sampling.batch_n' must be non-negative");
  if (c.hazard_threshold < 0 || c.hazard_threshold > 1) throw Error("config key 'hazard_threshold' must be in [0,1]");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error("config file not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Worlds

inline std::uint64_t world_seed(std::uint64_t global, bool train, int index) {
  return derive_seed(global, stream_id(train ? "train-world" : "test-world"), static_cast<std::uint64_t>(index));
}

inline std::vector<WorldMap> make_world_set(const ExperimentConfig& c, bool train) {
  std::vector<WorldMap> out;
  const int n = train ? c.n_train_worlds : c.n_test_worlds;
  for (int i = 0; i < n; ++i) out.push_back(generate_world(world_seed(c.seed, train, i), c.world_params));
  return out;
}

struct HazardTag {
  double fraction = 0.0;
  bool dense = false;
};

/// Share of passable tiles within `radius` of spawn that are hazards or lie within `actor_margin`
/// of an actor's initial position.
inline HazardTag hazard_tag(const WorldMap& w, double threshold, double radius = 512.0, double actor_margin = 64.0) {
  int total = 0, bad = 0;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      if (!passable(w.at(x, y))) continue;
      const Vec2 c = WorldMap::tile_center(x, y);
      if (distance(c, w.spawn.position()) > radius) continue;
      ++total;
      const bool near_actor = std::any_of(w.actors.begin(), w.actors.end(),
                                          [&](const DynamicActor& a) { return distance(a.position, c) <= actor_margin; });
      if (w.at(x, y) == TileKind::EnvHazard || near_actor) ++bad;
    }
  HazardTag t;
  t.fraction = total ? static_cast<double>(bad) / total : 0.0;
  t.dense = t.fraction >= threshold;
  return t;
}

// ---------------------------------------------------------------------------
// Worker pool

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), 1, std::max<std::size_t>(1, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (k == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

struct BatchEpisode {
  std::size_t world = 0;
  int rep = 0;
  std::string world_name;
  EpisodeMetrics metrics;
};

inline std::uint64_t episode_seed(std::uint64_t global, std::size_t world, int rep) {
  return derive_seed(global, stream_id("episode"), static_cast<std::uint64_t>(world) * 1000003ULL + static_cast<std::uint64_t>(rep));
}

/// Exploration episodes over worlds x reps, ordered world-major.
inline std::vector<BatchEpisode> run_exploration_batch(const std::vector<WorldMap>& worlds, int reps, const EpisodeConfig& base,
                                                       std::uint64_t seed, int workers = 1) {
  std::vector<BatchEpisode> out(worlds.size() * static_cast<std::size_t>(reps));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    auto& e = out[i];
    e.world = i / static_cast<std::size_t>(reps);
    e.rep = static_cast<int>(i % static_cast<std::size_t>(reps));
    e.world_name = "w" + std::to_string(e.world);
    EpisodeConfig cfg = base;
    cfg.seed = episode_seed(seed, e.world, e.rep);
    e.metrics = run_exploration(worlds[e.world], cfg);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Navigation fixtures

struct NavTrial {
  std::string name;
  WorldMap world;
  Vec2 goal;  // offset from spawn, world axes
};

namespace detail {

inline std::vector<std::string> walled_room(int w, int h) {
  std::vector<std::string> rows(static_cast<std::size_t>(h), std::string(static_cast<std::size_t>(w), '.'));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = '#';
  return rows;
}

inline void stamp(std::vector<std::string>& rows, int x0, int y0, int x1, int y1, char c) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = c;
}

inline Pose tile_pose(int x, int y, double theta = 0.0) {
  const Vec2 c = WorldMap::tile_center(x, y);
  return {c.x, c.y, theta};
}

}  // namespace detail

/// Fifteen constructed trials in three families, each with an obstacle block on the straight line
/// to the goal and floor around it: a hazard blob, a low-obstacle block, and a hazard blob plus a
/// low-obstacle block with a patrolling actor near the goal.
inline std::vector<NavTrial> navigation_fixtures() {
  using detail::stamp;
  std::vector<NavTrial> out;
  auto add = [&](const std::string& name, std::vector<std::string> rows, int ay, int width) {
    out.push_back({name, world_from_ascii(rows, detail::tile_pose(2, ay)), {(width - 4) * kTileSize, 0.0}});
  };
  for (int v = 0; v < 5; ++v) {
    const int w = 14, h = 11 + (v % 2), ay = h / 2, off = (v % 3) - 1;
    const int depth = 1 + (v % 4);  // a one-tile blob can be crossed under budget
    auto rows = detail::walled_room(w, h);
    stamp(rows, 5, ay - 1 + off, 4 + depth, ay + 1 + off, '~');
    add("hazard-blob-" + std::to_string(v), rows, ay, w);
  }
  for (int v = 0; v < 5; ++v) {
    const int w = 14, h = 11 + (v % 2), ay = h / 2, off = (v % 3) - 1;
    auto rows = detail::walled_room(w, h);
    stamp(rows, 6, ay - 1 + off, 6 + (v % 2), ay + 1 + off, 'o');
    add("low-block-" + std::to_string(v), rows, ay, w);
  }
  for (int v = 0; v < 5; ++v) {
    const int w = 17, h = 11, ay = h / 2, off = (v % 3) - 1;
    auto rows = detail::walled_room(w, h);
    stamp(rows, 4, ay - 1 + off, 6, ay + 1 + off, '~');
    stamp(rows, 10, ay - 1 - off, 11, ay + 1 - off, 'o');
    add("mixed-" + std::to_string(v), rows, ay, w);
    DynamicActor a;
    a.policy = ActorPolicy::Patrol;
    a.texture = static_cast<std::uint16_t>(textures::kActorBase + v % textures::kActorCount);
    a.policy_seed = static_cast<std::uint64_t>(v);
    const Vec2 c = WorldMap::tile_center(13, ay + (v % 2 ? 2 : -3));
    a.position = c;
    a.waypoints = {c, c + Vec2{0, 64}, c + Vec2{64, 64}, c + Vec2{64, 0}};
    out.back().world.actors.push_back(a);
  }
  return out;
}

inline std::vector<BatchEpisode> run_navigation_batch(const std::vector<NavTrial>& trials, int reps, const EpisodeConfig& base,
                                                      std::uint64_t seed, int workers = 1) {
  std::vector<BatchEpisode> out(trials.size() * static_cast<std::size_t>(reps));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    auto& e = out[i];
    e.world = i / static_cast<std::size_t>(reps);
    e.rep = static_cast<int>(i % static_cast<std::size_t>(reps));
    e.world_name = trials[e.world].name;
    EpisodeConfig cfg = base;
    cfg.mode = AgentMode::Navigate;
    cfg.goal = trials[e.world].goal;
    cfg.seed = episode_seed(seed, e.world, e.rep);
    e.metrics = run_navigation(trials[e.world].world, cfg);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Batch files

struct BatchInfo {
  std::string label;  // report grouping key, e.g. the mode name
  std::string task;   // "explore" or "navigate"
  int image_width = 160;
  int image_height = 120;
  std::optional<std::size_t> dataset_size{};  // training-set size behind the model, for the ablation table
};

inline std::string episode_file_name(const BatchEpisode& e) {
  return "ep_" + e.world_name + "_r" + std::to_string(e.rep) + ".csv";
}

/// Writes one metrics CSV per episode plus summary.json into `dir`.
inline void write_batch(const std::string& dir, const BatchInfo& info, const std::vector<BatchEpisode>& episodes) {
  std::filesystem::create_directories(dir);
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : episodes) {
    const auto file = episode_file_name(e);
    write_file_text((std::filesystem::path(dir) / file).string(), metrics_csv(e.metrics));
    auto s = metrics_summary(e.metrics);
    s["file"] = file;
    s["world"] = e.world_name;
    s["rep"] = e.rep;
    eps.push_back(std::move(s));
  }
  nlohmann::json summary = {{"schema", kMetricsSchema},
                            {"label", info.label},
                            {"task", info.task},
                            {"image", {info.image_width, info.image_height}},
                            {"episodes", eps}};
  if (info.dataset_size) summary["dataset_size"] = *info.dataset_size;
  write_file_text((std::filesystem::path(dir) / "summary.json").string(), summary.dump(2) + "\n");
}

struct EpisodeTrace {
  std::string label;
  std::string task;
  Outcome outcome = Outcome::BudgetExhausted;
  std::vector<double> coverage;  // per recorded step
  std::vector<int> damage;
  std::optional<std::size_t> dataset_size;
};

inline EpisodeTrace parse_metrics_csv(const std::string& text, const std::string& where) {
  EpisodeTrace t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,coverage_gu2,cum_damage,x,y,theta")
    throw Error("bad metrics header in " + where);
  int expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int step = 0, dmg = 0;
    double cov = 0, x = 0, y = 0, th = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%d,%lf,%lf,%lf", &step, &cov, &dmg, &x, &y, &th) != 6 || step != expect)
      throw Error("malformed metrics row in " + where + ": " + line);
    ++expect;
    t.coverage.push_back(cov);
    t.damage.push_back(dmg);
  }
  return t;
}

inline std::vector<EpisodeTrace> traces_from_batch(const BatchInfo& info, const std::vector<BatchEpisode>& episodes) {
  std::vector<EpisodeTrace> out;
  for (const auto& e : episodes) {
    auto t = parse_metrics_csv(metrics_csv(e.metrics), episode_file_name(e));
    t.label = info.label;
    t.task = info.task;
    t.outcome = e.metrics.outcome;
    t.dataset_size = info.dataset_size;
    out.push_back(std::move(t));
  }
  return out;
}

/// Reads every batch directory (each holding summary.json). Schema or image-size mismatches are errors.
inline std::vector<EpisodeTrace> load_batches(const std::vector<std::string>& dirs) {
  std::vector<EpisodeTrace> out;
  std::optional<nlohmann::json> image;
  for (const auto& dir : dirs) {
    const auto path = (std::filesystem::path(dir) / "summary.json").string();
    if (!std::filesystem::exists(path)) throw Error("missing batch summary: " + path);
    const auto s = nlohmann::json::parse(read_file_text(path));
    if (s.value("schema", -1) != kMetricsSchema) throw Error("unsupported metrics schema in " + path);
    if (image && *image != s.at("image")) throw Error("mixed image dimensions across batches: " + path);
    image = s.at("image");
    for (const auto& e : s.at("episodes")) {
      const auto csv = (std::filesystem::path(dir) / e.at("file").get<std::string>()).string();
      if (!std::filesystem::exists(csv)) throw Error("missing metrics file: " + csv);
      auto t = parse_metrics_csv(read_file_text(csv), csv);
      t.label = s.at("label").get<std::string>();
      t.task = s.at("task").get<std::string>();
      t.outcome = outcome_from_string(e.at("outcome").get<std::string>());
      if (s.contains("dataset_size")) t.dataset_size = s.at("dataset_size").get<std::size_t>();
      out.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct Bucket {
  int step = 0;  // steps elapsed
  double mean = 0, min = 0, max = 0;
  bool operator==(const Bucket&) const = default;
};

struct GroupReport {
  std::string label;
  std::string task;
  std::size_t episodes = 0;
  std::vector<Bucket> coverage;
  double terminal_mean = 0, terminal_min = 0, terminal_max = 0;
  std::vector<std::pair<int, double>> success;  // (damage budget, success rate), navigation only
  std::optional<std::size_t> dataset_size;
  bool operator==(const GroupReport&) const = default;
};

struct AblationRow {
  std::size_t dataset_size = 0;
  std::string label;
  double terminal_mean = 0;
  bool operator==(const AblationRow&) const = default;
};

struct Report {
  std::vector<GroupReport> groups;
  std::vector<AblationRow> ablation;  // exploration groups tagged with a dataset size, ascending
  int bucket_steps = 50;
  bool operator==(const Report&) const = default;
};

/// Coverage after `steps` elapsed steps; finished episodes hold their terminal value.
inline double coverage_at(const EpisodeTrace& t, int steps) {
  if (t.coverage.empty()) return 0.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, steps)) - 1, t.coverage.size() - 1);
  return t.coverage[i];
}

inline double success_rate(const std::vector<const EpisodeTrace*>& ts, int budget) {
  if (ts.empty()) return 0.0;
  int ok = 0;
  for (const auto* t : ts)
    if (t->outcome == Outcome::GoalReached && (t->damage.empty() || t->damage.back() <= budget)) ++ok;
  return static_cast<double>(ok) / ts.size();
}

inline Report aggregate(const std::vector<EpisodeTrace>& traces, int bucket_steps = 50, int max_damage = 100) {
  if (bucket_steps < 1) throw Error("bucket size must be positive");
  std::map<std::string, std::vector<const EpisodeTrace*>> groups;
  for (const auto& t : traces) groups[t.label].push_back(&t);
  Report r;
  r.bucket_steps = bucket_steps;
  for (const auto& [label, ts] : groups) {
    GroupReport g;
    g.label = label;
    g.task = ts.front()->task;
    g.episodes = ts.size();
    g.dataset_size = ts.front()->dataset_size;
    std::size_t longest = 0;
    for (const auto* t : ts) {
      if (t->task != g.task) throw Error("group " + label + " mixes tasks");
      if (t->dataset_size != ts.front()->dataset_size) throw Error("group " + label + " mixes dataset sizes");
      longest = std::max(longest, t->coverage.size());
    }
    const int nb = static_cast<int>((longest + bucket_steps - 1) / bucket_steps);
    for (int b = 1; b <= nb; ++b) {
      Bucket k;
      k.step = b * bucket_steps;
      k.min = kInfCost;
      k.max = -kInfCost;
      for (const auto* t : ts) {
        const double c = coverage_at(*t, k.step);
        k.mean += c;
        k.min = std::min(k.min, c);
        k.max = std::max(k.max, c);
      }
      k.mean /= ts.size();
      g.coverage.push_back(k);
    }
    g.terminal_min = kInfCost;
    g.terminal_max = -kInfCost;
    for (const auto* t : ts) {
      const double c = t->coverage.empty() ? 0.0 : t->coverage.back();
      g.terminal_mean += c;
      g.terminal_min = std::min(g.terminal_min, c);
      g.terminal_max = std::max(g.terminal_max, c);
    }
    g.terminal_mean /= ts.size();
    if (g.task == "navigate")
      for (int b = 0; b <= max_damage; b += 4) g.success.emplace_back(b, success_rate(ts, b));
    if (g.dataset_size && g.task == "explore") r.ablation.push_back({*g.dataset_size, g.label, g.terminal_mean});
    r.groups.push_back(std::move(g));
  }
  std::sort(r.ablation.begin(), r.ablation.end(),
            [](const AblationRow& a, const AblationRow& b) { return std::tie(a.dataset_size, a.label) < std::tie(b.dataset_size, b.label); });
  return r;
}

inline nlohmann::json report_to_json(const Report& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : g.coverage) buckets.push_back({{"step", b.step}, {"mean", b.mean}, {"min", b.min}, {"max", b.max}});
    nlohmann::json success = nlohmann::json::array();
    for (const auto& [b, s] : g.success) success.push_back({{"damage_budget", b}, {"success_rate", s}});
    nlohmann::json gj = {{"label", g.label},
                         {"task", g.task},
                         {"episodes", g.episodes},
                         {"terminal_coverage", {{"mean", g.terminal_mean}, {"min", g.terminal_min}, {"max", g.terminal_max}}},
                         {"coverage_buckets", buckets},
                         {"success_curve", success}};
    if (g.dataset_size) gj["dataset_size"] = *g.dataset_size;
    groups.push_back(std::move(gj));
  }
  nlohmann::json ablation = nlohmann::json::array();
  for (const auto& a : r.ablation)
    ablation.push_back({{"dataset_size", a.dataset_size}, {"label", a.label}, {"terminal_coverage_mean", a.terminal_mean}});
  return {{"bucket_steps", r.bucket_steps}, {"groups", groups}, {"ablation", ablation}};
}

/// Plain-text tables: terminal coverage per group, coverage by bucket, navigation success curves, ablation.
inline std::string report_text(const Report& r) {
  std::string out;
  char buf[256];
  out += "group                      task      n   cov_mean     cov_min     cov_max\n";
  for (const auto& g : r.groups) {
    std::snprintf(buf, sizeof buf, "%-26s %-8s %3zu %10.0f  %10.0f  %10.0f\n", g.label.c_str(), g.task.c_str(), g.episodes,
                  g.terminal_mean, g.terminal_min, g.terminal_max);
    out += buf;
  }
  bool header = false;
  for (const auto& g : r.groups) {
    if (g.task != "explore") continue;
    if (!header) {
      out += "\nmean coverage by step (" + std::to_string(r.bucket_steps) + "-step buckets)\n";
      header = true;
    }
    std::snprintf(buf, sizeof buf, "%-26s", g.label.c_str());
    out += buf;
    for (const auto& b : g.coverage) {
      std::snprintf(buf, sizeof buf, " %4d:%.0f", b.step, b.mean);
      out += buf;
    }
    out += "\n";
  }
  for (const auto& g : r.groups) {
    if (g.success.empty()) continue;
    out += "\nsuccess vs damage budget (" + g.label + ")\n";
    for (const auto& [b, s] : g.success) {
      std::snprintf(buf, sizeof buf, "  %3d  %.3f\n", b, s);
      out += buf;
    }
  }
  if (!r.ablation.empty()) {
    out += "\ndataset-size ablation\n  samples  cov_mean    group\n";
    for (const auto& a : r.ablation) {
      std::snprintf(buf, sizeof buf, "  %7zu  %10.0f  %s\n", a.dataset_size, a.terminal_mean, a.label.c_str());
      out += buf;
    }
  }
  return out;
}

}  // namespace affordance
