// Command-line front end for world generation, sampling, training, batch runs and reports.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "affordance/agents.hpp"
#include "affordance/harness.hpp"
#include "affordance/navmodel.hpp"
#include "affordance/planning.hpp"
#include "affordance/selfsup.hpp"

namespace fs = std::filesystem;
using namespace affordance;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string mode;
  std::string worlds;
  std::string model;
  std::string dataset;
  int reps = -1;
  int workers = 1;
  bool ablation = false;
  std::vector<std::string> inputs;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed_set) c.seed = o.seed;
  if (o.reps > 0) c.eval_reps = o.reps;
  return c;
}

bool wildcard_match(const std::string& pat, const std::string& s) {
  std::size_t p = 0, i = 0, star = std::string::npos, mark = 0;
  while (i < s.size()) {
    if (p < pat.size() && (pat[p] == '?' || pat[p] == s[i])) {
      ++p;
      ++i;
    } else if (p < pat.size() && pat[p] == '*') {
      star = p++;
      mark = i;
    } else if (star != std::string::npos) {
      p = star + 1;
      i = ++mark;
    } else {
      return false;
    }
  }
  while (p < pat.size() && pat[p] == '*') ++p;
  return p == pat.size();
}

/// A directory (all *.json inside), a single file, or a file-name wildcard.
std::vector<std::string> expand_worlds(const std::string& spec) {
  std::vector<std::string> out;
  if (spec.empty()) throw Error("--worlds is required");
  fs::path p(spec);
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".json" && e.path().filename() != "tags.json") out.push_back(e.path().string());
  } else if (spec.find_first_of("*?") != std::string::npos) {
    const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    if (!fs::is_directory(dir)) throw Error("no such directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
      if (wildcard_match(p.filename().string(), e.path().filename().string())) out.push_back(e.path().string());
  } else {
    if (!fs::exists(p)) throw Error("no such file: " + spec);
    out.push_back(spec);
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error("no world files match: " + spec);
  return out;
}

std::vector<WorldMap> load_worlds(const std::string& spec) {
  std::vector<WorldMap> w;
  for (const auto& f : expand_worlds(spec)) {
    try {
      w.push_back(world_from_json(nlohmann::json::parse(read_file_text(f))));
    } catch (const std::exception& e) {
      throw Error("cannot load world " + f + ": " + e.what());
    }
  }
  return w;
}

Model load_model_file(const std::string& path) {
  if (path.empty()) throw Error("--model is required");
  if (!fs::exists(path)) throw Error("no such model file: " + path);
  return read_model(path);
}

SamplingConfig sampling_config(const ExperimentConfig& c) {
  SamplingConfig s;
  s.max_steps = c.sampling.episode_steps;
  return s;
}

TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t = c.train;
  t.seed = derive_seed(c.seed, stream_id("train"));
  return t;
}

std::string require_out(const Options& o) {
  if (o.out.empty()) throw Error("--out is required");
  return o.out;
}

int cmd_gen_worlds(const Options& o) {
  const auto c = resolve_config(o);
  const fs::path out = require_out(o);
  nlohmann::json tags = nlohmann::json::object();
  for (bool train : {true, false}) {
    const auto set = make_world_set(c, train);
    const fs::path dir = out / (train ? "train" : "test");
    fs::create_directories(dir);
    for (std::size_t i = 0; i < set.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "world_%03zu.json", i);
      write_file_text((dir / name).string(), world_to_json(set[i]).dump() + "\n");
      const auto t = hazard_tag(set[i], c.hazard_threshold);
      tags[(train ? "train/" : "test/") + std::string(name)] = {{"hazard_fraction", t.fraction}, {"hazard_dense", t.dense}};
    }
    spdlog::info("wrote {} {} worlds to {}", set.size(), train ? "train" : "test", dir.string());
  }
  write_file_text((out / "tags.json").string(), tags.dump(2) + "\n");
  return 0;
}

int cmd_sample(const Options& o) {
  const auto c = resolve_config(o);
  const auto worlds = load_worlds(o.worlds);
  const auto out = require_out(o);
  const auto data = collect_random_samples(worlds, static_cast<std::size_t>(c.sampling.random_n),
                                           derive_seed(c.seed, stream_id("sample")), sampling_config(c));
  write_dataset(data, out);
  spdlog::info("wrote {} samples to {}", data.size(), out);
  return 0;
}

int cmd_train(const Options& o) {
  const auto c = resolve_config(o);
  if (o.dataset.empty()) throw Error("--dataset is required");
  if (!fs::exists(o.dataset)) throw Error("no such dataset file: " + o.dataset);
  const auto out = require_out(o);
  const auto data = read_dataset(o.dataset);
  const auto r = train(data, train_config(c));
  write_model(r.params, out);
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) csv += std::to_string(e) + "," + format_cost(r.epoch_loss[e]) + "\n";
  write_file_text(out + ".loss.csv", csv);
  spdlog::info("trained on {} samples; final loss {}", data.size(), r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
  return 0;
}

EpisodeConfig base_episode(const ExperimentConfig& c, bool navigate) {
  EpisodeConfig e;
  e.step_budget = navigate ? c.episode.navigate_steps : c.episode.explore_steps;
  e.damage_budget = c.episode.damage_budget;
  e.replan_cadence = c.episode.replan_cadence;
  e.odometry_noise = c.episode.odometry_noise;
  return e;
}

int cmd_explore(const Options& o) {
  const auto c = resolve_config(o);
  const auto worlds = load_worlds(o.worlds);
  const auto out = require_out(o);
  const std::string mode_name = o.mode.empty() ? "frontier-geo" : o.mode;
  EpisodeConfig e = base_episode(c, false);
  e.mode = mode_from_string(mode_name);
  if (e.mode == AgentMode::Navigate) throw Error("explore needs an exploration mode");
  if (o.ablation) {
    // One frontier-aff batch per configured size, each trained on a prefix of the dataset.
    if (e.mode != AgentMode::ExploreFrontierAff) throw Error("--ablation needs --mode frontier-aff");
    if (o.dataset.empty()) throw Error("--ablation needs --dataset");
    const auto data = read_dataset(o.dataset);
    for (const int n : c.ablation_sizes) {
      if (n < 1 || static_cast<std::size_t>(n) > data.size())
        throw Error("ablation size " + std::to_string(n) + " exceeds the dataset (" + std::to_string(data.size()) + " samples)");
      const std::vector<LabeledSample> sub(data.begin(), data.begin() + n);
      TrainConfig tc = train_config(c);
      tc.seed = derive_seed(c.seed, stream_id("ablation-train"), static_cast<std::uint64_t>(n));
      e.model = model_predictor(train(sub, tc).params);
      const auto batch = run_exploration_batch(worlds, c.eval_reps, e, derive_seed(c.seed, stream_id(mode_name)), o.workers);
      BatchInfo info{mode_name + "-n" + std::to_string(n), "explore"};
      info.dataset_size = static_cast<std::size_t>(n);
      const auto dir = (fs::path(out) / ("n" + std::to_string(n))).string();
      write_batch(dir, info, batch);
      spdlog::info("{} samples: {} episodes written to {}", n, batch.size(), dir);
    }
    return 0;
  }
  if (e.mode == AgentMode::ExploreFrontierAff) e.model = model_predictor(load_model_file(o.model));
  const auto batch = run_exploration_batch(worlds, c.eval_reps, e, derive_seed(c.seed, stream_id(mode_name)), o.workers);
  write_batch(out, {mode_name, "explore"}, batch);
  spdlog::info("{} episodes written to {}", batch.size(), out);
  return 0;
}

int cmd_navigate(const Options& o) {
  const auto c = resolve_config(o);
  const auto out = require_out(o);
  const std::string variant = o.mode.empty() ? "geo" : o.mode;
  EpisodeConfig e = base_episode(c, true);
  e.mode = AgentMode::Navigate;
  if (variant == "aff")
    e.model = model_predictor(load_model_file(o.model));
  else if (variant == "geo-replan")
    e.replan_cadence = 1;
  else if (variant != "geo")
    throw Error("navigate --mode must be geo, geo-replan or aff");
  const auto trials = navigation_fixtures();
  const auto batch = run_navigation_batch(trials, c.eval_reps, e, derive_seed(c.seed, stream_id("navigate")), o.workers);
  write_batch(out, {"navigate-" + variant, "navigate"}, batch);
  spdlog::info("{} navigation episodes written to {}", batch.size(), out);
  return 0;
}

int cmd_active_loop(const Options& o) {
  const auto c = resolve_config(o);
  const auto worlds = load_worlds(o.worlds);
  const fs::path out = require_out(o);
  ActiveConfig a;
  a.schedule = {c.sampling.seed_n, c.sampling.batch_n, c.sampling.iterations};
  a.sampling = sampling_config(c);
  a.train = train_config(c);
  a.seed = derive_seed(c.seed, stream_id("active"));
  const auto r = active_learning_loop(worlds, a);
  fs::create_directories(out);
  write_model(r.model, (out / "model.amlp").string());
  write_dataset(r.dataset, (out / "dataset.afds").string());
  nlohmann::json sizes = r.dataset_sizes;
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& t : r.traces)
    traces.push_back({{"iteration", t.iteration}, {"path_entropy", t.path_entropy}, {"straight_entropy", t.straight_entropy},
                      {"straight_feasible", t.straight_feasible}});
  write_file_text((out / "active.json").string(),
                  nlohmann::json{{"dataset_sizes", sizes}, {"models_trained", r.models_trained}, {"plans", traces}}.dump(2) + "\n");
  spdlog::info("active loop finished with {} samples", r.dataset.size());
  return 0;
}

int cmd_report(const Options& o) {
  const auto c = resolve_config(o);
  std::vector<std::string> dirs = o.inputs;
  if (!o.worlds.empty())
    for (const auto& e : fs::directory_iterator(o.worlds))
      if (fs::is_directory(e.path()) && fs::exists(e.path() / "summary.json")) dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw Error("report needs at least one batch directory");
  const auto report = aggregate(load_batches(dirs), c.bucket_steps, c.episode.damage_budget);
  const auto text = report_text(report);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file_text((fs::path(o.out) / "report.json").string(), report_to_json(report).dump(2) + "\n");
    write_file_text((fs::path(o.out) / "report.txt").string(), text);
  }
  std::cout << text;
  return 0;
}

int cmd_selftest(const Options& o) {
  const auto c = resolve_config(o);
  int failures = 0;
  Rng rng(derive_seed(c.seed, stream_id("selftest")));

  // A* against a plain Dijkstra sweep.
  int astar_bad = 0;
  for (int k = 0; k < 20; ++k) {
    CostGrid g(24, 24, 1.0);
    for (auto& v : g.cost) v = rng.bernoulli(0.2) ? kInfCost : rng.uniform_int(1, 9);
    g.at({0, 0}) = 1;
    g.at({23, 23}) = 1;
    std::vector<double> dist(g.cost.size(), kInfCost);
    dist[0] = 0;
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t i = 0; i < g.cost.size(); ++i) {
        if (!std::isfinite(dist[i])) continue;
        const Cell cc = g.cell(i);
        for (auto [dx, dy] : kNeighbors4) {
          const Cell nb{cc.x + dx, cc.y + dy};
          if (!g.in_bounds(nb) || !std::isfinite(g.at(nb))) continue;
          if (dist[i] + g.at(nb) < dist[g.index(nb)]) {
            dist[g.index(nb)] = dist[i] + g.at(nb);
            changed = true;
          }
        }
      }
    }
    const auto p = astar(g, {0, 0}, {23, 23});
    const double want = dist.back();
    if ((p ? p->total_cost : kInfCost) != want) ++astar_bad;
  }
  std::cout << (astar_bad ? "FAIL" : "ok  ") << " astar vs relaxation oracle (20 maps)\n";
  failures += astar_bad != 0;

  // Gradient against central differences.
  Observation obs;
  obs.width = 12;
  obs.height = 10;
  for (int i = 0; i < obs.width * obs.height; ++i) {
    obs.texture.push_back(static_cast<std::uint16_t>(rng.uniform_int(0, textures::kCount - 1)));
    obs.depth.push_back(static_cast<float>(rng.uniform(10, 900)));
    obs.ground_x.push_back(0);
    obs.ground_y.push_back(0);
  }
  LabeledSample s{obs, {}, {}};
  for (int i = 0; i < obs.width * obs.height; ++i) {
    s.label.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 2)));
    s.weight.push_back(static_cast<float>(rng.uniform(0.1, 1.0)));
  }
  auto p = ModelParams<double>::init(FeatureSpec{}.dim(), rng.bits());
  const auto lg = masked_loss(p, s);
  double worst = 0;
  for (Eigen::Index i = 0; i < p.theta.size(); i += 7) {
    auto q = p;
    const double h = 1e-5;
    q.theta[i] += h;
    const double up = masked_loss(q, s).loss;
    q.theta[i] -= 2 * h;
    const double dn = masked_loss(q, s).loss;
    const double num = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(num - lg.grad[i]) / std::max({std::abs(num), std::abs(lg.grad[i]), 1e-6}));
  }
  std::cout << (worst < 1e-4 ? "ok  " : "FAIL") << " gradient check, max relative error " << worst << "\n";
  failures += worst >= 1e-4;

  // Ground-plane projection round trip.
  const auto world = generate_world(derive_seed(c.seed, stream_id("selftest-world")), c.world_params);
  const auto frame = render(world, world.spawn);
  double max_err = 0;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (!frame.ground_valid(i) || textures::category(frame.texture[i]) == textures::Category::Actor) continue;
    const auto px = project_world_point(frame.ground(i), frame.pose_true);
    if (!px) continue;
    const double du = px->u - (static_cast<double>(i % frame.width) + 0.0);
    const double dv = px->v - static_cast<double>(i / frame.width);
    max_err = std::max(max_err, std::hypot(du, dv));
  }
  std::cout << (max_err < 0.5 ? "ok  " : "FAIL") << " projection round trip, max error " << max_err << " px\n";
  failures += max_err >= 0.5;
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* lvl = std::getenv("AFF_LOG")) {
    const std::string l = lvl;
    spdlog::set_level(l == "debug" ? spdlog::level::debug : l == "error" ? spdlog::level::err : spdlog::level::info);
  }
  CLI::App app{"Affordance-map navigation testbed"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config JSON");
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) {
      o.seed = s;
      o.seed_set = true;
    }, "global seed");
    sub->add_option("--out", o.out, "output file or directory");
    sub->add_option("--mode", o.mode, "agent mode");
    sub->add_option("--worlds", o.worlds, "world directory, file or wildcard");
    sub->add_option("--model", o.model, "AMLP model file");
    sub->add_option("--dataset", o.dataset, "AFDS dataset file");
    sub->add_option("--reps", o.reps, "repetitions per world");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    if (sub->get_name() == "explore")
      sub->add_flag("--ablation", o.ablation, "frontier-aff once per config ablation size, trained on --dataset prefixes");
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Cmd cmds[] = {{"gen-worlds", "generate train/test world sets and hazard tags", cmd_gen_worlds},
                      {"sample", "collect a random self-supervised dataset", cmd_sample},
                      {"train", "train a navigability model", cmd_train},
                      {"explore", "run an exploration batch", cmd_explore},
                      {"navigate", "run the navigation fixture trials", cmd_navigate},
                      {"active-loop", "run the active sample/train schedule", cmd_active_loop},
                      {"report", "aggregate batch directories into a report", cmd_report},
                      {"selftest", "run the built-in oracle checks", cmd_selftest}};
  int (*chosen)(const Options&) = nullptr;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string(c.name) == "report") sub->add_option("inputs", o.inputs, "batch directories");
    sub->callback([&chosen, fn = c.fn] { chosen = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return chosen ? chosen(o) : 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
