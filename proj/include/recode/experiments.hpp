#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "recode/agent.hpp"
#include "recode/ap_model.hpp"
#include "recode/csv.hpp"
#include "recode/disco_maze.hpp"
#include "recode/embedders.hpp"
#include "recode/experiment_config.hpp"
#include "recode/gridworld.hpp"
#include "recode/memory.hpp"
#include "recode/memory_service.hpp"
#include "recode/normalizer.hpp"
#include "recode/stream.hpp"
#include "recode/svg.hpp"

#ifndef RECODE_GIT_REV
#define RECODE_GIT_REV "unknown"
#endif

namespace recode {

inline constexpr const char* kVersionString = "0.1.0-" RECODE_GIT_REV;

namespace fs = std::filesystem;

// Derives independent sub-seeds (memory, action rng, projection, ...) from a
// run seed.
inline std::uint64_t sub_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t x = base * 0x9E3779B97F4A7C15ull + salt;
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  return x;
}

// Every command writes the same reproducibility record: the effective config
// (defaults + file overrides), its hash, and the build version. No
// timestamps, so reruns are bit-identical.
inline void write_manifest(const fs::path& out_dir, const std::string& command,
                           const json& effective_config,
                           const std::vector<std::uint64_t>& seeds) {
  fs::create_directories(out_dir);
  const std::string dump = effective_config.dump(2);
  {
    std::ofstream out(out_dir / "effective_config.json");
    out << dump << "\n";
  }
  std::ofstream manifest(out_dir / "run_manifest.txt");
  manifest << "command " << command << "\n";
  manifest << "version " << kVersionString << "\n";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(dump)));
  manifest << "config_hash " << hash << "\n";
  manifest << "seeds";
  for (std::uint64_t s : seeds) manifest << " " << s;
  manifest << "\n";
}

// Tracks the insertion step of every live atom by observing ProcessResults
// in submission order.
class InsertionTracker {
 public:
  void observe(const ProcessResult& result) {
    ++step_;
    if (result.removed_index) {
      insertion_steps_.erase(insertion_steps_.begin() +
                             static_cast<std::ptrdiff_t>(*result.removed_index));
    }
    if (result.inserted) insertion_steps_.push_back(step_);
  }

  std::uint64_t steps() const { return step_; }

  std::vector<std::uint64_t> ages() const {
    std::vector<std::uint64_t> out;
    out.reserve(insertion_steps_.size());
    for (std::uint64_t s : insertion_steps_) out.push_back(step_ - s);
    return out;
  }

 private:
  std::vector<std::uint64_t> insertion_steps_;
  std::uint64_t step_ = 0;
};

inline double median_of(std::vector<std::uint64_t> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return static_cast<double>(values[n / 2]);
  return 0.5 * (static_cast<double>(values[n / 2 - 1]) + static_cast<double>(values[n / 2]));
}

// Coefficient of variation (std/mean) of values.
inline double coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (mean == 0.0) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size())) / mean;
}

// ---------------------------------------------------------------------------
// toy-density: expanding sqrt-square stream, one memory per discount.

struct ToyDensityConfig {
  StreamSchedule schedule{StreamKind::SqrtSquare, 64, 100};
  std::vector<double> gammas{0.9, 0.99, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  RecodeConfig recode = [] {
    RecodeConfig cfg;
    cfg.capacity = 256;
    return cfg;
  }();

  static ToyDensityConfig from_json(const json& root) {
    ToyDensityConfig cfg;
    ConfigSection section(root, "toy_density");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("gammas", cfg.gammas);
    section.read("seeds", cfg.seeds);
    if (section.has("stream")) apply_stream_section(section.take("stream"), cfg.schedule);
    if (section.has("recode")) apply_recode_section(section.take("recode"), cfg.recode);
    section.finish();
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "toy-density";
    j["gammas"] = gammas;
    j["seeds"] = seeds;
    j["stream"] = {{"kind", schedule.kind == StreamKind::CappedSquare ? "capped_square"
                                                                      : "sqrt_square"},
                   {"batch_size", schedule.batch_size},
                   {"horizon", schedule.horizon}};
    j["recode"] = {{"capacity", recode.capacity}, {"k", recode.k},       {"kappa", recode.kappa},
                   {"tau", recode.tau},           {"eta", recode.eta},   {"n0", recode.n0},
                   {"epsilon", recode.epsilon},   {"seed", recode.seed}, {"gamma", recode.gamma}};
    return j;
  }
};

struct ToyDensityCell {
  std::uint64_t seed = 0;
  double gamma = 0.0;
  double quadrant_share = 0.0;
  double total_count = 0.0;
  std::size_t atoms = 0;
};

struct ToyDensityResult {
  std::vector<ToyDensityCell> cells;  // seed-major, gamma-minor

  double quadrant_share(std::uint64_t seed, double gamma) const {
    for (const auto& c : cells) {
      if (c.seed == seed && c.gamma == gamma) return c.quadrant_share;
    }
    throw std::out_of_range("toy-density: no such cell");
  }
};

inline ToyDensityResult run_toy_density(const ToyDensityConfig& config, const fs::path& out_dir) {
  write_manifest(out_dir, "toy-density", config.to_json(), config.seeds);
  ToyDensityResult result;
  const double final_side = stream_side(config.schedule.kind, config.schedule.horizon);
  const double half = final_side / 2.0;

  CsvWriter summary(out_dir / "summary.csv",
                    {"seed", "gamma", "atoms", "total_count", "telescoped_count",
                     "quadrant_share"});

  for (std::uint64_t seed : config.seeds) {
    for (double gamma : config.gammas) {
      RecodeConfig mem_cfg = config.recode;
      mem_cfg.gamma = gamma;
      mem_cfg.seed = sub_seed(seed, 1);
      RecodeMemory memory(2, mem_cfg);
      Rng stream_rng(sub_seed(seed, 2));
      std::size_t processed = 0;
      for (std::size_t t = 0; t <= config.schedule.horizon; ++t) {
        for (const Embedding& e : expanding_square_batch(t, config.schedule, stream_rng)) {
          memory.process(e);
          ++processed;
        }
      }

      ToyDensityCell cell;
      cell.seed = seed;
      cell.gamma = gamma;
      cell.atoms = memory.atoms().size();
      double quadrant_mass = 0.0;
      for (const Atom& a : memory.atoms()) {
        cell.total_count += a.count;
        if (a.position[0] <= half && a.position[1] <= half) quadrant_mass += a.count;
      }
      cell.quadrant_share = cell.total_count > 0.0 ? quadrant_mass / cell.total_count : 0.0;
      result.cells.push_back(cell);

      char gamma_tag[32];
      std::snprintf(gamma_tag, sizeof(gamma_tag), "%g", gamma);
      CsvWriter atoms_csv(out_dir / ("atoms_gamma" + std::string(gamma_tag) + "_seed" +
                                     std::to_string(seed) + ".csv"),
                          {"x", "y", "count"});
      std::vector<ScatterPoint> points;
      for (const Atom& a : memory.atoms()) {
        atoms_csv.write_row(
            {csv_double(a.position[0]), csv_double(a.position[1]), csv_double(a.count)});
        points.push_back({a.position[0], a.position[1], a.count});
      }
      if (seed == config.seeds.front()) {
        svg_scatter(out_dir / ("atoms_gamma" + std::string(gamma_tag) + ".svg"), points,
                    final_side, "atom positions, discount " + std::string(gamma_tag));
      }

      double telescoped = 0.0;
      for (std::size_t i = 0; i < processed; ++i) telescoped = telescoped * gamma + 1.0;
      summary.write_row({std::to_string(seed), gamma_tag, std::to_string(cell.atoms),
                         csv_double(cell.total_count), csv_double(telescoped),
                         csv_double(cell.quadrant_share)});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// removal-ablation: capped-square stream, one memory per removal strategy.

struct RemovalAblationConfig {
  StreamSchedule schedule{StreamKind::CappedSquare, 64, 2100};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t bins = 4;
  RecodeConfig recode = [] {
    RecodeConfig cfg;
    cfg.capacity = 256;
    cfg.gamma = 0.9999;
    return cfg;
  }();

  static RemovalAblationConfig from_json(const json& root) {
    RemovalAblationConfig cfg;
    ConfigSection section(root, "removal_ablation");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("seeds", cfg.seeds);
    section.read("bins", cfg.bins);
    if (section.has("stream")) apply_stream_section(section.take("stream"), cfg.schedule);
    if (section.has("recode")) apply_recode_section(section.take("recode"), cfg.recode);
    section.finish();
    if (cfg.bins < 2) throw std::invalid_argument("removal-ablation: bins must be >= 2");
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "removal-ablation";
    j["seeds"] = seeds;
    j["bins"] = bins;
    j["stream"] = {{"kind", schedule.kind == StreamKind::CappedSquare ? "capped_square"
                                                                      : "sqrt_square"},
                   {"batch_size", schedule.batch_size},
                   {"horizon", schedule.horizon}};
    j["recode"] = {{"capacity", recode.capacity}, {"k", recode.k},       {"kappa", recode.kappa},
                   {"tau", recode.tau},           {"eta", recode.eta},   {"n0", recode.n0},
                   {"epsilon", recode.epsilon},   {"seed", recode.seed}, {"gamma", recode.gamma}};
    return j;
  }
};

struct RemovalAblationCell {
  std::uint64_t seed = 0;
  RemovalStrategy strategy = RemovalStrategy::InverseCountSquared;
  double count_cv = 0.0;
  double center_cv = 0.0;
  std::size_t atoms = 0;
  double total_count = 0.0;
};

struct RemovalAblationResult {
  std::vector<RemovalAblationCell> cells;

  double count_cv(std::uint64_t seed, RemovalStrategy strategy) const {
    for (const auto& c : cells) {
      if (c.seed == seed && c.strategy == strategy) return c.count_cv;
    }
    throw std::out_of_range("removal-ablation: no such cell");
  }
};

inline RemovalAblationResult run_removal_ablation(const RemovalAblationConfig& config,
                                                  const fs::path& out_dir) {
  write_manifest(out_dir, "removal-ablation", config.to_json(), config.seeds);
  RemovalAblationResult result;
  const double side = 100.0;  // stationary support of the capped schedule

  CsvWriter metrics(out_dir / "metrics.csv",
                    {"seed", "strategy", "atoms", "total_count", "count_cv", "center_cv"});

  for (std::uint64_t seed : config.seeds) {
    for (RemovalStrategy strategy :
         {RemovalStrategy::InverseCountSquared, RemovalStrategy::InverseCount,
          RemovalStrategy::MinCount}) {
      RecodeConfig mem_cfg = config.recode;
      mem_cfg.removal = strategy;
      mem_cfg.seed = sub_seed(seed, 3);
      RecodeMemory memory(2, mem_cfg);
      // Matched seeds: every strategy consumes the identical stream.
      Rng stream_rng(sub_seed(seed, 4));
      for (std::size_t t = 0; t <= config.schedule.horizon; ++t) {
        for (const Embedding& e : expanding_square_batch(t, config.schedule, stream_rng)) {
          memory.process(e);
        }
      }

      const std::size_t bins = config.bins;
      std::vector<double> bin_counts(bins * bins, 0.0);
      std::vector<double> bin_centers(bins * bins, 0.0);
      for (const Atom& a : memory.atoms()) {
        auto bin_of = [&](double v) {
          const auto b = static_cast<std::size_t>(v / side * static_cast<double>(bins));
          return std::min(b, bins - 1);
        };
        const std::size_t b = bin_of(a.position[1]) * bins + bin_of(a.position[0]);
        bin_counts[b] += a.count;
        bin_centers[b] += 1.0;
      }

      RemovalAblationCell cell;
      cell.seed = seed;
      cell.strategy = strategy;
      cell.count_cv = coefficient_of_variation(bin_counts);
      cell.center_cv = coefficient_of_variation(bin_centers);
      cell.atoms = memory.atoms().size();
      cell.total_count = memory.total_count();
      result.cells.push_back(cell);

      metrics.write_row({std::to_string(seed), to_string(strategy), std::to_string(cell.atoms),
                         csv_double(cell.total_count), csv_double(cell.count_cv),
                         csv_double(cell.center_cv)});

      CsvWriter atoms_csv(out_dir / ("atoms_" + std::string(to_string(strategy)) + "_seed" +
                                     std::to_string(seed) + ".csv"),
                          {"x", "y", "count"});
      std::vector<ScatterPoint> points;
      for (const Atom& a : memory.atoms()) {
        atoms_csv.write_row(
            {csv_double(a.position[0]), csv_double(a.position[1]), csv_double(a.count)});
        points.push_back({a.position[0], a.position[1], a.count});
      }
      if (seed == config.seeds.front()) {
        svg_scatter(out_dir / ("atoms_" + std::string(to_string(strategy)) + ".svg"), points,
                    side, std::string("atoms under ") + to_string(strategy));
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// disco-maze: exploration arms vs the random baseline on a fixed maze.

struct DiscoMazeExpConfig {
  DiscoMazeConfig maze = [] {
    DiscoMazeConfig cfg;
    cfg.size = 11;
    cfg.seed = 7;  // fixed layout shared by every arm and seed
    return cfg;
  }();
  AgentConfig agent;
  RecodeConfig recode = [] {
    RecodeConfig cfg;
    cfg.capacity = 256;
    cfg.gamma = 0.999;
    return cfg;
  }();
  std::size_t step_budget = 30000;  // frozen by pilot run
  std::size_t proj_dim = 32;
  std::size_t coverage_stride = 100;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  static DiscoMazeExpConfig from_json(const json& root) {
    DiscoMazeExpConfig cfg;
    ConfigSection section(root, "disco_maze");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("seeds", cfg.seeds);
    section.read("step_budget", cfg.step_budget);
    section.read("proj_dim", cfg.proj_dim);
    section.read("coverage_stride", cfg.coverage_stride);
    if (section.has("maze")) apply_maze_section(section.take("maze"), cfg.maze);
    if (section.has("agent")) apply_agent_section(section.take("agent"), cfg.agent);
    if (section.has("recode")) apply_recode_section(section.take("recode"), cfg.recode);
    section.finish();
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "disco-maze";
    j["seeds"] = seeds;
    j["step_budget"] = step_budget;
    j["proj_dim"] = proj_dim;
    j["coverage_stride"] = coverage_stride;
    j["maze"] = {{"size", maze.size},
                 {"num_colors", maze.num_colors},
                 {"max_steps", maze.max_steps},
                 {"seed", maze.seed}};
    j["agent"] = {{"alpha", agent.alpha},       {"epsilon", agent.epsilon},
                  {"gamma_rl", agent.gamma_rl}, {"beta_im", agent.beta_im},
                  {"episode_budget", agent.episode_budget}};
    j["recode"] = {{"capacity", recode.capacity}, {"k", recode.k},       {"kappa", recode.kappa},
                   {"tau", recode.tau},           {"eta", recode.eta},   {"n0", recode.n0},
                   {"epsilon", recode.epsilon},   {"seed", recode.seed}, {"gamma", recode.gamma}};
    return j;
  }
};

struct DiscoArmOutcome {
  std::size_t unique_states = 0;
  bool goal_reached = false;
  std::size_t episodes = 0;
};

struct DiscoMazeResult {
  // Per seed: position arm, full (noisy) arm, random baseline.
  struct PerSeed {
    std::uint64_t seed = 0;
    DiscoArmOutcome position;
    DiscoArmOutcome full;
    DiscoArmOutcome baseline;
  };
  std::vector<PerSeed> per_seed;
};

inline DiscoMazeResult run_disco_maze(const DiscoMazeExpConfig& config, const fs::path& out_dir) {
  write_manifest(out_dir, "disco-maze", config.to_json(), config.seeds);
  DiscoMazeResult result;

  {
    DiscoMaze maze(config.maze);
    std::ofstream layout(out_dir / "maze_layout.txt");
    layout << maze.ascii_layout();
  }

  CsvWriter summary(out_dir / "summary.csv",
                    {"seed", "arm", "unique_states", "goal_reached", "episodes", "steps"});

  auto write_arm_outputs = [&](std::uint64_t seed, const std::string& arm,
                               const ExplorationRun& run) {
    CsvWriter episodes(
        out_dir / ("episodes_" + arm + "_seed" + std::to_string(seed) + ".csv"),
        {"episode", "length", "extrinsic_return", "intrinsic_sum", "unique_states", "cause"});
    for (std::size_t i = 0; i < run.episodes.size(); ++i) {
      const EpisodeRecord& ep = run.episodes[i];
      episodes.write_row({std::to_string(i), std::to_string(ep.length),
                          csv_double(ep.extrinsic_return), csv_double(ep.intrinsic_sum),
                          std::to_string(ep.unique_states), to_string(ep.cause)});
    }
    CsvWriter coverage(out_dir / ("coverage_" + arm + "_seed" + std::to_string(seed) + ".csv"),
                       {"step", "unique_states"});
    for (std::size_t i = 0; i < run.coverage_curve.size(); ++i) {
      if ((i + 1) % config.coverage_stride == 0 || i + 1 == run.coverage_curve.size()) {
        coverage.write_row({std::to_string(i + 1), std::to_string(run.coverage_curve[i])});
      }
    }
    summary.write_row({std::to_string(seed), arm, std::to_string(run.unique_states),
                       run.goal_reached ? "1" : "0", std::to_string(run.episodes.size()),
                       std::to_string(run.steps_used)});
  };

  for (std::uint64_t seed : config.seeds) {
    DiscoMazeResult::PerSeed row;
    row.seed = seed;

    {  // position arm: noiseless one-hot featurizer
      DiscoMazeConfig env_cfg = config.maze;
      env_cfg.render_mode = RenderMode::PositionOnly;
      DiscoMaze env(env_cfg);
      RecodeConfig mem_cfg = config.recode;
      mem_cfg.seed = sub_seed(seed, 11);
      RecodeMemory memory(env.num_states(), mem_cfg);
      RewardNormalizer normalizer;
      QTable q = make_q_table(env.num_states());
      AgentConfig agent = config.agent;
      agent.seed = sub_seed(seed, 12);
      Rng rng(agent.seed);
      const EmbedFn embed = [](const Observation& obs) { return obs; };
      const ExplorationRun run = run_exploration_budget(env, embed, memory, normalizer, q, agent,
                                                        rng, config.step_budget);
      row.position = {run.unique_states, run.goal_reached, run.episodes.size()};
      write_arm_outputs(seed, "position", run);

      // Atom overlay: map each atom to its dominant cell.
      std::vector<double> cell_weights(env.num_states(), 0.0);
      for (const Atom& a : memory.atoms()) {
        const std::size_t cell = static_cast<std::size_t>(
            std::max_element(a.position.begin(), a.position.end()) - a.position.begin());
        cell_weights[cell] += a.count;
      }
      svg_maze_overlay(out_dir / ("atoms_position_seed" + std::to_string(seed) + ".svg"),
                       env.ascii_layout(), cell_weights, env.size(),
                       "atom mass per cell, seed " + std::to_string(seed));
    }

    {  // full-render arm: wall colors resample every step (noisy featurizer)
      DiscoMazeConfig env_cfg = config.maze;
      env_cfg.render_mode = RenderMode::Full;
      DiscoMaze env(env_cfg);
      const RandomProjection projection(config.proj_dim, env.observation_dim(),
                                        sub_seed(seed, 13));
      RecodeConfig mem_cfg = config.recode;
      mem_cfg.seed = sub_seed(seed, 14);
      RecodeMemory memory(config.proj_dim, mem_cfg);
      RewardNormalizer normalizer;
      QTable q = make_q_table(env.num_states());
      AgentConfig agent = config.agent;
      agent.seed = sub_seed(seed, 12);  // same action stream as the position arm
      Rng rng(agent.seed);
      const EmbedFn embed = [&projection](const Observation& obs) {
        return projection.embed(obs);
      };
      const ExplorationRun run = run_exploration_budget(env, embed, memory, normalizer, q, agent,
                                                        rng, config.step_budget);
      row.full = {run.unique_states, run.goal_reached, run.episodes.size()};
      write_arm_outputs(seed, "full", run);
    }

    {  // uniform-random baseline
      DiscoMazeConfig env_cfg = config.maze;
      env_cfg.render_mode = RenderMode::PositionOnly;
      DiscoMaze env(env_cfg);
      std::vector<std::size_t> curve;
      const BaselineStats stats =
          run_random_baseline(env, config.step_budget, sub_seed(seed, 15), &curve);
      row.baseline = {stats.unique_states, stats.goal_reached, stats.episodes_completed};
      CsvWriter coverage(out_dir / ("coverage_baseline_seed" + std::to_string(seed) + ".csv"),
                         {"step", "unique_states"});
      for (std::size_t i = 0; i < curve.size(); ++i) {
        if ((i + 1) % config.coverage_stride == 0 || i + 1 == curve.size()) {
          coverage.write_row({std::to_string(i + 1), std::to_string(curve[i])});
        }
      }
      summary.write_row({std::to_string(seed), "baseline", std::to_string(stats.unique_states),
                         stats.goal_reached ? "1" : "0",
                         std::to_string(stats.episodes_completed),
                         std::to_string(stats.steps_used)});
    }

    result.per_seed.push_back(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// cluster-ages: age histogram of live atoms after a long maze run.

struct ClusterAgesConfig {
  DiscoMazeConfig maze = [] {
    DiscoMazeConfig cfg;
    cfg.size = 11;
    cfg.seed = 7;
    return cfg;
  }();
  AgentConfig agent;
  RecodeConfig recode = [] {
    RecodeConfig cfg;
    cfg.capacity = 256;
    cfg.gamma = 0.999;
    return cfg;
  }();
  std::size_t episodes = 150;
  std::size_t histogram_bins = 20;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  static ClusterAgesConfig from_json(const json& root) {
    ClusterAgesConfig cfg;
    ConfigSection section(root, "cluster_ages");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("seeds", cfg.seeds);
    section.read("episodes", cfg.episodes);
    section.read("histogram_bins", cfg.histogram_bins);
    if (section.has("maze")) apply_maze_section(section.take("maze"), cfg.maze);
    if (section.has("agent")) apply_agent_section(section.take("agent"), cfg.agent);
    if (section.has("recode")) apply_recode_section(section.take("recode"), cfg.recode);
    section.finish();
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "cluster-ages";
    j["seeds"] = seeds;
    j["episodes"] = episodes;
    j["histogram_bins"] = histogram_bins;
    j["maze"] = {{"size", maze.size},
                 {"num_colors", maze.num_colors},
                 {"max_steps", maze.max_steps},
                 {"seed", maze.seed}};
    j["agent"] = {{"alpha", agent.alpha},       {"epsilon", agent.epsilon},
                  {"gamma_rl", agent.gamma_rl}, {"beta_im", agent.beta_im},
                  {"episode_budget", agent.episode_budget}};
    j["recode"] = {{"capacity", recode.capacity}, {"k", recode.k},       {"kappa", recode.kappa},
                   {"tau", recode.tau},           {"eta", recode.eta},   {"n0", recode.n0},
                   {"epsilon", recode.epsilon},   {"seed", recode.seed}, {"gamma", recode.gamma}};
    return j;
  }
};

struct ClusterAgesResult {
  struct PerSeed {
    std::uint64_t seed = 0;
    double median_age = 0.0;
    std::uint64_t total_steps = 0;
    std::size_t atoms = 0;
  };
  std::vector<PerSeed> per_seed;
};

inline ClusterAgesResult run_cluster_ages(const ClusterAgesConfig& config,
                                          const fs::path& out_dir) {
  write_manifest(out_dir, "cluster-ages", config.to_json(), config.seeds);
  ClusterAgesResult result;
  CsvWriter summary(out_dir / "summary.csv",
                    {"seed", "median_age", "total_steps", "atoms", "episodes", "episode_cap"});

  for (std::uint64_t seed : config.seeds) {
    DiscoMazeConfig env_cfg = config.maze;
    env_cfg.render_mode = RenderMode::PositionOnly;
    DiscoMaze env(env_cfg);
    RecodeConfig mem_cfg = config.recode;
    mem_cfg.seed = sub_seed(seed, 21);
    RecodeMemory memory(env.num_states(), mem_cfg);
    RewardNormalizer normalizer;
    QTable q = make_q_table(env.num_states());
    AgentConfig agent = config.agent;
    agent.seed = sub_seed(seed, 22);
    Rng rng(agent.seed);
    const EmbedFn embed = [](const Observation& obs) { return obs; };

    InsertionTracker tracker;
    const ProcessHook hook = [&tracker](const ProcessResult& r) { tracker.observe(r); };
    for (std::size_t episode = 0; episode < config.episodes; ++episode) {
      run_episode(env, embed, memory, normalizer, q, agent, rng, nullptr, &hook);
    }

    const std::vector<std::uint64_t> ages = tracker.ages();
    ClusterAgesResult::PerSeed row;
    row.seed = seed;
    row.median_age = median_of(ages);
    row.total_steps = tracker.steps();
    row.atoms = ages.size();
    result.per_seed.push_back(row);

    // Histogram over [0, max_age].
    const std::uint64_t max_age = ages.empty() ? 1 : *std::max_element(ages.begin(), ages.end());
    const std::size_t bins = config.histogram_bins;
    std::vector<double> counts(bins, 0.0);
    std::vector<double> edges(bins + 1, 0.0);
    for (std::size_t b = 0; b <= bins; ++b) {
      edges[b] = static_cast<double>(b) * static_cast<double>(max_age) /
                 static_cast<double>(bins);
    }
    for (std::uint64_t age : ages) {
      auto b = static_cast<std::size_t>(static_cast<double>(age) / static_cast<double>(max_age) *
                                        static_cast<double>(bins));
      counts[std::min(b, bins - 1)] += 1.0;
    }
    CsvWriter histogram(out_dir / ("ages_seed" + std::to_string(seed) + ".csv"),
                        {"bin_lo", "bin_hi", "count", "episode_cap"});
    for (std::size_t b = 0; b < bins; ++b) {
      histogram.write_row({csv_double(edges[b]), csv_double(edges[b + 1]), csv_double(counts[b]),
                           std::to_string(config.maze.max_steps)});
    }
    svg_histogram(out_dir / ("ages_seed" + std::to_string(seed) + ".svg"), edges, counts,
                  static_cast<double>(config.maze.max_steps),
                  "atom ages, seed " + std::to_string(seed));
    summary.write_row({std::to_string(seed), csv_double(row.median_age),
                       std::to_string(row.total_steps), std::to_string(row.atoms),
                       std::to_string(config.episodes), std::to_string(config.maze.max_steps)});
  }
  return result;
}

// ---------------------------------------------------------------------------
// tabular-oracle: exact-count equivalence on one-hot embeddings.

struct TabularOracleConfig {
  std::size_t grid_size = 5;
  std::size_t steps = 10000;
  std::vector<std::uint64_t> seeds{1};
  RecodeConfig recode = [] {
    RecodeConfig cfg;
    cfg.capacity = 64;
    cfg.gamma = 1.0;
    return cfg;
  }();

  static TabularOracleConfig from_json(const json& root) {
    TabularOracleConfig cfg;
    ConfigSection section(root, "tabular_oracle");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("seeds", cfg.seeds);
    section.read("grid_size", cfg.grid_size);
    section.read("steps", cfg.steps);
    if (section.has("recode")) apply_recode_section(section.take("recode"), cfg.recode);
    section.finish();
    if (cfg.recode.capacity < cfg.grid_size * cfg.grid_size) {
      throw std::invalid_argument("tabular-oracle: capacity must cover the state set");
    }
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "tabular-oracle";
    j["seeds"] = seeds;
    j["grid_size"] = grid_size;
    j["steps"] = steps;
    j["recode"] = {{"capacity", recode.capacity}, {"k", recode.k},       {"kappa", recode.kappa},
                   {"tau", recode.tau},           {"eta", recode.eta},   {"n0", recode.n0},
                   {"epsilon", recode.epsilon},   {"seed", recode.seed}, {"gamma", recode.gamma}};
    return j;
  }
};

struct TabularOracleResult {
  struct PerSeed {
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    std::size_t mismatches = 0;
    std::optional<std::size_t> first_mismatch_step;
    bool counts_match = false;
  };
  std::vector<PerSeed> per_seed;

  bool all_exact() const {
    for (const auto& row : per_seed) {
      if (row.mismatches != 0 || !row.counts_match) return false;
    }
    return true;
  }
};

// The (1 + c) weighting makes the soft count of a state with v prior visits
// equal v + 1 once its atom exists, and 0 before the first insertion. The
// oracle recomputes that map from a plain visit counter.
inline double oracle_soft_count(std::size_t prior_visits) {
  return prior_visits == 0 ? 0.0 : static_cast<double>(prior_visits) + 1.0;
}

inline TabularOracleResult run_tabular_oracle(const TabularOracleConfig& config,
                                              const fs::path& out_dir) {
  write_manifest(out_dir, "tabular-oracle", config.to_json(), config.seeds);
  TabularOracleResult result;
  CsvWriter summary(out_dir / "summary.csv",
                    {"seed", "steps", "mismatches", "first_mismatch_step", "counts_match"});
  CsvWriter mismatches(out_dir / "mismatches.csv",
                       {"seed", "step", "state", "expected_reward", "actual_reward"});

  for (std::uint64_t seed : config.seeds) {
    const std::size_t n_states = config.grid_size * config.grid_size;
    Gridworld env(config.grid_size, n_states - 1, 0);
    RecodeConfig mem_cfg = config.recode;
    mem_cfg.seed = sub_seed(seed, 31);
    RecodeMemory memory(n_states, mem_cfg);
    Rng action_rng(sub_seed(seed, 32));
    std::map<std::size_t, std::size_t> visits;

    TabularOracleResult::PerSeed row;
    row.seed = seed;
    row.steps = config.steps;

    env.reset();
    for (std::size_t step = 1; step <= config.steps; ++step) {
      const std::size_t state = env.state_index();
      const double expected =
          intrinsic_reward_raw(oracle_soft_count(visits[state]), config.recode.n0);
      const double actual = memory.process(one_hot_embed(state, n_states)).reward;
      visits[state] += 1;
      if (actual != expected) {
        ++row.mismatches;
        if (!row.first_mismatch_step) row.first_mismatch_step = step;
        if (row.mismatches <= 100) {
          mismatches.write_row({std::to_string(seed), std::to_string(step),
                                std::to_string(state), csv_double(expected),
                                csv_double(actual)});
        }
      }
      if (env.done()) {
        env.reset();
      } else if (step == 1) {
        env.step(Action::Right);  // guarantee two distinct states up front
      } else {
        env.step(static_cast<Action>(action_rng.uniform_index(kNumActions)));
      }
    }

    // Final per-state counts must equal the exact visit tallies.
    row.counts_match = true;
    std::map<std::size_t, double> atom_counts;
    for (const Atom& a : memory.atoms()) {
      const std::size_t cell = static_cast<std::size_t>(
          std::max_element(a.position.begin(), a.position.end()) - a.position.begin());
      atom_counts[cell] += a.count;
    }
    for (const auto& [state, count] : visits) {
      if (atom_counts[state] != static_cast<double>(count)) row.counts_match = false;
    }
    if (atom_counts.size() != visits.size()) row.counts_match = false;

    summary.write_row({std::to_string(seed), std::to_string(row.steps),
                       std::to_string(row.mismatches),
                       row.first_mismatch_step ? std::to_string(*row.first_mismatch_step) : "",
                       row.counts_match ? "1" : "0"});
    result.per_seed.push_back(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// grad-check: finite-difference validation of the AP gradients.

struct GradCheckConfig {
  APConfig model = [] {
    APConfig cfg;
    cfg.obs_dim = 25;
    cfg.num_actions = 4;
    cfg.encoder_hidden = 32;
    cfg.embedding_dim = 8;
    cfg.classifier_hidden = 32;
    cfg.init_scale = 0.1;  // representative parameter scale for the check
    return cfg;
  }();
  std::size_t batch_size = 50;
  std::size_t samples = 250;
  double step = 1e-5;
  double threshold = 1e-4;
  std::vector<std::uint64_t> seeds{1};

  static GradCheckConfig from_json(const json& root) {
    GradCheckConfig cfg;
    ConfigSection section(root, "grad_check");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("seeds", cfg.seeds);
    section.read("batch_size", cfg.batch_size);
    section.read("samples", cfg.samples);
    section.read("step", cfg.step);
    section.read("threshold", cfg.threshold);
    section.finish();
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "grad-check";
    j["seeds"] = seeds;
    j["batch_size"] = batch_size;
    j["samples"] = samples;
    j["step"] = step;
    j["threshold"] = threshold;
    return j;
  }
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double corrupted_error = 0.0;
  double threshold = 0.0;
  bool pass = false;  // honest gradients pass AND the corrupted block fails
};

inline GradCheckResult run_grad_check(const GradCheckConfig& config, const fs::path& out_dir) {
  write_manifest(out_dir, "grad-check", config.to_json(), config.seeds);
  GradCheckResult result;
  result.threshold = config.threshold;
  CsvWriter csv(out_dir / "grad_check.csv",
                {"seed", "check", "max_rel_error", "threshold", "pass"});

  for (std::uint64_t seed : config.seeds) {
    APConfig model_cfg = config.model;
    model_cfg.seed = sub_seed(seed, 41);
    APModel model(model_cfg);

    // Random-walk transitions on an open gridworld, same substrate as the
    // tabular experiments.
    Gridworld env(5, 24, 0);
    Rng walk_rng(sub_seed(seed, 42));
    TransitionBatch batch;
    Observation obs = env.reset();
    while (batch.size() < config.batch_size) {
      if (env.done()) obs = env.reset();
      const auto action = static_cast<Action>(walk_rng.uniform_index(kNumActions));
      const StepResult step = env.step(action);
      batch.push_back({obs, static_cast<std::size_t>(action), step.observation});
      obs = step.observation;
    }

    const auto gradients = model.compute_gradients(batch);
    Rng check_rng(sub_seed(seed, 43));
    result.max_rel_error = max_relative_gradient_error(model, batch, gradients.grad,
                                                       config.samples, config.step, check_rng);

    auto corrupted = gradients.grad;
    const APLayout& layout = model.layout();
    for (std::size_t i = 0; i < layout.w2_size; ++i) corrupted[layout.w2_off + i] *= 2.0;
    Rng corrupted_rng(sub_seed(seed, 43));
    result.corrupted_error = max_relative_gradient_error(model, batch, corrupted,
                                                         model.parameters().size(), config.step,
                                                         corrupted_rng);

    result.pass = result.max_rel_error < config.threshold &&
                  result.corrupted_error > config.threshold;
    csv.write_row({std::to_string(seed), "analytic", csv_double(result.max_rel_error),
                   csv_double(config.threshold),
                   result.max_rel_error < config.threshold ? "1" : "0"});
    csv.write_row({std::to_string(seed), "corrupted_block", csv_double(result.corrupted_error),
                   csv_double(config.threshold),
                   result.corrupted_error > config.threshold ? "1" : "0"});
  }
  return result;
}

// ---------------------------------------------------------------------------
// concurrency-check: shared-memory service vs sequential replay.

struct ConcurrencyConfig {
  std::size_t actors = 4;
  std::size_t steps_per_actor = 10000;
  std::vector<std::uint64_t> seeds{1};
  RecodeConfig recode = [] {
    RecodeConfig cfg;
    cfg.capacity = 64;
    cfg.gamma = 0.999;
    return cfg;
  }();

  static ConcurrencyConfig from_json(const json& root) {
    ConcurrencyConfig cfg;
    ConfigSection section(root, "concurrency_check");
    std::string experiment;
    section.read("experiment", experiment);
    section.read("seeds", cfg.seeds);
    section.read("actors", cfg.actors);
    section.read("steps_per_actor", cfg.steps_per_actor);
    if (section.has("recode")) apply_recode_section(section.take("recode"), cfg.recode);
    section.finish();
    return cfg;
  }

  json to_json() const {
    json j;
    j["experiment"] = "concurrency-check";
    j["seeds"] = seeds;
    j["actors"] = actors;
    j["steps_per_actor"] = steps_per_actor;
    j["recode"] = {{"capacity", recode.capacity}, {"k", recode.k},       {"kappa", recode.kappa},
                   {"tau", recode.tau},           {"eta", recode.eta},   {"n0", recode.n0},
                   {"epsilon", recode.epsilon},   {"seed", recode.seed}, {"gamma", recode.gamma}};
    return j;
  }
};

struct ConcurrencyResult {
  bool round_robin_identical = false;
  std::uint64_t submissions = 0;
  bool counter_consistent = false;
  bool free_running_invariants_ok = false;
  double free_running_count_error = 0.0;
};

inline ConcurrencyResult run_concurrency_check(const ConcurrencyConfig& config,
                                               const fs::path& out_dir) {
  write_manifest(out_dir, "concurrency-check", config.to_json(), config.seeds);
  ConcurrencyResult result;
  const std::uint64_t seed = config.seeds.empty() ? 1 : config.seeds.front();

  auto embedding_for = [seed](std::size_t actor, std::size_t step) -> Embedding {
    Rng rng(sub_seed(seed, actor * 1000003 + step));
    return {rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0)};
  };

  RecodeConfig mem_cfg = config.recode;
  mem_cfg.seed = sub_seed(seed, 51);

  {  // round-robin vs sequential replay
    MemoryService service{RecodeMemory(2, mem_cfg)};
    const ActorRunStats stats =
        spawn_actors(service, config.actors, config.steps_per_actor, embedding_for,
                     SchedulingMode::DeterministicRoundRobin);
    result.submissions = service.submissions();
    result.counter_consistent = stats.total_submissions == result.submissions &&
                                result.submissions == config.actors * config.steps_per_actor;

    RecodeMemory replay(2, mem_cfg);
    RewardNormalizer replay_norm;
    for (std::size_t step = 0; step < config.steps_per_actor; ++step) {
      for (std::size_t actor = 0; actor < config.actors; ++actor) {
        replay_norm.normalize(replay.process(embedding_for(actor, step)).reward);
      }
    }
    result.round_robin_identical = service.memory_snapshot() == replay.snapshot_string();
  }

  {  // free-running invariants
    MemoryService service{RecodeMemory(2, mem_cfg)};
    spawn_actors(service, config.actors, config.steps_per_actor, embedding_for,
                 SchedulingMode::FreeRunning);
    const RecodeMemory memory = service.memory_copy();
    double telescoped = 0.0;
    for (std::size_t i = 0; i < config.actors * config.steps_per_actor; ++i) {
      telescoped = telescoped * mem_cfg.gamma + 1.0;
    }
    result.free_running_count_error =
        std::abs(memory.total_count() - telescoped) / telescoped;
    bool ok = memory.atoms().size() <= mem_cfg.capacity &&
              result.free_running_count_error < 1e-6 && memory.bandwidth_sq() >= 0.0;
    for (const Atom& a : memory.atoms()) {
      ok = ok && a.count >= 0.0 && all_finite(a.position);
    }
    result.free_running_invariants_ok = ok;
  }

  CsvWriter csv(out_dir / "concurrency.csv",
                {"actors", "steps_per_actor", "submissions", "round_robin_identical",
                 "counter_consistent", "free_running_invariants_ok",
                 "free_running_count_error"});
  csv.write_row({std::to_string(config.actors), std::to_string(config.steps_per_actor),
                 std::to_string(result.submissions), result.round_robin_identical ? "1" : "0",
                 result.counter_consistent ? "1" : "0",
                 result.free_running_invariants_ok ? "1" : "0",
                 csv_double(result.free_running_count_error)});
  return result;
}

}  // namespace recode
