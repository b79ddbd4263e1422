#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recode/experiments.hpp"

namespace {

using namespace recode;

struct CommonArgs {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
};

CommonArgs* add_common(CLI::App* cmd, const std::string& default_out) {
  auto* args = new CommonArgs;  // lives for the duration of main
  args->out_dir = default_out;
  cmd->add_option("--config", args->config_path, "JSON config file");
  cmd->add_option("--seed", args->seeds, "override the config's seeds list");
  cmd->add_option("--out", args->out_dir, "output directory");
  return args;
}

json load_root(const CommonArgs& args, const std::string& command) {
  if (args.config_path.empty()) return json::object();
  json root = load_config_file(args.config_path);
  if (root.contains("experiment") && root["experiment"] != command) {
    throw std::runtime_error("config: experiment is '" + root["experiment"].get<std::string>() +
                             "' but the subcommand is '" + command + "'");
  }
  return root;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RECODE exploration toolkit: streaming clustering memory, toy "
               "environments, and the experiments that validate them"};
  app.require_subcommand(1);
  int exit_code = 0;

  {
    auto* cmd = app.add_subcommand("toy-density",
                                   "expanding sqrt-square stream under a discount sweep");
    auto* args = add_common(cmd, "out/toy-density");
    cmd->callback([args, &exit_code] {
      auto cfg = ToyDensityConfig::from_json(load_root(*args, "toy-density"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_toy_density(cfg, args->out_dir);
      for (const auto& cell : result.cells) {
        std::printf("seed %llu gamma %-6g atoms %4zu quadrant_share %.4f\n",
                    static_cast<unsigned long long>(cell.seed), cell.gamma, cell.atoms,
                    cell.quadrant_share);
      }
      (void)exit_code;
    });
  }

  {
    auto* cmd = app.add_subcommand("removal-ablation",
                                   "spatial uniformity of the three removal strategies");
    auto* args = add_common(cmd, "out/removal-ablation");
    cmd->callback([args] {
      auto cfg = RemovalAblationConfig::from_json(load_root(*args, "removal-ablation"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_removal_ablation(cfg, args->out_dir);
      for (const auto& cell : result.cells) {
        std::printf("seed %llu %-22s count_cv %.4f center_cv %.4f\n",
                    static_cast<unsigned long long>(cell.seed), to_string(cell.strategy),
                    cell.count_cv, cell.center_cv);
      }
    });
  }

  {
    auto* cmd = app.add_subcommand("disco-maze",
                                   "exploration arms vs random baseline on the disco maze");
    auto* args = add_common(cmd, "out/disco-maze");
    cmd->callback([args] {
      auto cfg = DiscoMazeExpConfig::from_json(load_root(*args, "disco-maze"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_disco_maze(cfg, args->out_dir);
      for (const auto& row : result.per_seed) {
        std::printf("seed %llu position: coverage %3zu goal %d | full: coverage %3zu goal %d | "
                    "baseline: coverage %3zu goal %d\n",
                    static_cast<unsigned long long>(row.seed), row.position.unique_states,
                    row.position.goal_reached, row.full.unique_states, row.full.goal_reached,
                    row.baseline.unique_states, row.baseline.goal_reached);
      }
    });
  }

  {
    auto* cmd = app.add_subcommand("cluster-ages", "age histogram of live atoms after a maze run");
    auto* args = add_common(cmd, "out/cluster-ages");
    cmd->callback([args] {
      auto cfg = ClusterAgesConfig::from_json(load_root(*args, "cluster-ages"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_cluster_ages(cfg, args->out_dir);
      for (const auto& row : result.per_seed) {
        std::printf("seed %llu median_age %.1f total_steps %llu atoms %zu\n",
                    static_cast<unsigned long long>(row.seed), row.median_age,
                    static_cast<unsigned long long>(row.total_steps), row.atoms);
      }
    });
  }

  {
    auto* cmd = app.add_subcommand("tabular-oracle",
                                   "exact-count equivalence on one-hot embeddings");
    auto* args = add_common(cmd, "out/tabular-oracle");
    cmd->callback([args, &exit_code] {
      auto cfg = TabularOracleConfig::from_json(load_root(*args, "tabular-oracle"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_tabular_oracle(cfg, args->out_dir);
      for (const auto& row : result.per_seed) {
        if (row.mismatches == 0 && row.counts_match) {
          std::printf("seed %llu PASS: %zu steps, zero mismatches, counts exact\n",
                      static_cast<unsigned long long>(row.seed), row.steps);
        } else {
          std::printf("seed %llu FAIL: %zu mismatches (first at step %s), counts_match=%d\n",
                      static_cast<unsigned long long>(row.seed), row.mismatches,
                      row.first_mismatch_step ? std::to_string(*row.first_mismatch_step).c_str()
                                              : "-",
                      row.counts_match);
        }
      }
      if (!result.all_exact()) exit_code = 1;
    });
  }

  {
    auto* cmd = app.add_subcommand("grad-check",
                                   "finite-difference validation of the AP gradients");
    auto* args = add_common(cmd, "out/grad-check");
    cmd->callback([args, &exit_code] {
      auto cfg = GradCheckConfig::from_json(load_root(*args, "grad-check"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_grad_check(cfg, args->out_dir);
      std::printf("analytic max_rel_error %.3e (threshold %.1e): %s\n", result.max_rel_error,
                  result.threshold, result.max_rel_error < result.threshold ? "PASS" : "FAIL");
      std::printf("corrupted block error %.3e (must exceed threshold): %s\n",
                  result.corrupted_error,
                  result.corrupted_error > result.threshold ? "PASS" : "FAIL");
      if (!result.pass) exit_code = 1;
    });
  }

  {
    auto* cmd = app.add_subcommand("concurrency-check",
                                   "shared-memory service vs sequential replay");
    auto* args = add_common(cmd, "out/concurrency-check");
    cmd->callback([args, &exit_code] {
      auto cfg = ConcurrencyConfig::from_json(load_root(*args, "concurrency-check"));
      if (!args->seeds.empty()) cfg.seeds = args->seeds;
      const auto result = run_concurrency_check(cfg, args->out_dir);
      std::printf("round-robin snapshot identical to sequential replay: %s\n",
                  result.round_robin_identical ? "PASS" : "FAIL");
      std::printf("submission counter consistent (%llu submissions): %s\n",
                  static_cast<unsigned long long>(result.submissions),
                  result.counter_consistent ? "PASS" : "FAIL");
      std::printf("free-running invariants (count error %.2e): %s\n",
                  result.free_running_count_error,
                  result.free_running_invariants_ok ? "PASS" : "FAIL");
      if (!result.round_robin_identical || !result.counter_consistent ||
          !result.free_running_invariants_ok) {
        exit_code = 1;
      }
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return exit_code;
}
