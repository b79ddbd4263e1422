#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "recode/env_common.hpp"
#include "recode/memory.hpp"
#include "recode/normalizer.hpp"
#include "recode/rng.hpp"

namespace recode {

struct AgentConfig {
  double alpha = 0.1;      // Q learning rate
  double epsilon = 0.05;   // exploration rate
  double gamma_rl = 0.99;  // RL discount (distinct from the memory's count discount)
  double beta_im = 1.0;    // intrinsic reward scale
  std::size_t episode_budget = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("AgentConfig: alpha in (0,1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
      throw std::invalid_argument("AgentConfig: epsilon in [0,1]");
    }
    if (!(gamma_rl >= 0.0 && gamma_rl < 1.0)) {
      throw std::invalid_argument("AgentConfig: gamma_rl in [0,1)");
    }
    if (!(beta_im >= 0.0)) throw std::invalid_argument("AgentConfig: beta_im must be >= 0");
  }
};

// state index -> action values; zero-initialized, so unseen states read as 0.
using QTable = std::vector<std::array<double, kNumActions>>;

inline QTable make_q_table(std::size_t num_states) {
  return QTable(num_states, {0.0, 0.0, 0.0, 0.0});
}

inline Action select_action(const QTable& q, std::size_t state, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return static_cast<Action>(rng.uniform_index(kNumActions));
  const auto& values = q.at(state);
  std::size_t best = 0;
  for (std::size_t a = 1; a < kNumActions; ++a) {
    if (values[a] > values[best]) best = a;
  }
  return static_cast<Action>(best);
}

inline void q_update(QTable& q, std::size_t s, Action a, double r_total, std::size_t s_next,
                     bool terminal, double alpha, double gamma_rl) {
  const auto& next = q.at(s_next);
  double best_next = next[0];
  for (std::size_t i = 1; i < kNumActions; ++i) best_next = std::max(best_next, next[i]);
  double& value = q.at(s)[static_cast<std::size_t>(a)];
  const double target = r_total + gamma_rl * best_next * (terminal ? 0.0 : 1.0);
  value += alpha * (target - value);
}

struct EpisodeRecord {
  std::size_t length = 0;          // actions taken
  double extrinsic_return = 0.0;
  double intrinsic_sum = 0.0;      // raw (pre-normalization) intrinsic rewards
  std::size_t unique_states = 0;   // distinct states including the start
  TerminationCause cause = TerminationCause::None;
};

using EmbedFn = std::function<Embedding(const Observation&)>;
using ProcessHook = std::function<void(const ProcessResult&)>;

// One episode of epsilon-greedy Q-learning on extrinsic + scaled intrinsic
// reward. Every rendered observation (including the initial one) flows
// through the memory and the shared normalizer; neither is reset between
// episodes. An optional trace records every visited state index.
template <typename Env>
EpisodeRecord run_episode(Env& env, const EmbedFn& embed, RecodeMemory& memory,
                          RewardNormalizer& normalizer, QTable& q, const AgentConfig& config,
                          Rng& rng, std::vector<std::size_t>* state_trace = nullptr,
                          const ProcessHook* hook = nullptr) {
  config.validate();
  EpisodeRecord record;
  Observation obs = env.reset();
  std::size_t state = env.state_index();
  std::unordered_set<std::size_t> seen{state};
  if (state_trace) state_trace->push_back(state);

  {
    const ProcessResult processed = memory.process(embed(obs));
    if (hook && *hook) (*hook)(processed);
    record.intrinsic_sum += processed.reward;
    normalizer.normalize(processed.reward);  // keeps the running statistics in step
  }

  while (!env.done()) {
    const Action action = select_action(q, state, config.epsilon, rng);
    const StepResult step = env.step(action);
    const std::size_t next_state = env.state_index();

    const ProcessResult processed = memory.process(embed(step.observation));
    if (hook && *hook) (*hook)(processed);
    const double raw = processed.reward;
    const double intrinsic = normalizer.normalize(raw);
    const double r_total = step.extrinsic_reward + config.beta_im * intrinsic;
    q_update(q, state, action, r_total, next_state, step.terminated, config.alpha,
             config.gamma_rl);

    record.length += 1;
    record.extrinsic_return += step.extrinsic_reward;
    record.intrinsic_sum += raw;
    seen.insert(next_state);
    if (state_trace) state_trace->push_back(next_state);
    state = next_state;
    if (step.terminated) record.cause = step.cause;
  }
  record.unique_states = seen.size();
  return record;
}

struct ExplorationRun {
  std::vector<EpisodeRecord> episodes;  // completed episodes, plus a trailing partial one
  std::size_t unique_states = 0;
  std::size_t steps_used = 0;
  bool goal_reached = false;
  std::vector<std::size_t> coverage_curve;  // unique states after each step
};

// Budget-bounded exploration across episodes: runs exactly step_budget env
// steps, resetting on termination. Same loop structure as the random
// baseline, so matched seeds with beta_im = 0 and epsilon = 1 reproduce the
// baseline trajectory exactly.
template <typename Env>
ExplorationRun run_exploration_budget(Env& env, const EmbedFn& embed, RecodeMemory& memory,
                                      RewardNormalizer& normalizer, QTable& q,
                                      const AgentConfig& config, Rng& rng,
                                      std::size_t step_budget) {
  config.validate();
  ExplorationRun run;
  std::unordered_set<std::size_t> seen;
  std::unordered_set<std::size_t> episode_seen;

  EpisodeRecord episode;
  auto start_episode = [&] {
    episode = EpisodeRecord{};
    episode_seen.clear();
    const Observation obs = env.reset();
    seen.insert(env.state_index());
    episode_seen.insert(env.state_index());
    const double raw = memory.process(embed(obs)).reward;
    episode.intrinsic_sum += raw;
    normalizer.normalize(raw);
  };

  start_episode();
  std::size_t state = env.state_index();
  while (run.steps_used < step_budget) {
    if (env.done()) {
      episode.unique_states = episode_seen.size();
      run.episodes.push_back(episode);
      start_episode();
      state = env.state_index();
    }
    const Action action = select_action(q, state, config.epsilon, rng);
    const StepResult step = env.step(action);
    const std::size_t next_state = env.state_index();

    const double raw = memory.process(embed(step.observation)).reward;
    const double intrinsic = normalizer.normalize(raw);
    const double r_total = step.extrinsic_reward + config.beta_im * intrinsic;
    q_update(q, state, action, r_total, next_state, step.terminated, config.alpha,
             config.gamma_rl);

    episode.length += 1;
    episode.extrinsic_return += step.extrinsic_reward;
    episode.intrinsic_sum += raw;
    if (step.terminated) episode.cause = step.cause;
    if (step.cause == TerminationCause::Goal) run.goal_reached = true;

    seen.insert(next_state);
    episode_seen.insert(next_state);
    state = next_state;
    ++run.steps_used;
    run.coverage_curve.push_back(seen.size());
  }
  episode.unique_states = episode_seen.size();
  run.episodes.push_back(episode);
  run.unique_states = seen.size();
  return run;
}

struct BaselineStats {
  std::size_t unique_states = 0;
  std::size_t episodes_completed = 0;
  std::size_t steps_used = 0;
  bool goal_reached = false;
};

// Uniform-random control arm: same action-selection path as the agent with
// epsilon = 1 on a zero Q-table, so matched seeds give matched trajectories.
template <typename Env>
BaselineStats run_random_baseline(Env& env, std::size_t step_budget, std::uint64_t seed,
                                  std::vector<std::size_t>* coverage_curve = nullptr) {
  Rng rng(seed);
  QTable q = make_q_table(env.num_states());
  BaselineStats stats;
  std::unordered_set<std::size_t> seen;

  env.reset();
  seen.insert(env.state_index());
  while (stats.steps_used < step_budget) {
    if (env.done()) {
      ++stats.episodes_completed;
      env.reset();
      seen.insert(env.state_index());
    }
    const Action action = select_action(q, env.state_index(), 1.0, rng);
    const StepResult step = env.step(action);
    ++stats.steps_used;
    seen.insert(env.state_index());
    if (step.cause == TerminationCause::Goal) stats.goal_reached = true;
    if (coverage_curve) coverage_curve->push_back(seen.size());
  }
  stats.unique_states = seen.size();
  return stats;
}

}  // namespace recode
