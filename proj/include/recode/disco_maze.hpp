#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "recode/embedders.hpp"
#include "recode/env_common.hpp"
#include "recode/rng.hpp"

namespace recode {

enum class RenderMode { Full, PositionOnly };

struct DiscoMazeConfig {
  std::size_t size = 21;  // odd, >= 5
  std::size_t num_colors = 5;
  std::size_t max_steps = 500;
  std::uint64_t seed = 0;
  RenderMode render_mode = RenderMode::Full;

  void validate() const {
    if (size < 5 || size % 2 == 0) {
      throw std::invalid_argument("DiscoMazeConfig: size must be odd and >= 5");
    }
    if (num_colors < 1) throw std::invalid_argument("DiscoMazeConfig: num_colors must be >= 1");
    if (max_steps < 1) throw std::invalid_argument("DiscoMazeConfig: max_steps must be >= 1");
  }
};

// Perfect maze whose wall colors are resampled i.i.d. every step. The episode
// ends when the agent steps into a wall (reward 0), reaches the goal
// (reward 1), or hits the step cap. The layout is fixed for the lifetime of
// the instance: generated by a seeded recursive backtracker, start at the
// bottom-left open cell, goal at the open cell farthest from it.
class DiscoMaze {
 public:
  explicit DiscoMaze(DiscoMazeConfig config) : config_(config), rng_(config.seed) {
    config_.validate();
    generate_layout();
    reset();
  }

  const DiscoMazeConfig& config() const { return config_; }
  std::size_t size() const { return config_.size; }
  std::size_t num_states() const { return size() * size(); }
  std::size_t state_index() const { return agent_; }
  std::size_t start_index() const { return start_; }
  std::size_t goal_index() const { return goal_; }
  bool done() const { return done_; }
  std::size_t step_count() const { return steps_; }
  bool is_wall(std::size_t cell) const { return walls_[cell] != 0; }

  std::size_t observation_dim() const {
    return config_.render_mode == RenderMode::Full ? num_states() * (config_.num_colors + 3)
                                                   : num_states();
  }

  Observation reset() {
    agent_ = start_;
    steps_ = 0;
    done_ = false;
    resample_colors();
    return render(config_.render_mode);
  }

  StepResult step(Action action) {
    if (done_) throw std::logic_error("DiscoMaze: step on terminated episode");
    ++steps_;
    const std::size_t target = neighbor(agent_, action);

    StepResult result;
    if (walls_[target]) {
      result.terminated = true;
      result.cause = TerminationCause::Wall;
    } else {
      agent_ = target;
      if (agent_ == goal_) {
        result.extrinsic_reward = 1.0;
        result.terminated = true;
        result.cause = TerminationCause::Goal;
      } else if (steps_ >= config_.max_steps) {
        result.terminated = true;
        result.cause = TerminationCause::Timeout;
      }
    }
    done_ = result.terminated;
    resample_colors();  // after the move
    result.observation = render(config_.render_mode);
    return result;
  }

  // Full: per-cell one-hot over {Open, Wall-color-0..n-1, Agent, Goal},
  // flattened row-major. PositionOnly: one-hot of the agent's cell.
  Observation render(RenderMode mode) const {
    if (mode == RenderMode::PositionOnly) return one_hot_embed(agent_, num_states());
    const std::size_t channels = config_.num_colors + 3;
    Observation obs(num_states() * channels, 0.0);
    for (std::size_t cell = 0; cell < num_states(); ++cell) {
      std::size_t ch;
      if (cell == agent_) {
        ch = config_.num_colors + 1;
      } else if (cell == goal_) {
        ch = config_.num_colors + 2;
      } else if (walls_[cell]) {
        ch = 1 + colors_[cell];
      } else {
        ch = 0;
      }
      obs[cell * channels + ch] = 1.0;
    }
    return obs;
  }

  std::string ascii_layout() const {
    std::string out;
    out.reserve(num_states() + size());
    for (std::size_t r = 0; r < size(); ++r) {
      for (std::size_t c = 0; c < size(); ++c) {
        const std::size_t cell = r * size() + c;
        char ch = walls_[cell] ? '#' : '.';
        if (cell == start_) ch = 'S';
        if (cell == goal_) ch = 'G';
        out.push_back(ch);
      }
      out.push_back('\n');
    }
    return out;
  }

 private:
  std::size_t neighbor(std::size_t cell, Action action) const {
    const std::size_t n = size();
    std::size_t r = cell / n;
    std::size_t c = cell % n;
    switch (action) {
      case Action::Up: --r; break;
      case Action::Down: ++r; break;
      case Action::Left: --c; break;
      case Action::Right: ++c; break;
    }
    return r * n + c;  // agent cells are interior, so this stays in range
  }

  void generate_layout() {
    const std::size_t n = size();
    walls_.assign(n * n, 1);
    colors_.assign(n * n, 0);

    // Recursive backtracker over the odd lattice.
    start_ = (n - 2) * n + 1;  // bottom-left open cell
    std::vector<std::size_t> stack{start_};
    walls_[start_] = 0;
    const int dr[] = {-2, 2, 0, 0};
    const int dc[] = {0, 0, -2, 2};
    while (!stack.empty()) {
      const std::size_t cell = stack.back();
      const std::size_t r = cell / n;
      const std::size_t c = cell % n;
      std::size_t options[4];
      std::size_t n_options = 0;
      for (std::size_t d = 0; d < 4; ++d) {
        const long nr = static_cast<long>(r) + dr[d];
        const long nc = static_cast<long>(c) + dc[d];
        if (nr < 1 || nc < 1 || nr >= static_cast<long>(n) - 1 || nc >= static_cast<long>(n) - 1) {
          continue;
        }
        const std::size_t ncell = static_cast<std::size_t>(nr) * n + static_cast<std::size_t>(nc);
        if (walls_[ncell]) options[n_options++] = d;
      }
      if (n_options == 0) {
        stack.pop_back();
        continue;
      }
      const std::size_t d = options[rng_.uniform_index(n_options)];
      const std::size_t nr = r + static_cast<std::size_t>(dr[d]);
      const std::size_t nc = c + static_cast<std::size_t>(dc[d]);
      const std::size_t mid = (r + nr) / 2 * n + (c + nc) / 2;
      walls_[mid] = 0;
      const std::size_t ncell = nr * n + nc;
      walls_[ncell] = 0;
      stack.push_back(ncell);
    }

    goal_ = farthest_open_cell_from(start_);
  }

  std::size_t farthest_open_cell_from(std::size_t origin) const {
    const std::size_t n = size();
    std::vector<long> dist(n * n, -1);
    std::deque<std::size_t> queue{origin};
    dist[origin] = 0;
    std::size_t best = origin;
    while (!queue.empty()) {
      const std::size_t cell = queue.front();
      queue.pop_front();
      if (dist[cell] > dist[best] || (dist[cell] == dist[best] && cell < best)) best = cell;
      const std::size_t moves[] = {cell - n, cell + n, cell - 1, cell + 1};
      for (std::size_t next : moves) {
        if (!walls_[next] && dist[next] < 0) {
          dist[next] = dist[cell] + 1;
          queue.push_back(next);
        }
      }
    }
    return best;
  }

  void resample_colors() {
    for (std::size_t cell = 0; cell < colors_.size(); ++cell) {
      if (walls_[cell]) {
        colors_[cell] = static_cast<std::uint8_t>(rng_.uniform_index(config_.num_colors));
      }
    }
  }

  DiscoMazeConfig config_;
  Rng rng_;
  std::vector<std::uint8_t> walls_;
  std::vector<std::uint8_t> colors_;
  std::size_t start_ = 0;
  std::size_t goal_ = 0;
  std::size_t agent_ = 0;
  std::size_t steps_ = 0;
  bool done_ = false;
};

}  // namespace recode
