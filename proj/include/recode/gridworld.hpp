#pragma once

#include <cstdint>
#include <stdexcept>

#include "recode/embedders.hpp"
#include "recode/env_common.hpp"

namespace recode {

// Open-room gridworld: walls only at the boundary, boundary moves are no-ops
// (no termination), goal gives reward 1 and ends the episode. Observations
// are one-hot cell indices. max_steps == 0 disables the timeout.
class Gridworld {
 public:
  Gridworld(std::size_t size, std::size_t goal_index, std::size_t start_index,
            std::size_t max_steps = 0)
      : size_(size), goal_(goal_index), start_(start_index), max_steps_(max_steps) {
    if (size_ < 1) throw std::invalid_argument("Gridworld: size must be >= 1");
    if (goal_ >= num_states() || start_ >= num_states()) {
      throw std::invalid_argument("Gridworld: start/goal out of range");
    }
    reset();
  }

  std::size_t size() const { return size_; }
  std::size_t num_states() const { return size_ * size_; }
  std::size_t state_index() const { return agent_; }
  bool done() const { return done_; }
  std::size_t step_count() const { return steps_; }

  Observation reset() {
    agent_ = start_;
    steps_ = 0;
    // A run starting on the goal is over before any action (length 0).
    done_ = start_ == goal_;
    return render();
  }

  StepResult step(Action action) {
    if (done_) throw std::logic_error("Gridworld: step on terminated episode");
    ++steps_;
    std::size_t r = agent_ / size_;
    std::size_t c = agent_ % size_;
    switch (action) {
      case Action::Up:
        if (r > 0) --r;
        break;
      case Action::Down:
        if (r + 1 < size_) ++r;
        break;
      case Action::Left:
        if (c > 0) --c;
        break;
      case Action::Right:
        if (c + 1 < size_) ++c;
        break;
    }
    agent_ = r * size_ + c;

    StepResult result;
    if (agent_ == goal_) {
      result.extrinsic_reward = 1.0;
      result.terminated = true;
      result.cause = TerminationCause::Goal;
    } else if (max_steps_ > 0 && steps_ >= max_steps_) {
      result.terminated = true;
      result.cause = TerminationCause::Timeout;
    }
    done_ = result.terminated;
    result.observation = render();
    return result;
  }

  Observation render() const { return one_hot_embed(agent_, num_states()); }

 private:
  std::size_t size_;
  std::size_t goal_;
  std::size_t start_;
  std::size_t max_steps_;
  std::size_t agent_ = 0;
  std::size_t steps_ = 0;
  bool done_ = false;
};

}  // namespace recode
