#pragma once

#include <string>

#include "recode/embedding.hpp"

namespace recode {

enum class Action { Up = 0, Down = 1, Left = 2, Right = 3 };

constexpr std::size_t kNumActions = 4;

enum class TerminationCause { None, Wall, Goal, Timeout };

inline const char* to_string(TerminationCause c) {
  switch (c) {
    case TerminationCause::None: return "none";
    case TerminationCause::Wall: return "wall";
    case TerminationCause::Goal: return "goal";
    case TerminationCause::Timeout: return "timeout";
  }
  return "unknown";
}

struct StepResult {
  Observation observation;
  double extrinsic_reward = 0.0;
  bool terminated = false;
  TerminationCause cause = TerminationCause::None;
};

}  // namespace recode
