#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "recode/agent.hpp"
#include "recode/disco_maze.hpp"
#include "recode/memory.hpp"
#include "recode/stream.hpp"

namespace recode {

using nlohmann::json;

// Wraps one JSON object; every key must be consumed or finish() reports it.
class ConfigSection {
 public:
  ConfigSection(const json& node, std::string context) : node_(node), context_(std::move(context)) {
    if (!node_.is_object()) {
      throw std::invalid_argument("config: " + context_ + " must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (auto it = node_.find(key); it != node_.end()) {
      try {
        out = it->get<T>();
      } catch (const json::exception& e) {
        throw std::invalid_argument("config: bad value for " + context_ + "." + key + ": " +
                                    e.what());
      }
      seen_.insert(key);
    }
  }

  bool has(const char* key) const { return node_.contains(key); }

  json take(const char* key) {
    seen_.insert(key);
    return node_.value(key, json::object());
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) {
        throw std::invalid_argument("config: unknown key " + context_ + "." + key);
      }
    }
  }

 private:
  const json& node_;
  std::string context_;
  std::set<std::string> seen_;
};

inline void apply_recode_section(const json& node, RecodeConfig& cfg) {
  ConfigSection section(node, "recode");
  section.read("capacity", cfg.capacity);
  section.read("k", cfg.k);
  section.read("kappa", cfg.kappa);
  section.read("tau", cfg.tau);
  section.read("gamma", cfg.gamma);
  section.read("eta", cfg.eta);
  section.read("n0", cfg.n0);
  section.read("epsilon", cfg.epsilon);
  section.read("seed", cfg.seed);
  section.read("tau_weights_new_sample", cfg.tau_weights_new_sample);
  if (section.has("removal")) {
    std::string name;
    section.read("removal", name);
    cfg.removal = removal_strategy_from_string(name);
  }
  section.finish();
  cfg.validate();
}

inline void apply_agent_section(const json& node, AgentConfig& cfg) {
  ConfigSection section(node, "agent");
  section.read("alpha", cfg.alpha);
  section.read("epsilon", cfg.epsilon);
  section.read("gamma_rl", cfg.gamma_rl);
  section.read("beta_im", cfg.beta_im);
  section.read("episode_budget", cfg.episode_budget);
  section.read("seed", cfg.seed);
  section.finish();
  cfg.validate();
}

inline void apply_maze_section(const json& node, DiscoMazeConfig& cfg) {
  ConfigSection section(node, "maze");
  section.read("size", cfg.size);
  section.read("num_colors", cfg.num_colors);
  section.read("max_steps", cfg.max_steps);
  section.read("seed", cfg.seed);
  section.finish();
  cfg.validate();
}

inline void apply_stream_section(const json& node, StreamSchedule& schedule) {
  ConfigSection section(node, "stream");
  if (section.has("kind")) {
    std::string kind;
    section.read("kind", kind);
    if (kind == "capped_square") schedule.kind = StreamKind::CappedSquare;
    else if (kind == "sqrt_square") schedule.kind = StreamKind::SqrtSquare;
    else throw std::invalid_argument("config: unknown stream.kind " + kind);
  }
  section.read("batch_size", schedule.batch_size);
  section.read("horizon", schedule.horizon);
  section.finish();
  schedule.validate();
}

inline json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // e.what() carries the byte offset of the syntax error.
    throw std::runtime_error("config: parse error in " + path.string() + ": " + e.what());
  }
}

inline std::uint64_t fnv1a_hash(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace recode
