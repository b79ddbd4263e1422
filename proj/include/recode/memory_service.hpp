#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "recode/memory.hpp"
#include "recode/normalizer.hpp"

namespace recode {

enum class SchedulingMode { FreeRunning, DeterministicRoundRobin };

// Serializes access to one RecodeMemory (and its normalizer) across actor
// threads. Each submission runs the whole memory step plus normalization as
// one critical section, so the observable state between submissions always
// equals some sequential execution of the submitted embeddings.
class MemoryService {
 public:
  MemoryService(RecodeMemory memory, RewardNormalizer normalizer = RewardNormalizer())
      : memory_(std::move(memory)), normalizer_(normalizer) {}

  // Processes one embedding and returns the normalized intrinsic reward.
  // A non-finite embedding is rejected without any state change.
  double submit(const Embedding& e) {
    std::lock_guard<std::mutex> lock(mutex_);
    const ProcessResult result = memory_.process(e);
    const double normalized = normalizer_.normalize(result.reward);
    ++submissions_;
    return normalized;
  }

  std::uint64_t submissions() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return submissions_;
  }

  RecodeMemory memory_copy() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return memory_;
  }

  std::string memory_snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return memory_.snapshot_string();
  }

 private:
  mutable std::mutex mutex_;
  RecodeMemory memory_;
  RewardNormalizer normalizer_;
  std::uint64_t submissions_ = 0;
};

struct ActorRunStats {
  std::uint64_t total_submissions = 0;
  std::vector<std::uint64_t> per_actor;
  std::vector<double> reward_sums;
};

// Runs n actor loops against the service. The source callable maps
// (actor, step) to the embedding that actor submits at that step; it must be
// safe to call concurrently. In DeterministicRoundRobin mode actors take
// strict turns (actor 0 first), so the submission order -- and therefore the
// final memory state -- is reproducible bit-exactly. An actor failure aborts
// the run and rethrows after all threads have been joined.
template <typename Source>
ActorRunStats spawn_actors(MemoryService& service, std::size_t n_actors,
                           std::size_t steps_per_actor, Source&& source, SchedulingMode mode) {
  if (n_actors < 1) throw std::invalid_argument("spawn_actors: n_actors must be >= 1");

  ActorRunStats stats;
  stats.per_actor.assign(n_actors, 0);
  stats.reward_sums.assign(n_actors, 0.0);

  std::mutex turn_mutex;
  std::condition_variable turn_cv;
  std::uint64_t turn = 0;
  bool aborted = false;
  std::exception_ptr first_error;

  auto actor_loop = [&](std::size_t actor) {
    try {
      for (std::size_t step = 0; step < steps_per_actor; ++step) {
        if (mode == SchedulingMode::DeterministicRoundRobin) {
          std::unique_lock<std::mutex> lock(turn_mutex);
          turn_cv.wait(lock, [&] { return aborted || turn % n_actors == actor; });
          if (aborted) return;
          const double reward = service.submit(source(actor, step));
          stats.reward_sums[actor] += reward;
          ++stats.per_actor[actor];
          ++turn;
          turn_cv.notify_all();
        } else {
          // Per-actor slots are only touched by their own thread.
          const double reward = service.submit(source(actor, step));
          stats.reward_sums[actor] += reward;
          ++stats.per_actor[actor];
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(turn_mutex);
      if (!first_error) first_error = std::current_exception();
      aborted = true;
      turn_cv.notify_all();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(n_actors);
  for (std::size_t i = 0; i < n_actors; ++i) threads.emplace_back(actor_loop, i);
  for (std::thread& t : threads) t.join();

  if (first_error) std::rethrow_exception(first_error);
  for (std::uint64_t c : stats.per_actor) stats.total_submissions += c;
  return stats;
}

}  // namespace recode
