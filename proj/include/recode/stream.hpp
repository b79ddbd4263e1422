#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "recode/embedding.hpp"
#include "recode/rng.hpp"

namespace recode {

enum class StreamKind { CappedSquare, SqrtSquare };

struct StreamSchedule {
  StreamKind kind = StreamKind::SqrtSquare;
  std::size_t batch_size = 64;
  std::size_t horizon = 100;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("StreamSchedule: batch_size must be >= 1");
  }
};

// Side of the sampling square at step t: min(100, t) for the capped schedule,
// 1 + sqrt(t) for the slowly expanding one.
inline double stream_side(StreamKind kind, std::size_t t) {
  const double td = static_cast<double>(t);
  return kind == StreamKind::CappedSquare ? std::min(100.0, td) : 1.0 + std::sqrt(td);
}

// batch_size i.i.d. uniform samples from [0, side]^2. Side zero collapses the
// batch onto the origin.
inline std::vector<Embedding> expanding_square_batch(std::size_t t, const StreamSchedule& schedule,
                                                     Rng& rng) {
  schedule.validate();
  const double side = stream_side(schedule.kind, t);
  std::vector<Embedding> batch(schedule.batch_size);
  for (Embedding& e : batch) {
    e = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
  }
  return batch;
}

}  // namespace recode
