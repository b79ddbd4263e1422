#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "recode/embedding.hpp"
#include "recode/rng.hpp"

namespace recode {

inline Embedding one_hot_embed(std::size_t state_index, std::size_t num_states) {
  if (state_index >= num_states) {
    throw std::out_of_range("one_hot_embed: state_index out of range");
  }
  Embedding e(num_states, 0.0);
  e[state_index] = 1.0;
  return e;
}

// Fixed linear featurizer: a seeded out_dim x in_dim matrix with entries
// uniform in [-1, 1] / sqrt(in_dim).
class RandomProjection {
 public:
  RandomProjection(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed)
      : out_dim_(out_dim), in_dim_(in_dim), weights_(out_dim * in_dim) {
    if (out_dim == 0 || in_dim == 0) {
      throw std::invalid_argument("RandomProjection: dimensions must be >= 1");
    }
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& w : weights_) w = rng.uniform(-1.0, 1.0) * scale;
  }

  std::size_t out_dim() const { return out_dim_; }
  std::size_t in_dim() const { return in_dim_; }

  Embedding embed(const Observation& obs) const {
    if (obs.size() != in_dim_) {
      throw std::invalid_argument("RandomProjection: observation dimension mismatch");
    }
    Embedding e(out_dim_, 0.0);
    for (std::size_t r = 0; r < out_dim_; ++r) {
      const double* row = &weights_[r * in_dim_];
      double sum = 0.0;
      for (std::size_t c = 0; c < in_dim_; ++c) sum += row[c] * obs[c];
      e[r] = sum;
    }
    return e;
  }

 private:
  std::size_t out_dim_;
  std::size_t in_dim_;
  std::vector<double> weights_;
};

// Appends noise_dims i.i.d. uniform draws spanning the input's coordinate
// range; the original coordinates are copied through untouched.
inline Embedding noise_augment(const Embedding& e, std::size_t noise_dims, Rng& rng) {
  if (noise_dims == 0) return e;
  double lo = 0.0;
  double hi = 1.0;
  if (!e.empty()) {
    const auto [min_it, max_it] = std::minmax_element(e.begin(), e.end());
    lo = *min_it;
    hi = *max_it;
  }
  Embedding out = e;
  out.reserve(e.size() + noise_dims);
  for (std::size_t i = 0; i < noise_dims; ++i) out.push_back(rng.uniform(lo, hi));
  return out;
}

}  // namespace recode
