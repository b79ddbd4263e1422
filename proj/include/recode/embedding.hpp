#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace recode {

using Embedding = std::vector<double>;
using Observation = std::vector<double>;

inline bool all_finite(const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline double squared_distance(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("squared_distance: dimension mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace recode
