#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace recode {

// Scales raw intrinsic rewards by a running standard-deviation estimate
// (Welford accumulators). Rewards pass through unscaled until the warmup
// sample count is reached; the divisor is floored to stay positive.
class RewardNormalizer {
 public:
  static constexpr double kSigmaFloor = 1e-8;
  static constexpr std::size_t kDefaultWarmup = 100;

  explicit RewardNormalizer(std::size_t warmup = kDefaultWarmup) : warmup_(warmup) {}

  double normalize(double raw) {
    if (!std::isfinite(raw)) throw std::invalid_argument("normalize: non-finite reward");
    ++count_;
    const double delta = raw - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (raw - mean_);
    if (count_ < warmup_) return raw;
    return raw / std_floored();
  }

  std::size_t sample_count() const { return count_; }
  double mean() const { return mean_; }

  double std_estimate() const {
    if (count_ == 0) return 0.0;
    return std::sqrt(std::max(m2_, 0.0) / static_cast<double>(count_));
  }

  double std_floored() const { return std::max(std_estimate(), kSigmaFloor); }

 private:
  std::size_t warmup_;
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace recode
