#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "recode/embedding.hpp"
#include "recode/rng.hpp"

namespace recode {

enum class RemovalStrategy { InverseCountSquared, InverseCount, MinCount };

inline const char* to_string(RemovalStrategy s) {
  switch (s) {
    case RemovalStrategy::InverseCountSquared: return "inverse_count_squared";
    case RemovalStrategy::InverseCount: return "inverse_count";
    case RemovalStrategy::MinCount: return "min_count";
  }
  return "unknown";
}

inline RemovalStrategy removal_strategy_from_string(const std::string& s) {
  if (s == "inverse_count_squared") return RemovalStrategy::InverseCountSquared;
  if (s == "inverse_count") return RemovalStrategy::InverseCount;
  if (s == "min_count") return RemovalStrategy::MinCount;
  throw std::invalid_argument("unknown removal strategy: " + s);
}

struct RecodeConfig {
  std::size_t capacity = 50000;
  std::size_t k = 20;       // neighbors used for the bandwidth estimate
  double kappa = 0.2;       // relative tolerance of the new-cluster test
  double tau = 0.9999;      // bandwidth EMA weight
  double gamma = 0.999;     // per-step count discount
  double eta = 0.05;        // insertion probability once the memory is full
  double n0 = 0.01;         // reward constant
  double epsilon = 1e-3;    // kernel parameter
  RemovalStrategy removal = RemovalStrategy::InverseCountSquared;
  std::uint64_t seed = 0;
  // Literal interpretation weights the fresh k-NN sample by tau; flipping the
  // flag weights the old average instead.
  bool tau_weights_new_sample = true;

  void validate() const {
    if (capacity < 2) throw std::invalid_argument("RecodeConfig: capacity must be >= 2");
    if (k < 1) throw std::invalid_argument("RecodeConfig: k must be >= 1");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
      throw std::invalid_argument("RecodeConfig: kappa must be positive and finite");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("RecodeConfig: tau must be in (0,1]");
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw std::invalid_argument("RecodeConfig: gamma must be in (0,1]");
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("RecodeConfig: eta must be in (0,1]");
    if (!(n0 > 0.0) || !std::isfinite(n0))
      throw std::invalid_argument("RecodeConfig: n0 must be positive and finite");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw std::invalid_argument("RecodeConfig: epsilon must be positive and finite");
  }
};

// A cluster center and its soft visitation count.
struct Atom {
  Embedding position;
  double count = 0.0;
};

// Bounded similarity kernel. Zero outside the bandwidth radius (strict
// inequality), so it is identically zero while d_ema_sq == 0.
inline double kernel_value(const Embedding& m, const Embedding& e, double d_ema_sq,
                           double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("kernel_value: epsilon must be positive");
  if (d_ema_sq < 0.0) throw std::invalid_argument("kernel_value: d_ema_sq must be >= 0");
  const double dist_sq = squared_distance(m, e);
  if (!(dist_sq < d_ema_sq)) return 0.0;
  return 1.0 / (1.0 + dist_sq / (epsilon * d_ema_sq));
}

// Novelty bonus from a soft visitation count; bounded in (0, 1/n0].
inline double intrinsic_reward_raw(double n, double n0) {
  if (n < 0.0) throw std::invalid_argument("intrinsic_reward_raw: count must be >= 0");
  return 1.0 / (std::sqrt(n) + n0);
}

struct ProcessResult {
  double reward = 0.0;
  bool inserted = false;
  // Index of the inserted or assimilated atom, in post-step indexing.
  std::size_t atom_index = 0;
  // Index of the evicted atom (pre-eviction indexing), when one was removed.
  std::optional<std::size_t> removed_index;
};

// Fixed-capacity clustering memory over embeddings. process() runs one full
// update step: soft-count query, reward, bandwidth EMA, count discount, and
// either assimilation into the nearest atom or insertion of a new one.
//
// Instances are single-threaded; see MemoryService for shared access.
class RecodeMemory {
 public:
  static constexpr double kCountFloor = 1e-6;  // clamp inside removal weights

  RecodeMemory(std::size_t dim, RecodeConfig config)
      : dim_(dim), config_(std::move(config)), rng_(config_.seed) {
    if (dim_ == 0) throw std::invalid_argument("RecodeMemory: dim must be >= 1");
    config_.validate();
  }

  std::size_t dim() const { return dim_; }
  const RecodeConfig& config() const { return config_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  double bandwidth_sq() const { return d_ema_sq_; }
  std::uint64_t steps_processed() const { return steps_; }
  bool full() const { return atoms_.size() >= config_.capacity; }

  // Intended for snapshot restore and controlled experiments.
  void set_bandwidth_sq(double value) {
    if (value < 0.0 || !std::isfinite(value)) {
      throw std::invalid_argument("set_bandwidth_sq: value must be finite and >= 0");
    }
    d_ema_sq_ = value;
  }

  double total_count() const {
    double sum = 0.0;
    for (const Atom& a : atoms_) sum += a.count;
    return sum;
  }

  // Kernel-weighted sum of (1 + count) over all atoms within the bandwidth
  // radius of e. Zero on an empty memory or while the bandwidth is zero.
  double soft_visitation_count(const Embedding& e) const {
    check_dimension(e);
    if (d_ema_sq_ <= 0.0) return 0.0;
    double total = 0.0;
    for (const Atom& a : atoms_) {
      total += (1.0 + a.count) * kernel_value(a.position, e, d_ema_sq_, config_.epsilon);
    }
    return total;
  }

  // Indices of the min(k, |atoms|) nearest atoms, ascending by squared
  // distance, ties broken by lowest index.
  std::vector<std::size_t> knn(const Embedding& e, std::size_t k) const {
    check_dimension(e);
    const std::size_t kk = std::min(k, atoms_.size());
    std::vector<std::pair<double, std::size_t>> by_dist;
    by_dist.reserve(atoms_.size());
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      by_dist.emplace_back(squared_distance(atoms_[i].position, e), i);
    }
    std::partial_sort(by_dist.begin(), by_dist.begin() + static_cast<std::ptrdiff_t>(kk),
                      by_dist.end());
    std::vector<std::size_t> indices(kk);
    for (std::size_t i = 0; i < kk; ++i) indices[i] = by_dist[i].second;
    return indices;
  }

  // EMA update of the squared bandwidth from the mean squared k-NN distance.
  // No-op on an empty memory.
  void update_bandwidth(const Embedding& e) {
    const auto neighbors = knn(e, config_.k);
    if (neighbors.empty()) return;
    apply_bandwidth_update(neighbors, e);
  }

  void discount_counts() {
    for (Atom& a : atoms_) a.count *= config_.gamma;
  }

  std::optional<std::size_t> nearest_atom(const Embedding& e) const {
    check_dimension(e);
    if (atoms_.empty()) return std::nullopt;
    std::size_t best = 0;
    double best_dist = squared_distance(atoms_[0].position, e);
    for (std::size_t i = 1; i < atoms_.size(); ++i) {
      const double d = squared_distance(atoms_[i].position, e);
      if (d < best_dist) {  // strict: ties keep the lowest index
        best = i;
        best_dist = d;
      }
    }
    return best;
  }

  // Pick the atom to evict. Counts are clamped at kCountFloor inside the
  // probabilistic weights so fully decayed atoms stay finite.
  std::size_t sample_removal() {
    if (atoms_.empty()) throw std::logic_error("sample_removal: empty memory");
    if (config_.removal == RemovalStrategy::MinCount) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < atoms_.size(); ++i) {
        if (atoms_[i].count < atoms_[best].count) best = i;
      }
      return best;
    }
    std::vector<double> weights(atoms_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const double c = std::max(atoms_[i].count, kCountFloor);
      weights[i] = config_.removal == RemovalStrategy::InverseCountSquared ? 1.0 / (c * c) : 1.0 / c;
      total += weights[i];
    }
    const double u = rng_.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

  // Move the removed atom's count onto its nearest surviving neighbor, then
  // delete it. A singleton memory has no valid neighbor; the count is dropped.
  void redistribute_count(std::size_t removed) {
    if (removed >= atoms_.size()) throw std::out_of_range("redistribute_count: bad index");
    if (atoms_.size() >= 2) {
      std::size_t best = removed == 0 ? 1 : 0;
      double best_dist = squared_distance(atoms_[best].position, atoms_[removed].position);
      for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (i == removed || i == best) continue;
        const double d = squared_distance(atoms_[i].position, atoms_[removed].position);
        if (d < best_dist || (d == best_dist && i < best)) {
          best = i;
          best_dist = d;
        }
      }
      atoms_[best].count += atoms_[removed].count;
    }
    atoms_.erase(atoms_.begin() + static_cast<std::ptrdiff_t>(removed));
  }

  // Convex-combination update of the target atom toward e, then count += 1.
  // Written in incremental form so an atom already at e stays bit-exact.
  void assimilate(const Embedding& e, std::size_t target) {
    check_dimension(e);
    if (target >= atoms_.size()) throw std::out_of_range("assimilate: bad index");
    Atom& atom = atoms_[target];
    const double c = atom.count;
    for (std::size_t i = 0; i < dim_; ++i) {
      atom.position[i] += (e[i] - atom.position[i]) / (c + 1.0);
    }
    atom.count = c + 1.0;
  }

  // One full update step. The reward is computed against the pre-update
  // bandwidth; the insertion test uses the post-update bandwidth. While the
  // memory is below capacity, a far embedding is inserted unconditionally
  // (greedy fill); once full, insertion is gated by the eta coin flip and an
  // eviction keeps the size fixed. The uniform draw happens on every step
  // with a nonempty memory, whether or not the insertion test consults it.
  ProcessResult process(const Embedding& e) {
    check_dimension(e);
    if (!all_finite(e)) throw std::invalid_argument("process: non-finite embedding");

    ProcessResult result;
    result.reward = intrinsic_reward_raw(soft_visitation_count(e), config_.n0);

    if (atoms_.empty()) {
      atoms_.push_back(Atom{e, 1.0});
      ++steps_;
      result.inserted = true;
      result.atom_index = 0;
      return result;
    }

    const auto neighbors = knn(e, config_.k);
    apply_bandwidth_update(neighbors, e);
    discount_counts();

    // Counts changed but positions did not, so the nearest atom is the head
    // of the neighbor list.
    const std::size_t star = neighbors.front();
    const double dist_sq = squared_distance(atoms_[star].position, e);
    const double u = rng_.uniform();

    const bool far = dist_sq > config_.kappa * d_ema_sq_;
    if (far && (!full() || u < config_.eta)) {
      if (full()) {
        const std::size_t removed = sample_removal();
        redistribute_count(removed);
        result.removed_index = removed;
      }
      atoms_.push_back(Atom{e, 1.0});
      result.inserted = true;
      result.atom_index = atoms_.size() - 1;
    } else {
      assimilate(e, star);
      result.inserted = false;
      result.atom_index = star;
    }
    ++steps_;
    return result;
  }

  bool operator==(const RecodeMemory& other) const {
    if (dim_ != other.dim_ || steps_ != other.steps_ || d_ema_sq_ != other.d_ema_sq_ ||
        atoms_.size() != other.atoms_.size() || !(rng_ == other.rng_)) {
      return false;
    }
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (atoms_[i].count != other.atoms_[i].count ||
          atoms_[i].position != other.atoms_[i].position) {
        return false;
      }
    }
    return config_equal(config_, other.config_);
  }

  // Snapshot format: line-oriented text, doubles as C hexfloats so a
  // round-trip restores state bit-exactly (PRNG state included).
  void save(std::ostream& os) const {
    os << "recode-memory-v1\n";
    os << "capacity " << config_.capacity << "\n";
    os << "k " << config_.k << "\n";
    os << "kappa " << hex_double(config_.kappa) << "\n";
    os << "tau " << hex_double(config_.tau) << "\n";
    os << "gamma " << hex_double(config_.gamma) << "\n";
    os << "eta " << hex_double(config_.eta) << "\n";
    os << "n0 " << hex_double(config_.n0) << "\n";
    os << "epsilon " << hex_double(config_.epsilon) << "\n";
    os << "removal " << to_string(config_.removal) << "\n";
    os << "seed " << config_.seed << "\n";
    os << "tau_weights_new_sample " << (config_.tau_weights_new_sample ? 1 : 0) << "\n";
    os << "dim " << dim_ << "\n";
    os << "d_ema_sq " << hex_double(d_ema_sq_) << "\n";
    os << "steps " << steps_ << "\n";
    os << "atoms " << atoms_.size() << "\n";
    for (const Atom& a : atoms_) {
      for (double v : a.position) os << hex_double(v) << " ";
      os << hex_double(a.count) << "\n";
    }
    os << "rng " << rng_ << "\n";
  }

  static RecodeMemory load(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header != "recode-memory-v1") {
      throw std::runtime_error("memory snapshot: bad header");
    }
    RecodeConfig cfg;
    cfg.capacity = read_field_u64(is, "capacity");
    cfg.k = read_field_u64(is, "k");
    cfg.kappa = read_field_double(is, "kappa");
    cfg.tau = read_field_double(is, "tau");
    cfg.gamma = read_field_double(is, "gamma");
    cfg.eta = read_field_double(is, "eta");
    cfg.n0 = read_field_double(is, "n0");
    cfg.epsilon = read_field_double(is, "epsilon");
    cfg.removal = removal_strategy_from_string(read_field_string(is, "removal"));
    cfg.seed = read_field_u64(is, "seed");
    cfg.tau_weights_new_sample = read_field_u64(is, "tau_weights_new_sample") != 0;
    const std::size_t dim = read_field_u64(is, "dim");
    RecodeMemory memory(dim, cfg);
    memory.d_ema_sq_ = read_field_double(is, "d_ema_sq");
    memory.steps_ = read_field_u64(is, "steps");
    const std::size_t n_atoms = read_field_u64(is, "atoms");
    memory.atoms_.resize(n_atoms);
    for (std::size_t i = 0; i < n_atoms; ++i) {
      memory.atoms_[i].position.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        memory.atoms_[i].position[d] = read_double_token(is);
      }
      memory.atoms_[i].count = read_double_token(is);
    }
    std::string tag;
    is >> tag;
    if (tag != "rng") throw std::runtime_error("memory snapshot: expected rng state");
    is >> memory.rng_;
    if (!is) throw std::runtime_error("memory snapshot: truncated rng state");
    return memory;
  }

  std::string snapshot_string() const {
    std::ostringstream oss;
    save(oss);
    return oss.str();
  }

 private:
  void check_dimension(const Embedding& e) const {
    if (e.size() != dim_) {
      throw std::invalid_argument("RecodeMemory: embedding dimension mismatch");
    }
  }

  void apply_bandwidth_update(const std::vector<std::size_t>& neighbors, const Embedding& e) {
    double sum = 0.0;
    for (std::size_t i : neighbors) sum += squared_distance(atoms_[i].position, e);
    const double mean_sq = sum / static_cast<double>(neighbors.size());
    const double w_new = config_.tau_weights_new_sample ? config_.tau : 1.0 - config_.tau;
    d_ema_sq_ = (1.0 - w_new) * d_ema_sq_ + w_new * mean_sq;
  }

  static bool config_equal(const RecodeConfig& a, const RecodeConfig& b) {
    return a.capacity == b.capacity && a.k == b.k && a.kappa == b.kappa && a.tau == b.tau &&
           a.gamma == b.gamma && a.eta == b.eta && a.n0 == b.n0 && a.epsilon == b.epsilon &&
           a.removal == b.removal && a.seed == b.seed &&
           a.tau_weights_new_sample == b.tau_weights_new_sample;
  }

  static std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
  }

  static std::string read_field_string(std::istream& is, const char* name) {
    std::string key, value;
    if (!(is >> key >> value) || key != name) {
      throw std::runtime_error(std::string("memory snapshot: expected field ") + name);
    }
    return value;
  }

  static std::uint64_t read_field_u64(std::istream& is, const char* name) {
    return std::stoull(read_field_string(is, name));
  }

  static double read_field_double(std::istream& is, const char* name) {
    return parse_double(read_field_string(is, name));
  }

  static double read_double_token(std::istream& is) {
    std::string token;
    if (!(is >> token)) throw std::runtime_error("memory snapshot: truncated atom data");
    return parse_double(token);
  }

  static double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str()) throw std::runtime_error("memory snapshot: bad double: " + token);
    return v;
  }

  std::size_t dim_;
  RecodeConfig config_;
  Rng rng_;
  std::vector<Atom> atoms_;
  double d_ema_sq_ = 0.0;
  std::uint64_t steps_ = 0;
};

}  // namespace recode
