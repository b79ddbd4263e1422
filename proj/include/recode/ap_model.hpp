#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "recode/embedding.hpp"
#include "recode/rng.hpp"

namespace recode {

struct Transition {
  Observation obs;
  std::size_t action = 0;
  Observation next_obs;
};

using TransitionBatch = std::vector<Transition>;

struct APConfig {
  std::size_t obs_dim = 0;
  std::size_t num_actions = 0;
  std::size_t encoder_hidden = 64;
  std::size_t embedding_dim = 16;
  std::size_t classifier_hidden = 64;
  double learning_rate = 1e-2;
  double init_scale = 1e-2;
  std::uint64_t seed = 0;

  void validate() const {
    if (obs_dim == 0) throw std::invalid_argument("APConfig: obs_dim must be >= 1");
    if (num_actions < 2) throw std::invalid_argument("APConfig: num_actions must be >= 2");
    if (encoder_hidden == 0 || embedding_dim == 0 || classifier_hidden == 0) {
      throw std::invalid_argument("APConfig: layer sizes must be >= 1");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("APConfig: bad learning rate");
    }
    if (!(init_scale > 0.0)) throw std::invalid_argument("APConfig: init_scale must be positive");
  }
};

// Offsets of the eight parameter blocks inside the flat parameter vector:
// encoder W1,b1,W2,b2 followed by classifier V1,c1,V2,c2.
struct APLayout {
  std::size_t w1_off = 0, w1_size = 0;
  std::size_t b1_off = 0, b1_size = 0;
  std::size_t w2_off = 0, w2_size = 0;
  std::size_t b2_off = 0, b2_size = 0;
  std::size_t v1_off = 0, v1_size = 0;
  std::size_t c1_off = 0, c1_size = 0;
  std::size_t v2_off = 0, v2_size = 0;
  std::size_t c2_off = 0, c2_size = 0;
  std::size_t total = 0;
};

// One-step action-prediction embedding: a tanh encoder producing the
// embedding e = f(o), and a tanh classifier over the concatenation
// [f(o_t), f(o_t+1)] emitting a softmax over actions. Both are trained
// jointly on the negative log-likelihood of the taken action with plain
// full-batch gradient descent.
class APModel {
 public:
  explicit APModel(APConfig config) : config_(config) {
    config_.validate();
    layout_ = make_layout(config_);
    params_.resize(layout_.total);
    Rng rng(config_.seed);
    for (double& p : params_) p = rng.uniform(-config_.init_scale, config_.init_scale);
  }

  const APConfig& config() const { return config_; }
  const APLayout& layout() const { return layout_; }
  const std::vector<double>& parameters() const { return params_; }
  std::vector<double>& mutable_parameters() { return params_; }

  // f_theta: observation -> embedding.
  Embedding embed(const Observation& obs) const {
    check_obs(obs);
    std::vector<double> h1(config_.encoder_hidden);
    Embedding e(config_.embedding_dim);
    encoder_forward(obs, h1, e);
    return e;
  }

  // Probability vector over actions given two consecutive observations.
  std::vector<double> forward(const Observation& obs, const Observation& next_obs) const {
    Activations act;
    forward_one(obs, next_obs, act);
    return act.probs;
  }

  // Mean negative log-likelihood of the taken actions.
  double loss(const TransitionBatch& batch) const {
    check_batch(batch);
    double total = 0.0;
    Activations act;
    for (const Transition& tr : batch) {
      forward_one(tr.obs, tr.next_obs, act);
      total += -std::log(std::max(act.probs[tr.action], kProbFloor));
    }
    return total / static_cast<double>(batch.size());
  }

  struct GradientResult {
    std::vector<double> grad;  // flat, same layout as parameters
    double loss = 0.0;
  };

  GradientResult compute_gradients(const TransitionBatch& batch) const {
    check_batch(batch);
    GradientResult result;
    result.grad.assign(layout_.total, 0.0);
    Activations act;
    for (const Transition& tr : batch) {
      forward_one(tr.obs, tr.next_obs, act);
      result.loss += -std::log(std::max(act.probs[tr.action], kProbFloor));
      backward_one(tr, act, result.grad);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    result.loss *= inv_b;
    for (double& g : result.grad) g *= inv_b;
    return result;
  }

  // One full-batch descent step; returns the pre-step loss. A non-finite
  // gradient leaves the parameters untouched.
  double train_step(const TransitionBatch& batch) {
    GradientResult res = compute_gradients(batch);
    if (!all_finite(res.grad)) {
      throw std::runtime_error("train_step: non-finite gradient, step skipped");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_[i] -= config_.learning_rate * res.grad[i];
    }
    return res.loss;
  }

  // Flat numeric save with a shape header; hexfloats round-trip bit-exactly.
  void save(std::ostream& os) const {
    os << "ap-model-v1\n";
    os << config_.obs_dim << " " << config_.num_actions << " " << config_.encoder_hidden << " "
       << config_.embedding_dim << " " << config_.classifier_hidden << "\n";
    os << hex_double(config_.learning_rate) << " " << hex_double(config_.init_scale) << " "
       << config_.seed << "\n";
    os << params_.size() << "\n";
    for (double p : params_) os << hex_double(p) << "\n";
  }

  static APModel load(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header != "ap-model-v1") {
      throw std::runtime_error("ap model: bad header");
    }
    APConfig cfg;
    is >> cfg.obs_dim >> cfg.num_actions >> cfg.encoder_hidden >> cfg.embedding_dim >>
        cfg.classifier_hidden;
    std::string lr, scale;
    is >> lr >> scale >> cfg.seed;
    cfg.learning_rate = parse_double(lr);
    cfg.init_scale = parse_double(scale);
    std::size_t n = 0;
    is >> n;
    APModel model(cfg);
    if (n != model.params_.size()) throw std::runtime_error("ap model: parameter count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      std::string token;
      if (!(is >> token)) throw std::runtime_error("ap model: truncated parameters");
      model.params_[i] = parse_double(token);
    }
    return model;
  }

 private:
  static constexpr double kProbFloor = 1e-300;

  struct Activations {
    std::vector<double> h1_t, h1_n;  // encoder hidden, both observations
    Embedding e_t, e_n;
    std::vector<double> x;   // concat [e_t, e_n]
    std::vector<double> h2;  // classifier hidden
    std::vector<double> probs;
  };

  static APLayout make_layout(const APConfig& c) {
    APLayout l;
    std::size_t off = 0;
    auto block = [&off](std::size_t& o, std::size_t& s, std::size_t size) {
      o = off;
      s = size;
      off += size;
    };
    block(l.w1_off, l.w1_size, c.encoder_hidden * c.obs_dim);
    block(l.b1_off, l.b1_size, c.encoder_hidden);
    block(l.w2_off, l.w2_size, c.embedding_dim * c.encoder_hidden);
    block(l.b2_off, l.b2_size, c.embedding_dim);
    block(l.v1_off, l.v1_size, c.classifier_hidden * 2 * c.embedding_dim);
    block(l.c1_off, l.c1_size, c.classifier_hidden);
    block(l.v2_off, l.v2_size, c.num_actions * c.classifier_hidden);
    block(l.c2_off, l.c2_size, c.num_actions);
    l.total = off;
    return l;
  }

  void check_obs(const Observation& obs) const {
    if (obs.size() != config_.obs_dim) {
      throw std::invalid_argument("APModel: observation dimension mismatch");
    }
  }

  void check_batch(const TransitionBatch& batch) const {
    if (batch.empty()) throw std::invalid_argument("APModel: empty batch");
    for (const Transition& tr : batch) {
      check_obs(tr.obs);
      check_obs(tr.next_obs);
      if (tr.action >= config_.num_actions) {
        throw std::invalid_argument("APModel: action index out of range");
      }
    }
  }

  void encoder_forward(const Observation& obs, std::vector<double>& h1, Embedding& e) const {
    const std::size_t in = config_.obs_dim;
    const std::size_t h = config_.encoder_hidden;
    const std::size_t d = config_.embedding_dim;
    h1.assign(h, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      const double* row = &params_[layout_.w1_off + r * in];
      double z = params_[layout_.b1_off + r];
      for (std::size_t c = 0; c < in; ++c) z += row[c] * obs[c];
      h1[r] = std::tanh(z);
    }
    e.assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      const double* row = &params_[layout_.w2_off + r * h];
      double z = params_[layout_.b2_off + r];
      for (std::size_t c = 0; c < h; ++c) z += row[c] * h1[c];
      e[r] = z;
    }
  }

  void forward_one(const Observation& obs, const Observation& next_obs, Activations& act) const {
    check_obs(obs);
    check_obs(next_obs);
    const std::size_t d = config_.embedding_dim;
    const std::size_t h2n = config_.classifier_hidden;
    const std::size_t a = config_.num_actions;

    encoder_forward(obs, act.h1_t, act.e_t);
    encoder_forward(next_obs, act.h1_n, act.e_n);

    act.x.assign(2 * d, 0.0);
    std::copy(act.e_t.begin(), act.e_t.end(), act.x.begin());
    std::copy(act.e_n.begin(), act.e_n.end(), act.x.begin() + static_cast<std::ptrdiff_t>(d));

    act.h2.assign(h2n, 0.0);
    for (std::size_t r = 0; r < h2n; ++r) {
      const double* row = &params_[layout_.v1_off + r * 2 * d];
      double z = params_[layout_.c1_off + r];
      for (std::size_t c = 0; c < 2 * d; ++c) z += row[c] * act.x[c];
      act.h2[r] = std::tanh(z);
    }

    std::vector<double> logits(a);
    for (std::size_t r = 0; r < a; ++r) {
      const double* row = &params_[layout_.v2_off + r * h2n];
      double z = params_[layout_.c2_off + r];
      for (std::size_t c = 0; c < h2n; ++c) z += row[c] * act.h2[c];
      logits[r] = z;
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    act.probs.assign(a, 0.0);
    for (std::size_t r = 0; r < a; ++r) {
      act.probs[r] = std::exp(logits[r] - max_logit);
      denom += act.probs[r];
    }
    for (double& p : act.probs) p /= denom;
  }

  // Accumulates the per-transition gradient of -ln p[action] into grad.
  void backward_one(const Transition& tr, const Activations& act,
                    std::vector<double>& grad) const {
    const std::size_t in = config_.obs_dim;
    const std::size_t h = config_.encoder_hidden;
    const std::size_t d = config_.embedding_dim;
    const std::size_t h2n = config_.classifier_hidden;
    const std::size_t a = config_.num_actions;

    // Softmax + NLL: d logits = p - onehot.
    std::vector<double> dlogits(act.probs);
    dlogits[tr.action] -= 1.0;

    std::vector<double> dh2(h2n, 0.0);
    for (std::size_t r = 0; r < a; ++r) {
      const double g = dlogits[r];
      double* v2_row = &grad[layout_.v2_off + r * h2n];
      const double* v2 = &params_[layout_.v2_off + r * h2n];
      for (std::size_t c = 0; c < h2n; ++c) {
        v2_row[c] += g * act.h2[c];
        dh2[c] += v2[c] * g;
      }
      grad[layout_.c2_off + r] += g;
    }

    std::vector<double> dx(2 * d, 0.0);
    for (std::size_t r = 0; r < h2n; ++r) {
      const double dz = dh2[r] * (1.0 - act.h2[r] * act.h2[r]);
      double* v1_row = &grad[layout_.v1_off + r * 2 * d];
      const double* v1 = &params_[layout_.v1_off + r * 2 * d];
      for (std::size_t c = 0; c < 2 * d; ++c) {
        v1_row[c] += dz * act.x[c];
        dx[c] += v1[c] * dz;
      }
      grad[layout_.c1_off + r] += dz;
    }

    // Both encoder passes share weights; their gradients add.
    backward_encoder(tr.obs, act.h1_t, dx.data(), grad, in, h, d);
    backward_encoder(tr.next_obs, act.h1_n, dx.data() + d, grad, in, h, d);
  }

  void backward_encoder(const Observation& obs, const std::vector<double>& h1, const double* de,
                        std::vector<double>& grad, std::size_t in, std::size_t h,
                        std::size_t d) const {
    std::vector<double> dh1(h, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      const double g = de[r];
      double* w2_row = &grad[layout_.w2_off + r * h];
      const double* w2 = &params_[layout_.w2_off + r * h];
      for (std::size_t c = 0; c < h; ++c) {
        w2_row[c] += g * h1[c];
        dh1[c] += w2[c] * g;
      }
      grad[layout_.b2_off + r] += g;
    }
    for (std::size_t r = 0; r < h; ++r) {
      const double dz = dh1[r] * (1.0 - h1[r] * h1[r]);
      double* w1_row = &grad[layout_.w1_off + r * in];
      for (std::size_t c = 0; c < in; ++c) w1_row[c] += dz * obs[c];
      grad[layout_.b1_off + r] += dz;
    }
  }

  static std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
  }

  static double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str()) throw std::runtime_error("ap model: bad double: " + token);
    return v;
  }

  APConfig config_;
  APLayout layout_;
  std::vector<double> params_;
};

// Max relative error between the supplied analytic gradient and central
// finite differences over a random subsample of parameters. Denominator is
// floored so exact zeros compare as zero error.
inline double max_relative_gradient_error(APModel& model, const TransitionBatch& batch,
                                          const std::vector<double>& analytic,
                                          std::size_t n_samples, double h, Rng& rng) {
  if (analytic.size() != model.parameters().size()) {
    throw std::invalid_argument("max_relative_gradient_error: gradient size mismatch");
  }
  std::vector<double>& params = model.mutable_parameters();
  const std::size_t total = params.size();
  const std::size_t samples = std::min(n_samples, total);
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  for (std::size_t i = 0; i < samples; ++i) {  // partial Fisher-Yates
    const std::size_t j = i + rng.uniform_index(total - i);
    std::swap(indices[i], indices[j]);
  }
  double max_err = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t idx = indices[s];
    const double saved = params[idx];
    params[idx] = saved + h;
    const double loss_plus = model.loss(batch);
    params[idx] = saved - h;
    const double loss_minus = model.loss(batch);
    params[idx] = saved;
    const double numeric = (loss_plus - loss_minus) / (2.0 * h);
    const double a = analytic[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_err = std::max(max_err, std::abs(a - numeric) / denom);
  }
  return max_err;
}

// Convenience wrapper: analytic gradients vs finite differences.
inline double ap_grad_check(APModel& model, const TransitionBatch& batch,
                            std::size_t n_samples = 200, double h = 1e-5,
                            std::uint64_t seed = 12345) {
  const auto res = model.compute_gradients(batch);
  Rng rng(seed);
  return max_relative_gradient_error(model, batch, res.grad, n_samples, h, rng);
}

}  // namespace recode
