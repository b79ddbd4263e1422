#include "recode/ap_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "recode/gridworld.hpp"
#include "recode/rng.hpp"

namespace recode {
namespace {

APConfig toy_config() {
  APConfig cfg;
  cfg.obs_dim = 25;
  cfg.num_actions = 4;
  cfg.encoder_hidden = 32;
  cfg.embedding_dim = 8;
  cfg.classifier_hidden = 32;
  cfg.seed = 3;
  return cfg;
}

// Random-walk transitions on an open 5x5 gridworld with one-hot observations.
TransitionBatch gridworld_batch(std::size_t n, std::uint64_t seed) {
  Gridworld env(5, 24, 0);
  Rng rng(seed);
  TransitionBatch batch;
  Observation obs = env.reset();
  while (batch.size() < n) {
    if (env.done()) obs = env.reset();
    const auto action = static_cast<Action>(rng.uniform_index(kNumActions));
    const StepResult step = env.step(action);
    batch.push_back({obs, static_cast<std::size_t>(action), step.observation});
    obs = step.observation;
  }
  return batch;
}

TEST(APForwardTest, SoftmaxIsNormalized) {
  APModel model(toy_config());
  const auto batch = gridworld_batch(20, 5);
  for (const Transition& tr : batch) {
    const auto probs = model.forward(tr.obs, tr.next_obs);
    double sum = 0.0;
    for (double p : probs) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(APForwardTest, FreshModelIsNearUniform) {
  APModel model(toy_config());  // init scale 1e-2
  const auto batch = gridworld_batch(10, 7);
  for (const Transition& tr : batch) {
    for (double p : model.forward(tr.obs, tr.next_obs)) {
      EXPECT_NEAR(p, 0.25, 0.1);
    }
  }
}

TEST(APForwardTest, PermutingClassifierOutputsPermutesProbs) {
  APModel model(toy_config());
  const auto batch = gridworld_batch(1, 11);
  const auto before = model.forward(batch[0].obs, batch[0].next_obs);

  // Swap output rows 0 and 2 of V2 together with their biases.
  const APLayout& l = model.layout();
  auto& params = model.mutable_parameters();
  const std::size_t h2 = model.config().classifier_hidden;
  for (std::size_t c = 0; c < h2; ++c) {
    std::swap(params[l.v2_off + 0 * h2 + c], params[l.v2_off + 2 * h2 + c]);
  }
  std::swap(params[l.c2_off + 0], params[l.c2_off + 2]);

  const auto after = model.forward(batch[0].obs, batch[0].next_obs);
  EXPECT_DOUBLE_EQ(after[0], before[2]);
  EXPECT_DOUBLE_EQ(after[2], before[0]);
  EXPECT_DOUBLE_EQ(after[1], before[1]);
  EXPECT_DOUBLE_EQ(after[3], before[3]);
}

TEST(APLossTest, ExactlyUniformModelGivesLogNumActions) {
  APModel model(toy_config());
  std::fill(model.mutable_parameters().begin(), model.mutable_parameters().end(), 0.0);
  const auto batch = gridworld_batch(30, 13);
  EXPECT_DOUBLE_EQ(model.loss(batch), std::log(4.0));
}

TEST(APLossTest, ConfidentCorrectModelHasNearZeroLoss) {
  APModel model(toy_config());
  auto batch = gridworld_batch(8, 17);
  for (Transition& tr : batch) tr.action = 2;
  model.mutable_parameters()[model.layout().c2_off + 2] = 50.0;  // force prob ~1 on action 2
  EXPECT_NEAR(model.loss(batch), 0.0, 1e-12);
}

TEST(APLossTest, MatchesIndependentRecomputation) {
  APModel model(toy_config());
  const auto batch = gridworld_batch(40, 19);
  double expected = 0.0;
  for (const Transition& tr : batch) {
    expected += -std::log(model.forward(tr.obs, tr.next_obs)[tr.action]);
  }
  expected /= static_cast<double>(batch.size());
  EXPECT_DOUBLE_EQ(model.loss(batch), expected);
}

TEST(APLossTest, EmptyBatchThrows) {
  APModel model(toy_config());
  EXPECT_THROW(model.loss({}), std::invalid_argument);
}

TEST(APLossTest, BadActionThrows) {
  APModel model(toy_config());
  auto batch = gridworld_batch(1, 23);
  batch[0].action = 4;
  EXPECT_THROW(model.loss(batch), std::invalid_argument);
}

TEST(APTrainTest, ZeroLearningRateLeavesParametersUnchanged) {
  APConfig cfg = toy_config();
  cfg.learning_rate = 0.0;
  APModel model(cfg);
  const auto params_before = model.parameters();
  model.train_step(gridworld_batch(20, 29));
  EXPECT_EQ(model.parameters(), params_before);
}

TEST(APTrainTest, LossNonIncreasingAtSmallLearningRate) {
  APConfig cfg = toy_config();
  cfg.learning_rate = 1e-3;
  APModel model(cfg);
  const auto batch = gridworld_batch(50, 31);
  double prev = model.loss(batch);
  for (int step = 0; step < 100; ++step) {
    const double before = model.train_step(batch);
    EXPECT_NEAR(before, prev, 1e-12);
    const double now = model.loss(batch);
    EXPECT_LE(now, prev + 1e-10);
    prev = now;
  }
}

TEST(APTrainTest, NonFiniteGradientSkipsStep) {
  APModel model(toy_config());
  model.mutable_parameters()[model.layout().c2_off] = std::numeric_limits<double>::infinity();
  const auto params_before = model.parameters();
  EXPECT_THROW(model.train_step(gridworld_batch(5, 37)), std::runtime_error);
  EXPECT_EQ(model.parameters(), params_before);
}

TEST(APGradCheckTest, AnalyticMatchesFiniteDifferences) {
  // Run the check at a representative parameter scale: at the near-zero
  // default init the true gradients sit below the finite-difference noise
  // floor and the comparison measures nothing.
  APConfig cfg = toy_config();
  cfg.init_scale = 0.1;
  APModel model(cfg);
  const auto batch = gridworld_batch(20, 41);
  EXPECT_LT(ap_grad_check(model, batch, 250), 1e-4);
}

TEST(APGradCheckTest, StillPassesAfterSomeTraining) {
  APConfig cfg = toy_config();
  cfg.learning_rate = 0.1;
  cfg.init_scale = 0.1;
  APModel model(cfg);
  const auto batch = gridworld_batch(30, 43);
  for (int i = 0; i < 50; ++i) model.train_step(batch);
  EXPECT_LT(ap_grad_check(model, batch, 250), 1e-4);
}

TEST(APGradCheckTest, CorruptedGradientBlockFails) {
  APConfig cfg = toy_config();
  cfg.init_scale = 0.1;
  APModel model(cfg);
  const auto batch = gridworld_batch(20, 47);
  auto res = model.compute_gradients(batch);
  const APLayout& l = model.layout();
  for (std::size_t i = 0; i < l.w2_size; ++i) res.grad[l.w2_off + i] *= 2.0;
  Rng rng(49);
  const double err =
      max_relative_gradient_error(model, batch, res.grad, model.parameters().size(), 1e-5, rng);
  EXPECT_GT(err, 0.4);
}

TEST(APGradCheckTest, ZeroGradientComparesCleanly) {
  // Confident correct model: analytic and numeric gradients both ~0; the
  // floored denominator keeps the relative error at zero instead of 0/0.
  APModel model(toy_config());
  auto batch = gridworld_batch(8, 53);
  for (Transition& tr : batch) tr.action = 1;
  model.mutable_parameters()[model.layout().c2_off + 1] = 60.0;
  EXPECT_LT(ap_grad_check(model, batch, 200), 1e-4);
}

TEST(APTrainTest, SolvesGridworldActionPrediction) {
  // Regression pinned by pilot run: full-batch descent on 50 deterministic
  // gridworld transitions reaches a tenth of the uniform loss within 2000
  // steps.
  APConfig cfg = toy_config();
  cfg.learning_rate = 0.5;
  cfg.init_scale = 0.1;
  cfg.seed = 3;
  APModel model(cfg);
  const auto batch = gridworld_batch(50, 59);
  double loss = model.loss(batch);
  for (int step = 0; step < 2000 && loss >= 0.1 * std::log(4.0); ++step) {
    loss = model.train_step(batch);
  }
  EXPECT_LT(model.loss(batch), 0.1 * std::log(4.0));
}

TEST(APModelTest, SaveLoadRoundTripsBitExactly) {
  APConfig cfg = toy_config();
  cfg.learning_rate = 0.2;
  APModel model(cfg);
  const auto batch = gridworld_batch(20, 61);
  for (int i = 0; i < 5; ++i) model.train_step(batch);

  std::stringstream stream;
  model.save(stream);
  APModel restored = APModel::load(stream);
  EXPECT_EQ(restored.parameters(), model.parameters());
  const auto probs_a = model.forward(batch[0].obs, batch[0].next_obs);
  const auto probs_b = restored.forward(batch[0].obs, batch[0].next_obs);
  EXPECT_EQ(probs_a, probs_b);
}

}  // namespace
}  // namespace recode
