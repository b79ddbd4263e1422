#include "recode/memory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "recode/rng.hpp"
#include "test_util.hpp"

namespace recode {
namespace {

RecodeConfig small_config() {
  RecodeConfig cfg;
  cfg.capacity = 8;
  cfg.k = 3;
  cfg.seed = 7;
  return cfg;
}

// Builds a memory warmed up with `steps` uniform random embeddings.
RecodeMemory random_memory(std::size_t dim, RecodeConfig cfg, std::size_t steps, Rng& rng,
                           double span = 10.0) {
  RecodeMemory memory(dim, cfg);
  for (std::size_t i = 0; i < steps; ++i) {
    Embedding e(dim);
    for (double& v : e) v = rng.uniform(0.0, span);
    memory.process(e);
  }
  return memory;
}

TEST(KernelTest, ZeroDistanceGivesOne) {
  const Embedding m{1.0, 2.0};
  EXPECT_DOUBLE_EQ(kernel_value(m, m, 4.0, 1e-3), 1.0);
}

TEST(KernelTest, BoundaryIsExcluded) {
  const Embedding m{0.0};
  const Embedding e{2.0};  // squared distance 4
  EXPECT_DOUBLE_EQ(kernel_value(m, e, 4.0, 1e-3), 0.0);
}

TEST(KernelTest, ClosedFormInsideRadius) {
  // squared distance 0.5, d_ema_sq 1.0, epsilon 0.5 -> 1/(1 + 0.5/0.5) = 0.5
  const Embedding m{0.0};
  const Embedding e{std::sqrt(0.5)};
  EXPECT_NEAR(kernel_value(m, e, 1.0, 0.5), 0.5, 1e-12);
}

TEST(KernelTest, ZeroBandwidthGivesZeroEverywhere) {
  const Embedding m{1.0};
  EXPECT_DOUBLE_EQ(kernel_value(m, m, 0.0, 1e-3), 0.0);
}

TEST(KernelTest, DimensionMismatchThrows) {
  EXPECT_THROW(kernel_value({1.0}, {1.0, 2.0}, 1.0, 1e-3), std::invalid_argument);
}

TEST(KernelTest, BoundsHoldOnRandomInputs) {
  Rng rng(42);
  for (int trial = 0; trial < 2000; ++trial) {
    Embedding m(3), e(3);
    for (double& v : m) v = rng.uniform(-5.0, 5.0);
    for (double& v : e) v = rng.uniform(-5.0, 5.0);
    const double d_sq = rng.uniform(0.0, 20.0);
    const double eps = rng.uniform(1e-4, 2.0);
    const double k = kernel_value(m, e, d_sq, eps);
    ASSERT_GE(k, 0.0);
    ASSERT_LE(k, 1.0);
    if (squared_distance(m, e) >= d_sq) ASSERT_EQ(k, 0.0);
  }
}

TEST(IntrinsicRewardTest, MatchesClosedForm) {
  EXPECT_DOUBLE_EQ(intrinsic_reward_raw(0.0, 0.01), 100.0);
  EXPECT_NEAR(intrinsic_reward_raw(1.0, 1e-12), 1.0, 1e-9);
  EXPECT_NEAR(intrinsic_reward_raw(99.8001, 0.01), 0.1, 1e-12);
}

TEST(IntrinsicRewardTest, BoundedByInverseN0) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double n = rng.uniform(0.0, 1e6);
    const double n0 = rng.uniform(1e-4, 1.0);
    const double r = intrinsic_reward_raw(n, n0);
    ASSERT_GT(r, 0.0);
    ASSERT_LE(r, 1.0 / n0);
  }
}

TEST(RecodeConfigTest, RejectsInvalidValues) {
  RecodeConfig cfg;
  cfg.capacity = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RecodeConfig{};
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RecodeConfig{};
  cfg.gamma = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RecodeConfig{};
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_NO_THROW(RecodeConfig{}.validate());
}

TEST(SoftCountTest, EmptyMemoryIsZero) {
  RecodeMemory memory(2, small_config());
  EXPECT_DOUBLE_EQ(memory.soft_visitation_count({0.0, 0.0}), 0.0);
}

TEST(SoftCountTest, SingleAtomAtQuery) {
  RecodeMemory memory(1, small_config());
  memory.process({2.0});
  // Atom created with count 1; push it to count 3 by assimilating twice.
  memory.set_bandwidth_sq(1.0);
  memory.assimilate({2.0}, 0);
  memory.assimilate({2.0}, 0);
  EXPECT_DOUBLE_EQ(memory.soft_visitation_count({2.0}), 4.0);
}

TEST(SoftCountTest, AtomsOutsideRadiusContributeNothing) {
  RecodeMemory memory(1, small_config());
  memory.process({0.0});
  memory.process({10.0});
  memory.set_bandwidth_sq(0.5);
  EXPECT_DOUBLE_EQ(memory.soft_visitation_count({5.0}), 0.0);
}

TEST(KnnTest, ReturnsAllWhenFewerThanK) {
  RecodeMemory memory(1, small_config());
  memory.process({0.0});
  memory.process({5.0});
  memory.process({9.0});
  const auto idx = memory.knn({1.0}, 20);
  EXPECT_EQ(idx.size(), 3u);
}

TEST(KnnTest, OrdersByDistance) {
  RecodeMemory memory(1, small_config());
  memory.process({2.0});   // distance 2 from query 0
  memory.process({-1.0});  // distance 1
  memory.process({3.0});   // distance 3
  const auto idx = memory.knn({0.0}, 2);
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx[0], 1u);
  EXPECT_EQ(idx[1], 0u);
}

TEST(KnnTest, TieBreaksByLowestIndex) {
  RecodeMemory memory(1, small_config());
  memory.process({1.0});
  memory.process({-1.0});
  const auto idx = memory.knn({0.0}, 1);
  ASSERT_EQ(idx.size(), 1u);
  EXPECT_EQ(idx[0], 0u);
}

TEST(KnnTest, MatchesBruteForceOnRandomInstances) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    RecodeConfig cfg = small_config();
    cfg.capacity = 64;
    cfg.seed = static_cast<std::uint64_t>(trial);
    RecodeMemory memory = random_memory(3, cfg, 40, rng);
    std::vector<Embedding> points;
    for (const Atom& a : memory.atoms()) points.push_back(a.position);
    Embedding query(3);
    for (double& v : query) v = rng.uniform(0.0, 10.0);
    const auto expected = oracles::brute_force_knn(points, query, 5);
    EXPECT_EQ(memory.knn(query, 5), expected);
  }
}

TEST(BandwidthTest, FullReplacementAtTauOne) {
  RecodeConfig cfg = small_config();
  cfg.tau = 1.0;
  cfg.k = 2;
  RecodeMemory memory(1, cfg);
  memory.process({1.0});
  memory.process({3.0});
  memory.set_bandwidth_sq(123.0);
  memory.update_bandwidth({0.0});  // squared distances 1 and 9 -> mean 5
  EXPECT_DOUBLE_EQ(memory.bandwidth_sq(), 5.0);
}

TEST(BandwidthTest, ZeroWeightLeavesValueUnchanged) {
  // The swapped convention with tau = 1 puts zero weight on the new sample.
  RecodeConfig cfg = small_config();
  cfg.tau = 1.0;
  cfg.tau_weights_new_sample = false;
  RecodeMemory memory(1, cfg);
  memory.process({1.0});
  memory.set_bandwidth_sq(2.0);
  memory.update_bandwidth({0.0});
  EXPECT_DOUBLE_EQ(memory.bandwidth_sq(), 2.0);
}

TEST(BandwidthTest, ConvexCombination) {
  RecodeConfig cfg = small_config();
  cfg.tau = 0.5;
  cfg.k = 1;
  RecodeMemory memory(1, cfg);
  memory.process({2.0});
  memory.set_bandwidth_sq(2.0);
  memory.update_bandwidth({0.0});  // mean squared distance 4
  EXPECT_DOUBLE_EQ(memory.bandwidth_sq(), 3.0);
}

TEST(BandwidthTest, EmptyMemoryIsNoOp) {
  RecodeMemory memory(1, small_config());
  memory.update_bandwidth({0.0});
  EXPECT_DOUBLE_EQ(memory.bandwidth_sq(), 0.0);
}

TEST(DiscountTest, ScalesEveryCount) {
  RecodeConfig cfg = small_config();
  cfg.gamma = 0.5;
  RecodeMemory memory = testutil::make_memory(
      cfg, 1, {Atom{{0.0}, 1.0}, Atom{{5.0}, 2.0}, Atom{{9.0}, 4.0}});
  memory.discount_counts();
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 0.5);
  EXPECT_DOUBLE_EQ(memory.atoms()[1].count, 1.0);
  EXPECT_DOUBLE_EQ(memory.atoms()[2].count, 2.0);
}

TEST(DiscountTest, IdentityAtGammaOne) {
  RecodeConfig cfg = small_config();
  cfg.gamma = 1.0;
  RecodeMemory memory(1, cfg);
  memory.process({0.0});
  memory.discount_counts();
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 1.0);
}

TEST(NearestAtomTest, EmptyMemorySignalsInsertPath) {
  RecodeMemory memory(1, small_config());
  EXPECT_FALSE(memory.nearest_atom({0.0}).has_value());
}

TEST(NearestAtomTest, PicksClosest) {
  RecodeMemory memory(1, small_config());
  memory.process({0.0});
  memory.process({10.0});
  EXPECT_EQ(memory.nearest_atom({1.0}).value(), 0u);
}

TEST(NearestAtomTest, MatchesBruteForceOnRandomInstances) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    RecodeConfig cfg = small_config();
    cfg.capacity = 32;
    cfg.seed = static_cast<std::uint64_t>(100 + trial);
    RecodeMemory memory = random_memory(2, cfg, 25, rng);
    std::vector<Embedding> points;
    for (const Atom& a : memory.atoms()) points.push_back(a.position);
    Embedding query{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
    EXPECT_EQ(memory.nearest_atom(query).value(), oracles::brute_force_nearest(points, query));
  }
}

// Empirical removal frequencies against the normalized strategy weights.
void check_removal_distribution(RemovalStrategy strategy, const std::vector<double>& counts,
                                const std::vector<double>& expected_probs) {
  RecodeConfig cfg = small_config();
  cfg.removal = strategy;
  cfg.capacity = std::max<std::size_t>(counts.size(), 2);
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    atoms.push_back(Atom{{static_cast<double>(i) * 100.0}, counts[i]});
  }
  RecodeMemory memory = testutil::make_memory(cfg, 1, atoms);
  const std::size_t draws = 20000;
  std::vector<std::size_t> tally(counts.size(), 0);
  for (std::size_t i = 0; i < draws; ++i) ++tally[memory.sample_removal()];
  const double stat = oracles::chi_squared_stat(tally, expected_probs);
  EXPECT_LT(stat, oracles::chi_squared_critical_p01(counts.size() - 1))
      << "strategy " << to_string(strategy);
}

TEST(SampleRemovalTest, InverseCountSquaredWeights) {
  check_removal_distribution(RemovalStrategy::InverseCountSquared, {1.0, 2.0}, {0.8, 0.2});
}

TEST(SampleRemovalTest, InverseCountWeights) {
  check_removal_distribution(RemovalStrategy::InverseCount, {1.0, 2.0}, {2.0 / 3.0, 1.0 / 3.0});
}

TEST(SampleRemovalTest, MinCountIsDeterministicArgmin) {
  RecodeConfig cfg = small_config();
  cfg.removal = RemovalStrategy::MinCount;
  RecodeMemory memory = testutil::make_memory(
      cfg, 1, {Atom{{0.0}, 5.0}, Atom{{100.0}, 1.0}, Atom{{200.0}, 3.0}});
  for (int i = 0; i < 10; ++i) EXPECT_EQ(memory.sample_removal(), 1u);
}

TEST(SampleRemovalTest, EmptyMemoryThrows) {
  RecodeMemory memory(1, small_config());
  EXPECT_THROW(memory.sample_removal(), std::logic_error);
}

TEST(RedistributeTest, OnlyCandidateReceivesCount) {
  RecodeMemory memory =
      testutil::make_memory(small_config(), 1, {Atom{{0.0}, 3.0}, Atom{{5.0}, 2.0}});
  memory.redistribute_count(0);
  ASSERT_EQ(memory.atoms().size(), 1u);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 5.0);
}

TEST(RedistributeTest, NearestReceiverMatchesBruteForce) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    RecodeConfig cfg = small_config();
    cfg.capacity = 16;
    cfg.seed = static_cast<std::uint64_t>(200 + trial);
    RecodeMemory memory = random_memory(2, cfg, 12, rng);
    if (memory.atoms().size() < 3) continue;
    std::vector<Embedding> points;
    std::vector<double> counts;
    for (const Atom& a : memory.atoms()) {
      points.push_back(a.position);
      counts.push_back(a.count);
    }
    const std::size_t removed = rng.uniform_index(points.size());
    const std::size_t receiver = oracles::brute_force_nearest_excluding(points, removed);
    memory.redistribute_count(removed);
    const std::size_t receiver_after = receiver > removed ? receiver - 1 : receiver;
    EXPECT_NEAR(memory.atoms()[receiver_after].count, counts[receiver] + counts[removed], 1e-12);
  }
}

TEST(RedistributeTest, ConservesTotalCount) {
  Rng rng(19);
  RecodeConfig cfg = small_config();
  cfg.capacity = 16;
  RecodeMemory memory = random_memory(2, cfg, 12, rng);
  ASSERT_GE(memory.atoms().size(), 2u);
  const double before = memory.total_count();
  memory.redistribute_count(1);
  EXPECT_NEAR(memory.total_count(), before, 1e-12);
}

TEST(RedistributeTest, SingletonDropsCount) {
  RecodeMemory memory(1, small_config());
  memory.process({0.0});
  memory.redistribute_count(0);
  EXPECT_TRUE(memory.atoms().empty());
}

TEST(AssimilateTest, MidpointAtCountOne) {
  RecodeMemory memory(1, small_config());
  memory.process({0.0});  // count 1 at position 0
  memory.assimilate({1.0}, 0);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].position[0], 0.5);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 2.0);
}

TEST(AssimilateTest, FullyDecayedAtomIsReplaced) {
  // A count can only hit zero exactly by construction; inject the state
  // through the snapshot interface.
  std::ostringstream rng_state;
  rng_state << Rng(7);
  const std::string snap =
      "recode-memory-v1\n"
      "capacity 8\nk 3\nkappa 0.2\ntau 0.9999\ngamma 0.5\neta 0.05\nn0 0.01\n"
      "epsilon 0.001\nremoval inverse_count_squared\nseed 7\ntau_weights_new_sample 1\n"
      "dim 1\nd_ema_sq 1\nsteps 1\natoms 1\n4 0\n"
      "rng " +
      rng_state.str() + "\n";
  std::stringstream stream(snap);
  RecodeMemory memory = RecodeMemory::load(stream);
  ASSERT_DOUBLE_EQ(memory.atoms()[0].count, 0.0);
  memory.assimilate({7.0}, 0);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].position[0], 7.0);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 1.0);
}

TEST(AssimilateTest, RunningMeanIdentity) {
  RecodeConfig cfg = small_config();
  cfg.gamma = 1.0;
  RecodeMemory memory(2, cfg);
  const std::vector<Embedding> inputs{{1.0, 2.0}, {3.0, -1.0}, {0.5, 0.5}, {2.0, 2.0}, {-1.0, 4.0}};
  memory.process(inputs[0]);
  for (std::size_t i = 1; i < inputs.size(); ++i) memory.assimilate(inputs[i], 0);
  Embedding mean(2, 0.0);
  for (const auto& e : inputs) {
    mean[0] += e[0] / static_cast<double>(inputs.size());
    mean[1] += e[1] / static_cast<double>(inputs.size());
  }
  EXPECT_NEAR(memory.atoms()[0].position[0], mean[0], 1e-12);
  EXPECT_NEAR(memory.atoms()[0].position[1], mean[1], 1e-12);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 5.0);
}

TEST(ProcessTest, EmptyMemoryBootstraps) {
  RecodeMemory memory(2, small_config());
  const auto result = memory.process({1.0, 2.0});
  EXPECT_DOUBLE_EQ(result.reward, 100.0);  // 1/n0 with default n0 = 0.01
  EXPECT_TRUE(result.inserted);
  ASSERT_EQ(memory.atoms().size(), 1u);
  EXPECT_DOUBLE_EQ(memory.atoms()[0].count, 1.0);
  EXPECT_EQ(memory.atoms()[0].position, (Embedding{1.0, 2.0}));
}

TEST(ProcessTest, RepeatedEmbeddingTracesClosedForm) {
  RecodeConfig cfg = small_config();
  cfg.gamma = 1.0;
  RecodeMemory memory(1, cfg);
  const Embedding e{3.0};
  EXPECT_DOUBLE_EQ(memory.process(e).reward, 100.0);
  memory.set_bandwidth_sq(1.0);
  // From here on the memory holds one atom exactly at e whose count grows by
  // one per step, so the soft count at step s is s.
  for (std::size_t s = 2; s <= 8; ++s) {
    const auto result = memory.process(e);
    EXPECT_FALSE(result.inserted);
    EXPECT_DOUBLE_EQ(result.reward, 1.0 / (std::sqrt(static_cast<double>(s)) + 0.01));
    EXPECT_DOUBLE_EQ(memory.atoms()[0].count, static_cast<double>(s));
  }
}

TEST(ProcessTest, CountConservationBothBranches) {
  for (double gamma : {0.99, 0.999, 1.0}) {
    RecodeConfig cfg;
    cfg.capacity = 32;
    cfg.k = 5;
    cfg.gamma = gamma;
    cfg.seed = 23;
    RecodeMemory memory(3, cfg);
    Rng rng(29);
    std::size_t insertions = 0;
    std::size_t assimilations = 0;
    const std::size_t steps = 5000;
    for (std::size_t i = 0; i < steps; ++i) {
      Embedding e{rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)};
      const double before = memory.total_count();
      const auto result = memory.process(e);
      (result.inserted ? insertions : assimilations) += 1;
      ASSERT_NEAR(memory.total_count(), gamma * before + 1.0, 1e-9);
    }
    EXPECT_GT(insertions, 0u);
    EXPECT_GT(assimilations, 0u);
    const double expected = oracles::telescoped_count(gamma, steps);
    EXPECT_LT(std::abs(memory.total_count() - expected) / expected, 1e-6);
  }
}

TEST(ProcessTest, CapacityNeverExceededAndFullStaysFull) {
  RecodeConfig cfg;
  cfg.capacity = 16;
  cfg.k = 4;
  cfg.seed = 31;
  RecodeMemory memory(2, cfg);
  Rng rng(37);
  bool was_full = false;
  for (int i = 0; i < 3000; ++i) {
    memory.process({rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
    ASSERT_LE(memory.atoms().size(), cfg.capacity);
    if (was_full) ASSERT_EQ(memory.atoms().size(), cfg.capacity);
    was_full = memory.full();
  }
  EXPECT_TRUE(was_full);
}

TEST(ProcessTest, AssimilationNeverDecreasesSoftCountAtFixedBandwidth) {
  // Operational form of the update-branch monotonicity property, driven over
  // randomized memory states by replaying the step pipeline manually.
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    RecodeConfig cfg;
    cfg.capacity = 24;
    cfg.k = 4;
    cfg.gamma = trial % 2 == 0 ? 0.99 : 1.0;
    cfg.seed = static_cast<std::uint64_t>(trial);
    RecodeMemory memory = random_memory(2, cfg, 30, rng, 20.0);
    Embedding e{rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0)};
    memory.update_bandwidth(e);
    memory.discount_counts();
    const auto star = memory.nearest_atom(e);
    ASSERT_TRUE(star.has_value());
    const double before = memory.soft_visitation_count(e);
    memory.assimilate(e, *star);
    const double after = memory.soft_visitation_count(e);
    ASSERT_GE(after, before - 1e-12);
  }
}

TEST(ProcessTest, NonFiniteEmbeddingRejectedWithoutStateChange) {
  RecodeMemory memory(2, small_config());
  memory.process({1.0, 1.0});
  memory.process({4.0, 4.0});
  const std::string before = memory.snapshot_string();
  EXPECT_THROW(memory.process({std::nan(""), 1.0}), std::invalid_argument);
  EXPECT_THROW(memory.process({1.0, std::numeric_limits<double>::infinity()}),
               std::invalid_argument);
  EXPECT_EQ(memory.snapshot_string(), before);
}

TEST(ProcessTest, DimensionMismatchThrows) {
  RecodeMemory memory(2, small_config());
  EXPECT_THROW(memory.process({1.0}), std::invalid_argument);
}

TEST(ProcessTest, DeterministicGivenSeedAndStream) {
  RecodeConfig cfg;
  cfg.capacity = 16;
  cfg.k = 4;
  cfg.seed = 99;
  std::vector<double> rewards_a, rewards_b;
  std::string snap_a, snap_b;
  for (int run = 0; run < 2; ++run) {
    RecodeMemory memory(2, cfg);
    Rng rng(55);
    std::vector<double>& rewards = run == 0 ? rewards_a : rewards_b;
    for (int i = 0; i < 500; ++i) {
      rewards.push_back(memory.process({rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0)}).reward);
    }
    (run == 0 ? snap_a : snap_b) = memory.snapshot_string();
  }
  EXPECT_EQ(rewards_a, rewards_b);
  EXPECT_EQ(snap_a, snap_b);
}

TEST(SnapshotTest, RoundTripRestoresBitExactState) {
  RecodeConfig cfg;
  cfg.capacity = 16;
  cfg.k = 4;
  cfg.gamma = 0.995;
  cfg.removal = RemovalStrategy::InverseCount;
  cfg.seed = 1234;
  RecodeMemory memory(3, cfg);
  Rng rng(77);
  for (int i = 0; i < 400; ++i) {
    memory.process({rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)});
  }
  std::stringstream stream;
  memory.save(stream);
  RecodeMemory restored = RecodeMemory::load(stream);
  EXPECT_TRUE(restored == memory);
  EXPECT_EQ(restored.snapshot_string(), memory.snapshot_string());

  // The restored memory must continue identically to the original.
  Embedding probe{1.5, 2.5, 3.5};
  const auto a = memory.process(probe);
  const auto b = restored.process(probe);
  EXPECT_DOUBLE_EQ(a.reward, b.reward);
  EXPECT_EQ(memory.snapshot_string(), restored.snapshot_string());
}

TEST(SnapshotTest, BadHeaderRejected) {
  std::stringstream stream("not-a-snapshot\n");
  EXPECT_THROW(RecodeMemory::load(stream), std::runtime_error);
}

}  // namespace
}  // namespace recode
