#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "bsaloha/analytic.hpp"
#include "bsaloha/sim.hpp"

using namespace bsaloha;

namespace {

SimConfig scripted(std::int64_t n, std::int64_t M) {
  SimConfig c;
  c.params = SystemParams{n, 0.5, 1.0, BatchSize(M)};
  c.total_slots = 100;
  c.warmup_slots = 0;
  return c;
}

SimConfig random_cfg(std::int64_t n, double lh, double r, BatchSize M, std::int64_t slots) {
  SimConfig c;
  c.params = SystemParams{n, lh, r, M};
  c.total_slots = slots;
  c.warmup_slots = slots / 100;
  c.seed = 42;
  return c;
}

}  // namespace

TEST(Scripted, CollisionDeliversNothing) {
  Simulator sim(scripted(2, 1), 1);
  sim.disable_arrivals();
  sim.inject_arrival(0);
  sim.inject_arrival(1);
  for (int i = 0; i < 10; ++i) {
    sim.step();
    EXPECT_TRUE(sim.channel().is_free());
  }
  EXPECT_EQ(sim.metrics().total_departures, 0);
  EXPECT_EQ(sim.metrics().free_slot_attempts.count(2), 10u);
  EXPECT_EQ(sim.backlogged_count(), 2);
}

TEST(Scripted, LoneNodeServedInArrivalSlot) {
  Simulator sim(scripted(1, 1), 1);
  sim.disable_arrivals();
  sim.inject_arrival(0);
  sim.step();
  const auto& m = sim.metrics();
  ASSERT_EQ(m.waiting_times.size(), 1u);
  EXPECT_EQ(m.waiting_times[0], 0);
  EXPECT_TRUE(sim.channel().is_free());
  EXPECT_EQ(sim.backlogged_count(), 0);
}

TEST(Scripted, GateHoldsOnlyFirstMPackets) {
  // Four queued packets, M = 3: three go in one busy period, the fourth
  // and a packet arriving mid-period wait for the next capture.
  Simulator sim(scripted(1, 3), 1);
  sim.disable_arrivals();
  for (int i = 0; i < 4; ++i) sim.inject_arrival(0);
  sim.step();  // slot 0: capture, first transmission
  EXPECT_EQ(sim.channel().holder, 0);
  EXPECT_EQ(sim.channel().remaining_gated, 2);
  sim.inject_arrival(0);  // arrives in slot 1
  sim.step();
  EXPECT_EQ(sim.channel().remaining_gated, 1);
  EXPECT_EQ(sim.nodes()[0].gate_count, 1);
  sim.step();  // slot 2 ends the busy period
  EXPECT_TRUE(sim.channel().is_free());
  EXPECT_EQ(sim.nodes()[0].queue.size(), 2u);
  sim.step();  // slot 3: recapture with two packets
  EXPECT_EQ(sim.channel().remaining_gated, 1);
  sim.step();
  const auto& m = sim.metrics();
  EXPECT_EQ(m.waiting_times, (std::vector<std::int64_t>{0, 1, 2, 3, 3}));
  EXPECT_EQ(m.busy_lengths.count(3), 1u);
  EXPECT_EQ(m.busy_lengths.count(2), 1u);
  EXPECT_EQ(m.qk_samples.count(4), 1u);
  EXPECT_EQ(m.qk_samples.count(2), 1u);
}

TEST(Scripted, NoTransmissionWithEmptyQueues) {
  Simulator sim(scripted(5, 2), 3);
  sim.disable_arrivals();
  for (int i = 0; i < 20; ++i) sim.step();
  EXPECT_EQ(sim.metrics().total_departures, 0);
  EXPECT_EQ(sim.metrics().free_slot_attempts.count(0), 20u);
}

TEST(Invariants, Conservation) {
  for (auto M : {BatchSize(1), BatchSize(3), BatchSize::infinite()}) {
    const auto m = run(random_cfg(20, 0.3, 0.04, M, 200000));
    EXPECT_EQ(m.total_arrivals, m.total_departures + m.backlog_at_end);
    EXPECT_EQ(m.delivered, static_cast<std::int64_t>(m.waiting_times.size()));
    std::int64_t batches = 0;
    for (auto b : m.batch_delivered) batches += b;
    EXPECT_EQ(batches, m.delivered);
    EXPECT_TRUE(std::all_of(m.waiting_times.begin(), m.waiting_times.end(),
                            [](std::int64_t w) { return w >= 0; }));
  }
}

TEST(Invariants, BusyPeriodsRespectBatchSize) {
  const auto m = run(random_cfg(20, 0.4, 0.05, BatchSize(4), 200000));
  EXPECT_EQ(m.busy_lengths.count(0), 0u);
  EXPECT_LE(m.busy_lengths.support_end(), 5);
  EXPECT_EQ(m.qk_samples.count(0), 0u);
}

TEST(Invariants, DeterministicPerSeed) {
  auto c = random_cfg(20, 0.3, 0.05, BatchSize(2), 100000);
  EXPECT_EQ(run(c), run(c));
  auto d = c;
  d.seed = 43;
  EXPECT_NE(run(c).waiting_times, run(d).waiting_times);
  c.replications = 4;
  EXPECT_EQ(replicate(c, 1), replicate(c, 4));
  const auto reps = replicate(c);
  EXPECT_NE(reps[0].waiting_times, reps[1].waiting_times);
  EXPECT_EQ(reps[2], run_replication(c, 2));
}

TEST(Invariants, SaturatedBusyLengthIsM) {
  SimConfig c = random_cfg(30, 0.3, 0.03, BatchSize(5), 100000);
  c.saturated = true;
  const auto m = run(c);
  EXPECT_EQ(m.busy_lengths.count(5), m.busy_lengths.total());
  EXPECT_TRUE(m.waiting_times.empty());
  // Every node stays backlogged: attempts are Binomial(30, r) in free slots.
  EXPECT_NEAR(m.free_slot_attempts.mean(), 30 * 0.03, 0.02);
}

TEST(Invariants, SaturatedMatchesFiniteNThroughput) {
  for (std::int64_t M : {1, 3}) {
    SimConfig c = random_cfg(30, 0.3, 0.05, BatchSize(M), 1000000);
    c.saturated = true;
    EXPECT_NEAR(run_saturated(c), saturated_throughput_finite_n(c.params), 0.005);
  }
}

TEST(Invariants, AttemptRateMatchesFixedPoint) {
  const auto c = random_cfg(30, 0.3, 0.03, BatchSize(2), 3000000);
  const auto m = run(c);
  const double g = solve_attempt_rate(c.params, {true}).g;
  EXPECT_NEAR(m.free_slot_attempts.mean(), g, 0.05 * g);
}

TEST(Invariants, ThroughputEqualsLoadWhenStable) {
  const auto c = random_cfg(30, 0.3, 0.03, BatchSize(2), 1000000);
  const auto m = run(c);
  EXPECT_NEAR(double(m.delivered) / double(m.elapsed_slots), 0.3, 0.01);
}

TEST(Validation, RejectsBadConfigs) {
  SimConfig c = random_cfg(20, 0.3, 0.05, BatchSize(2), 1000);
  c.warmup_slots = 1000;
  EXPECT_THROW(c.validate(), ParamError);
  c = random_cfg(20, 0.3, 0.05, BatchSize::infinite(), 1000);
  c.saturated = true;
  EXPECT_THROW(run(c), ParamError);
  c = random_cfg(20, 0.3, 0.0, BatchSize(1), 1000);
  EXPECT_THROW(run(c), ParamError);
  c = random_cfg(20, 0.3, 0.05, BatchSize(1), 1000);
  c.replications = 0;
  EXPECT_THROW(replicate(c), ParamError);
  EXPECT_THROW(run_saturated(random_cfg(20, 0.3, 0.05, BatchSize(1), 1000)), ParamError);
}

TEST(Rng, ReplicationSeedsDiffer) {
  EXPECT_NE(replication_seed(1, 0), replication_seed(1, 1));
  EXPECT_NE(replication_seed(1, 0), replication_seed(2, 0));
  Xoshiro256ss a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  Xoshiro256ss u(9);
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform();
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
    s += x;
  }
  EXPECT_NEAR(s / 100000, 0.5, 0.005);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(u.below(7), 7u);
}

TEST(Rng, GeometricMean) {
  Xoshiro256ss g(3);
  const double p = 0.01;
  double s = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) s += double(g.geometric_failures(std::log1p(-p)));
  EXPECT_NEAR(s / N, (1 - p) / p, 0.02 * (1 - p) / p);
}
