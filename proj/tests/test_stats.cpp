#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bsaloha/stats.hpp"

using namespace bsaloha;

namespace {

RawMetrics with_waits(std::vector<std::int64_t> w) {
  RawMetrics m;
  m.waiting_times = std::move(w);
  m.delivered = static_cast<std::int64_t>(m.waiting_times.size());
  m.elapsed_slots = 1000;
  return m;
}

}  // namespace

TEST(StudentT, KnownQuantiles) {
  EXPECT_NEAR(student_t_975(1), 12.7062047, 1e-6);
  EXPECT_NEAR(student_t_975(19), 2.0930241, 1e-6);
  EXPECT_NEAR(student_t_975(1000000), 1.959964, 1e-5);
}

TEST(TInterval, ConstantSamplesHaveZeroWidth) {
  std::vector<double> xs(10, 3.5);
  const auto e = t_interval(xs, EstimateMethod::replication_means, 10);
  EXPECT_DOUBLE_EQ(e.mean, 3.5);
  EXPECT_DOUBLE_EQ(e.ci_half_width, 0.0);
}

TEST(TInterval, HandComputed) {
  std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const auto e = t_interval(xs, EstimateMethod::replication_means, 4);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  // sd = sqrt(5/3), t_{0.975,3} = 3.182446305
  EXPECT_NEAR(e.ci_half_width, 3.182446305 * std::sqrt(5.0 / 3.0) / 2.0, 1e-8);
}

TEST(TInterval, PermutationInvariant) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> d(10.0, 3.0);
  std::vector<double> xs(37);
  for (auto& x : xs) x = d(gen);
  const auto a = t_interval(xs, EstimateMethod::replication_means, 37);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(xs.begin(), xs.end(), gen);
    const auto b = t_interval(xs, EstimateMethod::replication_means, 37);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.ci_half_width, b.ci_half_width);
  }
}

TEST(TInterval, WidthShrinksAsInverseSqrt) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> d(0.0, 1.0);
  // Average width over many draws at R and 4R: ratio ~ 2 (times the t ratio).
  auto avg_width = [&](int R) {
    double s = 0.0;
    for (int k = 0; k < 400; ++k) {
      std::vector<double> xs(static_cast<std::size_t>(R));
      for (auto& x : xs) x = d(gen);
      s += t_interval(xs, EstimateMethod::replication_means, R).ci_half_width;
    }
    return s / 400.0;
  };
  const double w16 = avg_width(16), w64 = avg_width(64);
  const double expected = 2.0 * student_t_975(15) / student_t_975(63);
  EXPECT_NEAR(w16 / w64, expected, 0.1 * expected);
}

TEST(EstimateWaiting, ReplicationMeans) {
  std::vector<RawMetrics> runs;
  for (int r = 0; r < 3; ++r) runs.push_back(with_waits(std::vector<std::int64_t>(200, r + 1)));
  const auto e = estimate_waiting(runs);
  EXPECT_EQ(e.method, EstimateMethod::replication_means);
  EXPECT_DOUBLE_EQ(e.mean, 2.0);
  EXPECT_EQ(e.n_samples, 600);
  EXPECT_NEAR(e.ci_half_width, student_t_975(2) * 1.0 / std::sqrt(3.0), 1e-12);
}

TEST(EstimateWaiting, BatchMeansForSingleReplication) {
  std::vector<std::int64_t> w(2000);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<std::int64_t>(i % 7);
  std::vector<RawMetrics> runs{with_waits(w)};
  const auto e = estimate_waiting(runs);
  EXPECT_EQ(e.method, EstimateMethod::batch_means);
  EXPECT_NEAR(e.mean, 2.997, 1e-3);
  EXPECT_GT(e.ci_half_width, 0.0);
}

TEST(EstimateWaiting, TooFewSamples) {
  std::vector<RawMetrics> runs{with_waits(std::vector<std::int64_t>(99, 1))};
  EXPECT_THROW(estimate_waiting(runs), InsufficientSamples);
  EXPECT_THROW(estimate_waiting(std::span<const RawMetrics>{}), InsufficientSamples);
}

TEST(EstimateThroughput, SingleRunUsesWindowMean) {
  RawMetrics m;
  m.elapsed_slots = 1000;
  m.delivered = 300;
  m.batch_delivered.assign(kThroughputBatches, 15);
  std::vector<RawMetrics> runs{m};
  const auto e = estimate_throughput(runs);
  EXPECT_DOUBLE_EQ(e.mean, 0.3);
  EXPECT_DOUBLE_EQ(e.ci_half_width, 0.0);
}

TEST(CompareQk, ExactGeometricHasTinyDistance) {
  const double alpha = 0.4;
  Histogram h;
  for (std::int64_t k = 1; k < 60; ++k) {
    h.add(k, static_cast<std::uint64_t>(std::llround(1e9 * alpha * std::pow(1 - alpha, k - 1))));
  }
  const auto c = compare_qk(h, alpha);
  EXPECT_LT(c.tv_distance, 1e-8);
  EXPECT_GE(c.support_checked, 40);
}

TEST(CompareQk, PointMassDistance) {
  // All mass at k = 1: TV = 1 - alpha.
  Histogram h;
  h.add(1, 1000);
  EXPECT_NEAR(compare_qk(h, 0.25).tv_distance, 0.75, 1e-9);
  Histogram far;
  far.add(500, 10);
  EXPECT_NEAR(compare_qk(far, 0.5).tv_distance, 1.0, 1e-9);
}

TEST(CompareQk, Errors) {
  EXPECT_THROW(compare_qk(Histogram{}, 0.3), EmptyHistogram);
  Histogram h;
  h.add(1);
  EXPECT_THROW(compare_qk(h, 0.0), std::domain_error);
}
