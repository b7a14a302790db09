#pragma once

// Point estimates with 95% Student-t confidence intervals, and
// queue-start distribution comparisons, over simulator output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "bsaloha/analytic.hpp"
#include "bsaloha/sim.hpp"

namespace bsaloha {

class InsufficientSamples : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyHistogram : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EstimateMethod { batch_means, replication_means };

struct Estimate {
  double mean = 0.0;
  double ci_half_width = 0.0;  // 95%
  std::int64_t n_samples = 0;
  EstimateMethod method = EstimateMethod::replication_means;
};

inline constexpr int kWaitingBatches = 20;
inline constexpr std::size_t kMinWaitingSamples = 100;

/// 97.5% quantile of Student's t with `dof` degrees of freedom.
inline double student_t_975(std::int64_t dof) {
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

/// Mean and 95% CI of independent, identically distributed observations.
inline Estimate t_interval(std::span<const double> xs, EstimateMethod method,
                           std::int64_t n_samples) {
  if (xs.empty()) throw InsufficientSamples("no observations");
  Estimate e;
  e.method = method;
  e.n_samples = n_samples;
  // Sorted summation keeps the result independent of input order.
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const double k = static_cast<double>(sorted.size());
  e.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / k;
  if (sorted.size() < 2 || sorted.front() == sorted.back()) return e;
  double ss = 0.0;
  for (double x : sorted) ss += (x - e.mean) * (x - e.mean);
  const double sd = std::sqrt(ss / (k - 1.0));
  e.ci_half_width =
      student_t_975(static_cast<std::int64_t>(sorted.size()) - 1) * sd / std::sqrt(k);
  return e;
}

namespace detail {

inline double mean_of(std::span<const std::int64_t> xs) {
  long double s = 0.0L;
  for (auto x : xs) s += static_cast<long double>(x);
  return static_cast<double>(s / static_cast<long double>(xs.size()));
}

}  // namespace detail

/// Mean waiting time. Replication means across >= 2 replications; a single
/// replication falls back to 20 contiguous batch means.
inline Estimate estimate_waiting(std::span<const RawMetrics> runs) {
  if (runs.empty()) throw InsufficientSamples("no replications");
  std::int64_t total = 0;
  for (const auto& m : runs) {
    if (m.waiting_times.size() < kMinWaitingSamples) {
      throw InsufficientSamples("a replication has fewer than 100 post-warmup waiting samples");
    }
    total += static_cast<std::int64_t>(m.waiting_times.size());
  }

  std::vector<double> means;
  if (runs.size() >= 2) {
    for (const auto& m : runs) means.push_back(detail::mean_of(m.waiting_times));
    return t_interval(means, EstimateMethod::replication_means, total);
  }
  const auto& w = runs.front().waiting_times;
  const std::size_t per = w.size() / kWaitingBatches;
  for (int b = 0; b < kWaitingBatches; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * per;
    const std::size_t end = b == kWaitingBatches - 1 ? w.size() : begin + per;
    means.push_back(detail::mean_of(std::span(w).subspan(begin, end - begin)));
  }
  return t_interval(means, EstimateMethod::batch_means, total);
}

/// Delivered packets per slot, pooled the same way as estimate_waiting.
inline Estimate estimate_throughput(std::span<const RawMetrics> runs) {
  if (runs.empty()) throw InsufficientSamples("no replications");
  std::int64_t slots = 0;
  for (const auto& m : runs) slots += m.elapsed_slots;

  std::vector<double> rates;
  if (runs.size() >= 2) {
    for (const auto& m : runs) {
      rates.push_back(static_cast<double>(m.delivered) / static_cast<double>(m.elapsed_slots));
    }
    return t_interval(rates, EstimateMethod::replication_means, slots);
  }
  const auto& m = runs.front();
  const auto nb = static_cast<std::int64_t>(m.batch_delivered.size());
  for (std::int64_t b = 0; b < nb; ++b) {
    // Batch b spans slots [b*E/nb, (b+1)*E/nb) of the measured window.
    const std::int64_t len = (b + 1) * m.elapsed_slots / nb - b * m.elapsed_slots / nb;
    if (len > 0) {
      rates.push_back(static_cast<double>(m.batch_delivered[static_cast<std::size_t>(b)]) /
                      static_cast<double>(len));
    }
  }
  Estimate e = t_interval(rates, EstimateMethod::batch_means, slots);
  // Point estimate from the whole window; batches only size the interval.
  e.mean = static_cast<double>(m.delivered) / static_cast<double>(m.elapsed_slots);
  return e;
}

struct DistributionComparison {
  std::vector<double> empirical;  // index k = queue length k (k >= 1)
  std::vector<double> reference;
  double tv_distance = 0.0;
  std::int64_t support_checked = 0;
};

/// Total variation distance between the empirical queue length at busy
/// period starts and the geometric law q_k = alpha (1-alpha)^{k-1}.
/// Reference mass beyond the compared support is added as one lump.
inline DistributionComparison compare_qk(const Histogram& samples, double alpha) {
  if (samples.total() == 0) throw EmptyHistogram("no queue-length samples");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("alpha must lie in (0,1]");

  // Smallest K with reference tail (1-alpha)^K < 1e-9.
  const double x = 1.0 - alpha;
  std::int64_t k_ref = 1;
  if (x > 0.0) k_ref = static_cast<std::int64_t>(std::ceil(std::log(1e-9) / std::log(x)));
  const std::int64_t kmax = std::max<std::int64_t>({k_ref, samples.support_end() - 1, 1});

  DistributionComparison c;
  c.support_checked = kmax;
  c.empirical.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
  c.reference.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
  const double total = static_cast<double>(samples.total());
  double diff = 0.0;
  double xpow = 1.0;
  for (std::int64_t k = 1; k <= kmax; ++k) {
    const double e = static_cast<double>(samples.count(k)) / total;
    const double r = alpha * xpow;
    c.empirical[static_cast<std::size_t>(k)] = e;
    c.reference[static_cast<std::size_t>(k)] = r;
    diff += std::abs(e - r);
    xpow *= x;
  }
  // Empirical mass at k = 0 (never produced by the simulator) and the
  // reference tail beyond kmax.
  diff += static_cast<double>(samples.count(0)) / total;
  diff += xpow;
  c.tv_distance = std::clamp(0.5 * diff, 0.0, 1.0);
  return c;
}

inline DistributionComparison compare_qk(std::span<const RawMetrics> runs, const QueueLaws& laws) {
  Histogram pooled;
  for (const auto& m : runs) pooled.merge(m.qk_samples);
  return compare_qk(pooled, laws.alpha);
}

}  // namespace bsaloha
