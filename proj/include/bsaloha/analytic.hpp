#pragma once

// Closed-form and fixed-point performance model of batch-service slotted
// Aloha: saturated throughput, stable region, attempt rate, queue laws at
// busy-period boundaries, and mean packet waiting time.
//
// All results except the *_finite_n variants use the Poisson approximation
// of the per-slot attempt count (large n).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bsaloha/lambert_w.hpp"
#include "bsaloha/params.hpp"

namespace bsaloha {

inline constexpr double kEuler = 2.718281828459045;

// ---------------------------------------------------------------------------
// Throughput and stable region

/// Channel throughput when every node always has packets (attempt rate nr).
inline double saturated_throughput(const SystemParams& p) {
  p.validate();
  if (p.M.is_infinite()) return 1.0;
  const double g = p.nr();
  const double overhead = (1.0 / (g * std::exp(-g)) - 1.0) / p.M.as_double();
  return 1.0 / (overhead + 1.0);
}

/// Same as saturated_throughput but with the exact binomial success
/// probability nr(1-r)^{n-1} of n saturated nodes.
inline double saturated_throughput_finite_n(const SystemParams& p) {
  p.validate();
  if (p.M.is_infinite()) return 1.0;
  const double n = static_cast<double>(p.n);
  const double success = n * p.r * std::pow(1.0 - p.r, n - 1.0);
  const double overhead = (1.0 / success - 1.0) / p.M.as_double();
  return 1.0 / (overhead + 1.0);
}

/// Carried traffic: the offered load, capped by the saturated throughput.
inline double throughput(const SystemParams& p) {
  return std::min(p.lambda_hat, saturated_throughput(p));
}

/// Largest offered load a finite batch size M can carry, M/(M+e-1).
inline double max_stable_load(BatchSize M) {
  if (M.is_infinite()) return 1.0;
  const double m = M.as_double();
  return m / (m + kEuler - 1.0);
}

struct StableRegion {
  double lo = 0.0;
  double hi = 0.0;
  bool empty = true;
  bool whole_unit_interval = false;

  bool contains(double r) const {
    if (empty || !(r > 0.0 && r < 1.0)) return false;
    if (whole_unit_interval) return true;
    return r >= lo && r <= hi;
  }
};

/// Transmission probabilities r for which the offered load is carried:
/// (0,1) intersected with [-W0(a)/n, -W-1(a)/n], a = -lh/(M(1-lh)+lh).
inline StableRegion stable_region(std::int64_t n, double lambda_hat,
                                  BatchSize M) {
  if (n < 1) throw ParamError("n must be >= 1");
  if (!(lambda_hat > 0.0 && lambda_hat < 1.0)) {
    throw ParamError("lambda_hat must lie in (0,1)");
  }
  StableRegion s;
  if (M.is_infinite()) {
    s.lo = 0.0;
    s.hi = 1.0;
    s.empty = false;
    s.whole_unit_interval = true;
    return s;
  }
  if (lambda_hat > max_stable_load(M)) return s;

  const double m = M.as_double();
  const double arg = -lambda_hat / (m * (1.0 - lambda_hat) + lambda_hat);
  const double nd = static_cast<double>(n);
  s.lo = -lambert_w0(arg) / nd;
  s.hi = std::min(-lambert_wm1(arg) / nd, 1.0);
  s.empty = !(s.lo < 1.0);
  return s;
}

// ---------------------------------------------------------------------------
// Attempt rate

enum class RootChoice {
  smallest,  // low-backlog equilibrium
  largest,   // high-backlog equilibrium
};

struct SolveOptions {
  // Replace G e^{-G} by the binomial G (1 - G/n)^{n-1} in the fixed point.
  bool finite_n_correction = false;
  RootChoice root = RootChoice::smallest;
  int grid_points = 10000;
};

struct AttemptSolution {
  double g = 0.0;  // attempts per free slot
  double residual = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  std::vector<double> all_roots;
};

/// Probability that exactly one node attempts in a free slot.
inline double success_probability(double g, std::int64_t n, bool finite_n) {
  if (!finite_n) return g * std::exp(-g);
  const double nd = static_cast<double>(n);
  return g * std::pow(1.0 - g / nd, nd - 1.0);
}

/// sum_{j<M} x^j, the mean of min(Q, M) for geometric Q. `one_minus_x` is
/// passed separately so that x -> 1 loses no precision.
inline double truncated_geometric_sum(double x, double one_minus_x,
                                      BatchSize M) {
  if (M.is_infinite()) return 1.0 / one_minus_x;
  const std::int64_t m = M.value();
  if (m <= 64) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < m; ++j) acc = acc * x + 1.0;
    return acc;
  }
  if (one_minus_x <= 0.0) return static_cast<double>(m);
  return -std::expm1(static_cast<double>(m) * std::log1p(-one_minus_x)) /
         one_minus_x;
}

/// Mean busy period (slots) implied by carrying lambda_hat at attempt rate g.
inline double mean_busy_from_load(double lambda_hat, double success) {
  if (!(success > 0.0)) {
    throw std::domain_error("mean busy period: success probability is zero");
  }
  return lambda_hat / (1.0 - lambda_hat) * (1.0 / success - 1.0);
}

inline double mean_busy_period(double lambda_hat, double g) {
  if (!(g > 0.0) || !(lambda_hat > 0.0 && lambda_hat < 1.0)) {
    throw std::domain_error("mean_busy_period: need g > 0, 0 < lambda_hat < 1");
  }
  return mean_busy_from_load(lambda_hat, g * std::exp(-g));
}

/// Residual of the attempt-rate fixed point at g:
///   sum_{j<M} (g/nr)^j - lh/(1-lh) (1/s(g) - 1).
inline double attempt_rate_residual(const SystemParams& p, double g,
                                    bool finite_n_correction = false) {
  const double nr = p.nr();
  const double lhs = truncated_geometric_sum(g / nr, (nr - g) / nr, p.M);
  const double rhs = mean_busy_from_load(
      p.lambda_hat, success_probability(g, p.n, finite_n_correction));
  return lhs - rhs;
}

namespace detail {

inline double bisect_root(const SystemParams& p, bool corrected, double lo,
                          double hi, double flo) {
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = attempt_rate_residual(p, mid, corrected);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  const double flo_abs = std::abs(attempt_rate_residual(p, lo, corrected));
  const double fhi_abs = std::abs(attempt_rate_residual(p, hi, corrected));
  return flo_abs <= fhi_abs ? lo : hi;
}

}  // namespace detail

/// Solve the attempt-rate fixed point on (0, nr). Scans a log-spaced grid
/// for sign changes, bisects every bracket and returns the root selected by
/// `opts.root` (smallest by default); every located root is reported.
inline AttemptSolution solve_attempt_rate(const SystemParams& p,
                                          const SolveOptions& opts = {}) {
  p.validate();
  const double nr = p.nr();
  const double scan_lo = nr * 1e-9;
  const double scan_hi = nr * (1.0 - 1e-12);

  if (!p.M.is_infinite()) {
    const StableRegion region = stable_region(p.n, p.lambda_hat, p.M);
    if (!region.contains(p.r)) {
      throw NoStableRoot("r = " + std::to_string(p.r) +
                             " lies outside the stable region",
                         scan_lo, scan_hi);
    }
  }

  const bool corrected = opts.finite_n_correction;
  const int points = std::max(opts.grid_points, 2);
  const double log_lo = std::log(scan_lo);
  const double step = (std::log(scan_hi) - log_lo) / (points - 1);

  AttemptSolution sol;
  std::vector<std::pair<double, double>> brackets;
  double g_prev = scan_lo;
  double f_prev = attempt_rate_residual(p, g_prev, corrected);
  for (int i = 1; i < points; ++i) {
    const double g =
        i == points - 1 ? scan_hi : std::exp(log_lo + step * static_cast<double>(i));
    const double f = attempt_rate_residual(p, g, corrected);
    if (f_prev == 0.0) {
      sol.all_roots.push_back(g_prev);
      brackets.emplace_back(g_prev, g_prev);
    } else if ((f_prev < 0.0) != (f < 0.0) && f != 0.0) {
      sol.all_roots.push_back(detail::bisect_root(p, corrected, g_prev, g, f_prev));
      brackets.emplace_back(g_prev, g);
    }
    g_prev = g;
    f_prev = f;
  }
  if (f_prev == 0.0) {
    sol.all_roots.push_back(g_prev);
    brackets.emplace_back(g_prev, g_prev);
  }

  if (sol.all_roots.empty()) {
    throw NoStableRoot("no sign change of the attempt-rate fixed point in (" +
                           std::to_string(scan_lo) + ", " +
                           std::to_string(scan_hi) + ")",
                       scan_lo, scan_hi);
  }
  const std::size_t pick =
      opts.root == RootChoice::smallest ? 0 : sol.all_roots.size() - 1;
  sol.g = sol.all_roots[pick];
  sol.bracket_lo = brackets[pick].first;
  sol.bracket_hi = brackets[pick].second;
  sol.residual = attempt_rate_residual(p, sol.g, corrected);
  return sol;
}

// ---------------------------------------------------------------------------
// Queue laws

/// E[min(Q,M)(min(Q,M)-1)] for Q geometric on {1,2,...} with P(Q >= k) =
/// x^{k-1}: the direct series plus the closed-form tail M(M-1) x^{M-1}.
inline double busy_second_factorial_moment(double x, BatchSize M) {
  const double alpha = 1.0 - x;
  if (M.is_infinite()) return 2.0 * x / (alpha * alpha);
  const std::int64_t m = M.value();
  double acc = 0.0;
  double xpow = 1.0;  // x^{k-1}
  const double peak = alpha > 0.0 ? 1.0 / alpha : std::numeric_limits<double>::infinity();
  for (std::int64_t k = 1; k < m; ++k) {
    const double kd = static_cast<double>(k);
    const double term = kd * (kd - 1.0) * alpha * xpow;
    acc += term;
    if (kd > peak + 2.0 && term <= acc * 1e-18) {
      xpow = 0.0;
      break;
    }
    xpow *= x;
  }
  const double md = static_cast<double>(m);
  const double tail = md * (md - 1.0) * std::pow(x, md - 1.0);
  return acc + tail;
}

struct QueueLaws {
  double alpha = 0.0;      // q_k = alpha (1-alpha)^{k-1}
  double p0 = 0.0;         // empty buffer after a busy period, large-n form
  double p0_exact = 0.0;   // same, keeping the (1 - lambda) factors
  double beta = 0.0;       // geometric parameter of arrivals in a vacation
  double mean_busy = 0.0;  // slots
  double busy_factorial2 = 0.0;
  double y1_mean = 0.0;  // vacation starting with a backlog, slots
  double y0_mean = 0.0;  // vacation starting empty, slots
  double g1 = 0.0;       // success probability of a free slot
  double l0 = 0.0;       // no arrival during a busy period

  double qk(std::int64_t k) const {
    if (k < 1) return 0.0;
    return alpha * std::pow(1.0 - alpha, static_cast<double>(k - 1));
  }
};

/// Steady-state laws of one node given the attempt rate g (0 < g < nr).
inline QueueLaws queue_laws(const SystemParams& p, double g) {
  p.validate();
  const double nr = p.nr();
  if (!(g > 0.0 && g < nr)) {
    throw std::domain_error("queue_laws: attempt rate must lie in (0, nr)");
  }
  const double lambda = p.lambda();
  const double lh = p.lambda_hat;
  const double x = g / nr;
  const double eg = std::exp(-g);

  QueueLaws q;
  q.alpha = (nr - g) / nr;
  q.g1 = g * eg;

  const double y = (1.0 - lambda) * x;  // (1-lambda)(1-alpha)
  if (p.M.is_infinite()) {
    q.p0 = 1.0;
    q.p0_exact = (1.0 - lambda) * q.alpha / (1.0 - y);
    q.l0 = q.p0_exact;
  } else {
    const double m = p.M.as_double();
    q.p0 = 1.0 - std::pow(x, m);
    q.p0_exact = (1.0 - lambda) * q.alpha * (1.0 - std::pow(y, m)) / (1.0 - y);
    // B(1-lambda) with b_j = q_j (j < M), b_M = x^{M-1}
    q.l0 = (1.0 - lambda) * q.alpha * (1.0 - std::pow(y, m - 1.0)) / (1.0 - y) +
           (1.0 - lambda) * std::pow(y, m - 1.0);
  }

  q.mean_busy = p.M == BatchSize(1) ? 1.0 : mean_busy_from_load(lh, q.g1);
  q.busy_factorial2 = busy_second_factorial_moment(x, p.M);

  const double reg = p.r * eg;
  const double backlog_term = (1.0 - lh) * (1.0 - reg) + (1.0 - p.r) * (lh - q.g1);
  q.beta = (1.0 - lh) * reg / ((1.0 - lh) * reg + lambda * backlog_term);
  q.y1_mean = backlog_term / ((1.0 - lh) * reg);
  q.y0_mean = 1.0 / lambda + q.y1_mean;
  return q;
}

// ---------------------------------------------------------------------------
// Mean waiting time

struct WaitingDecomposition {
  double residual_vacation = 0.0;  // R, slots
  double queue_component = 0.0;    // N = lambda W
  double complete_vacations = 0.0; // H = E * Y1
  double expected_vacation_count = 0.0;
  double prob_xi0 = 0.0;
  double prob_xi1 = 0.0;
  double total_wait = 0.0;
  double attempt_rate = 0.0;
};

/// Mean waiting time W = R + N + H in its large-n closed form. For M = inf
/// the batch terms vanish and W = Y1 / (1 - lambda).
inline WaitingDecomposition mean_waiting_time(const SystemParams& p,
                                              const SolveOptions& opts = {}) {
  p.validate();
  if (!p.M.is_infinite() &&
      !stable_region(p.n, p.lambda_hat, p.M).contains(p.r)) {
    throw UnboundedDelay("r lies outside the stable region");
  }
  AttemptSolution sol;
  try {
    sol = solve_attempt_rate(p, opts);
  } catch (const NoStableRoot& e) {
    throw UnboundedDelay(e.what());
  }
  if (!(sol.g < p.nr())) throw UnboundedDelay("attempt rate saturates at nr");

  const QueueLaws q = queue_laws(p, sol.g);
  const double lambda = p.lambda();
  const double m = p.M.as_double();

  // Both batch terms are O(1/M).
  const double batch_corr =
      p.M.is_infinite() ? 0.0
                        : (1.0 + lambda) * q.busy_factorial2 / (2.0 * m * q.mean_busy);
  const double den =
      1.0 - lambda - (p.M.is_infinite() ? 0.0 : lambda * q.y1_mean / m);
  if (!(den > 0.0)) {
    throw UnboundedDelay("mean waiting time diverges (1 - lambda - lambda Y1/M <= 0)");
  }

  WaitingDecomposition w;
  w.attempt_rate = sol.g;
  w.total_wait = q.y1_mean * (1.0 - batch_corr) / den;
  w.residual_vacation = (1.0 - lambda) * q.y1_mean;
  w.queue_component = lambda * w.total_wait;
  w.expected_vacation_count =
      lambda + (p.M.is_infinite() ? 0.0 : lambda * w.total_wait / m) - batch_corr;
  w.complete_vacations = w.expected_vacation_count * q.y1_mean;

  const double u1 = lambda * q.y1_mean;
  const double u0 = 1.0 + u1;
  const double mix = q.p0 * u0 + (1.0 - q.p0) * u1;
  w.prob_xi0 = q.p0 * u0 / mix * (1.0 - lambda);
  w.prob_xi1 = (1.0 - q.p0) * u1 / mix * (1.0 - lambda);
  return w;
}

/// Classical slotted Aloha (M = 1):
///   W = (1 - r e^{W0(-lh)}) / (r e^{W0(-lh)} - lambda)
/// bounded for r in (-W0(-lh)/n, -W-1(-lh)/n].
inline double mean_waiting_time_classical(const SystemParams& p) {
  p.validate();
  if (p.M != BatchSize(1)) {
    throw ParamError("mean_waiting_time_classical requires M = 1");
  }
  if (p.lambda_hat > 1.0 / kEuler) {
    throw UnboundedDelay("lambda_hat exceeds 1/e");
  }
  const double w0 = lambert_w0(-p.lambda_hat);
  const double nd = static_cast<double>(p.n);
  const double lo = -w0 / nd;
  const double hi = -lambert_wm1(-p.lambda_hat) / nd;
  if (!(p.r > lo && p.r <= hi)) {
    throw UnboundedDelay("r lies outside the bounded delay region");
  }
  const double rew = p.r * std::exp(w0);
  const double den = rew - p.lambda();
  if (!(den > 0.0)) throw UnboundedDelay("denominator r e^{W0} - lambda <= 0");
  return (1.0 - rew) / den;
}

/// Unbounded batch (M = inf):
///   W = (lh / s(G) - 1) / (lambda (1 - lambda) (1 - lh))
/// with s(G) = G e^{-G}, or G (1 - G/n)^{n-1} when `finite_n_correction`
/// (the fixed point for G is then solved with the same substitution).
inline double mean_waiting_time_batch_inf(const SystemParams& p,
                                          bool finite_n_correction,
                                          RootChoice root = RootChoice::smallest) {
  p.validate();
  if (!p.M.is_infinite()) {
    throw ParamError("mean_waiting_time_batch_inf requires M = inf");
  }
  SolveOptions opts;
  opts.finite_n_correction = finite_n_correction;
  opts.root = root;
  const AttemptSolution sol = solve_attempt_rate(p, opts);
  const double lambda = p.lambda();
  const double s = success_probability(sol.g, p.n, finite_n_correction);
  return (p.lambda_hat / s - 1.0) /
         (lambda * (1.0 - lambda) * (1.0 - p.lambda_hat));
}

}  // namespace bsaloha
