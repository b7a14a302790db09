#pragma once

// Real branches of the Lambert W function, W(x) e^{W(x)} = x.
//
// Both branches start from a series (near the branch point -1/e) or an
// asymptotic guess, then refine with Halley steps that are kept inside a
// bracket; a step leaving the bracket is replaced by bisection.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bsaloha {

enum class WBranch { principal, lower };

namespace detail {

// 1/e split into a double and its rounding error.
inline constexpr double kInvEHi = 0.36787944117144233;
inline constexpr double kInvELo = -1.2428753672788363e-17;
inline constexpr double kE = 2.718281828459045;

// Arguments within this distance of -1/e are clamped onto the branch point.
inline constexpr double kBranchClamp = 1e-15;

// x + 1/e with the extra bits of 1/e folded in.
inline double offset_from_branch(double x) { return (x + kInvEHi) + kInvELo; }

// W around the branch point in powers of p = +-sqrt(2(e x + 1)).
inline double branch_series(double p) {
  return -1.0 +
         p * (1.0 +
              p * (-1.0 / 3.0 +
                   p * (11.0 / 72.0 +
                        p * (-43.0 / 540.0 +
                             p * (769.0 / 17280.0 + p * (-221.0 / 8505.0))))));
}

// Halley iteration on f(w) = w e^w - x, safeguarded by [lo, hi].
// `increasing` is the sign of f' on the bracket.
inline double halley_bracketed(double x, double w, double lo, double hi,
                               bool increasing) {
  constexpr int kMaxIter = 100;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  for (int it = 0; it < kMaxIter; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    if (f == 0.0) return w;
    if ((f < 0.0) == increasing) {
      lo = w;
    } else {
      hi = w;
    }
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    double next = w - f / denom;
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      next = 0.5 * (lo + hi);
    }
    if (std::abs(next - w) <= 4.0 * kEps * std::max(1.0, std::abs(w))) {
      return next;
    }
    w = next;
  }
  return w;
}

inline void check_branch_domain(double d, const char* fn, double x) {
  if (d < -kBranchClamp) {
    throw std::domain_error(std::string(fn) + ": argument " +
                            std::to_string(x) + " is below -1/e");
  }
}

}  // namespace detail

/// Principal branch W0 on [-1/e, inf); returns w >= -1.
inline double lambert_w0(double x) {
  if (std::isnan(x)) return x;
  const double d = detail::offset_from_branch(x);
  detail::check_branch_domain(d, "lambert_w0", x);
  if (std::abs(d) <= detail::kBranchClamp) return -1.0;
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;

  double w;
  if (x < -0.3) {
    w = detail::branch_series(std::sqrt(2.0 * detail::kE * d));
  } else if (x < 3.0) {
    const double l = std::log1p(x);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  } else {
    const double l1 = std::log(x);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }
  const double lo = x < 0.0 ? -1.0 : 0.0;
  const double hi = x < 0.0 ? 0.0 : std::max(x, 1.0);
  if (w <= lo || w >= hi) w = 0.5 * (lo + hi);
  return detail::halley_bracketed(x, w, lo, hi, /*increasing=*/true);
}

/// Lower branch W-1 on [-1/e, 0); returns w <= -1.
inline double lambert_wm1(double x) {
  if (std::isnan(x)) return x;
  if (x >= 0.0) {
    throw std::domain_error("lambert_wm1: argument " + std::to_string(x) +
                            " must be negative");
  }
  const double d = detail::offset_from_branch(x);
  detail::check_branch_domain(d, "lambert_wm1", x);
  if (std::abs(d) <= detail::kBranchClamp) return -1.0;

  double w;
  if (x < -0.25) {
    w = detail::branch_series(-std::sqrt(2.0 * detail::kE * d));
  } else {
    const double l1 = std::log(-x);
    const double l2 = std::log(-l1);
    w = l1 - l2 + l2 / l1;
  }
  // w e^w decreases on (-inf, -1]; push lo left until it sits past the root.
  double lo = -2.0;
  while (lo * std::exp(lo) - x <= 0.0) lo *= 2.0;
  const double hi = -1.0;
  if (w <= lo || w >= hi) w = 0.5 * (lo + hi);
  return detail::halley_bracketed(x, w, lo, hi, /*increasing=*/false);
}

inline double lambert_w(double x, WBranch branch) {
  return branch == WBranch::principal ? lambert_w0(x) : lambert_wm1(x);
}

}  // namespace bsaloha
