#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace bsaloha {

// Raised when a parameter tuple violates its range constraints.
class ParamError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// No attempt-rate root exists for the configuration (r outside the stable
// region or no sign change found while scanning).
class NoStableRoot : public std::runtime_error {
 public:
  NoStableRoot(const std::string& what, double lo, double hi)
      : std::runtime_error(what), lo_(lo), hi_(hi) {}
  double scan_lo() const { return lo_; }
  double scan_hi() const { return hi_; }

 private:
  double lo_;
  double hi_;
};

// The mean waiting time diverges for this configuration.
class UnboundedDelay : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maximum number of packets a node sends per channel capture.
/// Either a positive integer or unbounded (the whole queue snapshot).
class BatchSize {
 public:
  constexpr BatchSize() = default;
  constexpr explicit BatchSize(std::int64_t m) : m_(m) {
    if (m < 1) throw ParamError("batch size M must be >= 1");
  }
  static constexpr BatchSize infinite() {
    BatchSize b;
    b.m_ = kInfinite;
    return b;
  }

  constexpr bool is_infinite() const { return m_ == kInfinite; }
  // Only meaningful for finite batches.
  constexpr std::int64_t value() const { return m_; }
  // Finite value, or `cap` when unbounded.
  constexpr std::int64_t value_or(std::int64_t cap) const {
    return is_infinite() ? cap : m_;
  }
  double as_double() const {
    return is_infinite() ? std::numeric_limits<double>::infinity()
                         : static_cast<double>(m_);
  }
  std::string to_string() const {
    return is_infinite() ? std::string("inf") : std::to_string(m_);
  }

  friend constexpr bool operator==(BatchSize, BatchSize) = default;

 private:
  static constexpr std::int64_t kInfinite = -1;
  std::int64_t m_ = 1;
};

/// The model tuple (n, lambda_hat, r, M).
struct SystemParams {
  std::int64_t n = 1;
  double lambda_hat = 0.1;  // aggregate arrivals, packets/slot
  double r = 0.1;           // transmission probability
  BatchSize M{};

  // Per-node arrival probability per slot.
  double lambda() const { return lambda_hat / static_cast<double>(n); }
  double nr() const { return static_cast<double>(n) * r; }

  void validate() const {
    if (n < 1) throw ParamError("n must be >= 1, got " + std::to_string(n));
    if (!(lambda_hat > 0.0 && lambda_hat < 1.0)) {
      throw ParamError(
          "lambda_hat must lie in (0,1): per-node arrival probability per "
          "slot is lambda_hat/n, got " +
          std::to_string(lambda_hat));
    }
    if (!(r > 0.0 && r < 1.0)) {
      throw ParamError("r must lie in (0,1), got " + std::to_string(r));
    }
  }

  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

}  // namespace bsaloha
