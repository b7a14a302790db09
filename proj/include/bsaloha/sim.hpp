#pragma once

// Slot-level simulator of batch-service slotted Aloha.
//
// Slot order:
//   1. every node receives a packet with probability lambda;
//   2. on a free channel every backlogged node attempts with probability r;
//      a lone attempt gates K = min(queue, M) packets and captures the
//      channel, sending the first gated packet in this same slot;
//   3. the holder sends one gated packet per slot and frees the channel at
//      the end of the slot carrying its last gated packet.
// Waiting time of a packet = departure slot - arrival slot.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bsaloha/params.hpp"
#include "bsaloha/rng.hpp"

namespace bsaloha {

struct SimConfig {
  SystemParams params;
  std::int64_t total_slots = 1'000'000;
  std::int64_t warmup_slots = 10'000;
  std::uint64_t seed = 1;
  bool saturated = false;  // queues never empty, no arrivals
  int replications = 1;

  void validate() const {
    const auto& p = params;
    if (p.n < 1) throw ParamError("n must be >= 1");
    if (!saturated && !(p.lambda_hat > 0.0 && p.lambda_hat < 1.0)) {
      throw ParamError("lambda_hat must lie in (0,1)");
    }
    if (!(p.r > 0.0 && p.r <= 1.0)) throw ParamError("r must lie in (0,1]");
    if (total_slots < 1) throw ParamError("total_slots must be >= 1");
    if (warmup_slots < 0 || warmup_slots >= total_slots) {
      throw ParamError("warmup_slots must lie in [0, total_slots)");
    }
    if (replications < 1) throw ParamError("replications must be >= 1");
    if (saturated && p.M.is_infinite()) {
      throw ParamError(
          "saturated simulation with M = inf never releases the channel; "
          "use a finite proxy M (analytic saturated throughput is 1)");
    }
  }
};

/// Counts indexed by a non-negative integer value.
class Histogram {
 public:
  void add(std::int64_t value, std::uint64_t count = 1) {
    if (value < 0) throw std::out_of_range("histogram value must be >= 0");
    const auto i = static_cast<std::size_t>(value);
    if (i >= counts_.size()) counts_.resize(i + 1, 0);
    counts_[i] += count;
    total_ += count;
  }
  void merge(const Histogram& other) {
    for (std::size_t i = 0; i < other.counts_.size(); ++i) {
      if (other.counts_[i] != 0) add(static_cast<std::int64_t>(i), other.counts_[i]);
    }
  }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::int64_t value) const {
    const auto i = static_cast<std::size_t>(value);
    return value >= 0 && i < counts_.size() ? counts_[i] : 0;
  }
  // One past the largest recorded value.
  std::int64_t support_end() const { return static_cast<std::int64_t>(counts_.size()); }
  double mean() const {
    if (total_ == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      s += static_cast<double>(i) * static_cast<double>(counts_[i]);
    }
    return s / static_cast<double>(total_);
  }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  friend bool operator==(const Histogram&, const Histogram&) = default;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

inline constexpr int kThroughputBatches = 20;

/// Post-warmup observations of one replication.
struct RawMetrics {
  std::vector<std::int64_t> waiting_times;  // in departure order
  std::int64_t delivered = 0;
  std::int64_t elapsed_slots = 0;
  Histogram qk_samples;    // queue length at busy-period starts
  Histogram busy_lengths;  // gated packets per capture
  Histogram vacation_y0;   // vacations that began with an empty buffer
  Histogram vacation_y1;   // vacations that began with a backlog
  Histogram free_slot_attempts;
  std::vector<std::int64_t> batch_delivered =
      std::vector<std::int64_t>(kThroughputBatches, 0);

  // Whole-run counters, warmup included.
  std::int64_t total_arrivals = 0;
  std::int64_t total_departures = 0;
  std::int64_t backlog_at_end = 0;

  friend bool operator==(const RawMetrics&, const RawMetrics&) = default;
};

struct NodeState {
  std::deque<std::int64_t> queue;  // arrival slots, FIFO
  std::int64_t gate_count = 0;     // gated packets still to send
  std::int64_t vacation_start = -1;
  bool vacation_from_empty = false;

  bool backlogged() const { return !queue.empty(); }
};

struct ChannelState {
  static constexpr int kFree = -1;
  int holder = kFree;
  std::int64_t remaining_gated = 0;

  bool is_free() const { return holder == kFree; }
};

class Simulator {
 public:
  Simulator(const SimConfig& cfg, std::uint64_t stream_seed)
      : cfg_(cfg), rng_(stream_seed), nodes_(static_cast<std::size_t>(cfg.params.n)),
        backlog_pos_(nodes_.size(), -1) {
    cfg_.validate();
    const auto& p = cfg_.params;
    arrivals_ = !cfg_.saturated;
    m_cap_ = p.M.value_or(std::numeric_limits<std::int64_t>::max());
    metrics_.elapsed_slots = cfg_.total_slots - cfg_.warmup_slots;

    const double r = p.r;
    q_pow_.resize(nodes_.size() + 1);
    for (std::size_t k = 0; k < q_pow_.size(); ++k) {
      q_pow_[k] = std::pow(1.0 - r, static_cast<double>(k));
    }
    odds_ = r < 1.0 ? r / (1.0 - r) : 0.0;

    if (cfg_.saturated) {
      for (std::size_t i = 0; i < nodes_.size(); ++i) add_backlogged(static_cast<int>(i));
    } else {
      log1m_lambda_ = std::log1p(-p.lambda());
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        next_arrival_.emplace(rng_.geometric_failures(log1m_lambda_), static_cast<int>(i));
      }
    }
  }

  // Scripted traces: no random arrivals, packets only via inject_arrival().
  void disable_arrivals() {
    arrivals_ = false;
    next_arrival_ = {};
  }

  // Queue a packet at `node` arriving in the slot about to be simulated.
  void inject_arrival(int node) { enqueue(node, slot_); }

  void step() {
    const std::int64_t t = slot_;
    const bool measured = t >= cfg_.warmup_slots;

    if (arrivals_) {
      while (!next_arrival_.empty() && next_arrival_.top().first == t) {
        const int node = next_arrival_.top().second;
        next_arrival_.pop();
        enqueue(node, t);
        next_arrival_.emplace(t + 1 + rng_.geometric_failures(log1m_lambda_), node);
      }
    }

    if (channel_.is_free()) {
      const auto k = static_cast<std::int64_t>(backlog_.size());
      const std::int64_t attempts = draw_attempts(k);
      if (measured) metrics_.free_slot_attempts.add(attempts);
      if (attempts == 1) {
        const int winner = backlog_[rng_.below(static_cast<std::uint64_t>(k))];
        capture(winner, t, measured);
      }
    }

    if (!channel_.is_free()) transmit(t, measured);
    ++slot_;
  }

  void run_to_end() {
    while (slot_ < cfg_.total_slots) step();
  }

  RawMetrics finish() {
    metrics_.backlog_at_end = 0;
    if (!cfg_.saturated) {
      for (const auto& nd : nodes_) {
        metrics_.backlog_at_end += static_cast<std::int64_t>(nd.queue.size());
      }
    }
    return std::move(metrics_);
  }

  std::int64_t slot() const { return slot_; }
  const std::vector<NodeState>& nodes() const { return nodes_; }
  const ChannelState& channel() const { return channel_; }
  const RawMetrics& metrics() const { return metrics_; }
  std::int64_t backlogged_count() const { return static_cast<std::int64_t>(backlog_.size()); }

 private:
  void enqueue(int node, std::int64_t t) {
    auto& nd = nodes_[static_cast<std::size_t>(node)];
    nd.queue.push_back(t);
    ++metrics_.total_arrivals;
    if (nd.queue.size() == 1) add_backlogged(node);
  }

  // Binomial(k, r) by CDF inversion with one uniform.
  std::int64_t draw_attempts(std::int64_t k) {
    if (k == 0) return 0;
    if (odds_ == 0.0) return k;
    const double u = rng_.uniform();
    double pj = q_pow_[static_cast<std::size_t>(k)];
    double cdf = pj;
    std::int64_t j = 0;
    while (u >= cdf && j < k) {
      pj *= static_cast<double>(k - j) / static_cast<double>(j + 1) * odds_;
      ++j;
      cdf += pj;
    }
    return j;
  }

  void capture(int winner, std::int64_t t, bool measured) {
    auto& nd = nodes_[static_cast<std::size_t>(winner)];
    std::int64_t gated;
    if (cfg_.saturated) {
      gated = m_cap_;
    } else {
      const auto qlen = static_cast<std::int64_t>(nd.queue.size());
      gated = std::min(qlen, m_cap_);
      if (measured) metrics_.qk_samples.add(qlen);
    }
    if (measured) {
      metrics_.busy_lengths.add(gated);
      if (nd.vacation_start >= 0) {
        auto& h = nd.vacation_from_empty ? metrics_.vacation_y0 : metrics_.vacation_y1;
        h.add(t - nd.vacation_start);
      }
    }
    nd.gate_count = gated;
    channel_.holder = winner;
    channel_.remaining_gated = gated;
  }

  void transmit(std::int64_t t, bool measured) {
    const int h = channel_.holder;
    auto& nd = nodes_[static_cast<std::size_t>(h)];
    if (!cfg_.saturated) {
      const std::int64_t arrived = nd.queue.front();
      nd.queue.pop_front();
      if (measured) metrics_.waiting_times.push_back(t - arrived);
      if (nd.queue.empty()) remove_backlogged(h);
    }
    ++metrics_.total_departures;
    if (measured) {
      ++metrics_.delivered;
      const auto batch = (t - cfg_.warmup_slots) * kThroughputBatches / metrics_.elapsed_slots;
      ++metrics_.batch_delivered[static_cast<std::size_t>(batch)];
    }
    --nd.gate_count;
    if (--channel_.remaining_gated == 0) {
      channel_.holder = ChannelState::kFree;
      nd.vacation_start = t + 1;
      nd.vacation_from_empty = !cfg_.saturated && nd.queue.empty();
    }
  }

  void add_backlogged(int node) {
    backlog_pos_[static_cast<std::size_t>(node)] = static_cast<int>(backlog_.size());
    backlog_.push_back(node);
  }
  void remove_backlogged(int node) {
    const int pos = backlog_pos_[static_cast<std::size_t>(node)];
    const int last = backlog_.back();
    backlog_[static_cast<std::size_t>(pos)] = last;
    backlog_pos_[static_cast<std::size_t>(last)] = pos;
    backlog_.pop_back();
    backlog_pos_[static_cast<std::size_t>(node)] = -1;
  }

  using Arrival = std::pair<std::int64_t, int>;

  SimConfig cfg_;
  Xoshiro256ss rng_;
  std::vector<NodeState> nodes_;
  std::vector<int> backlog_;
  std::vector<int> backlog_pos_;
  std::priority_queue<Arrival, std::vector<Arrival>, std::greater<>> next_arrival_;
  ChannelState channel_;
  RawMetrics metrics_;
  std::vector<double> q_pow_;
  double odds_ = 0.0;
  double log1m_lambda_ = 0.0;
  std::int64_t m_cap_ = 1;
  std::int64_t slot_ = 0;
  bool arrivals_ = true;
};

/// Replication `index` of `cfg`; its stream seed is replication_seed(seed, index).
inline RawMetrics run_replication(const SimConfig& cfg, std::uint64_t index) {
  Simulator sim(cfg, replication_seed(cfg.seed, index));
  sim.run_to_end();
  return sim.finish();
}

/// One replication (index 0).
inline RawMetrics run(const SimConfig& cfg) { return run_replication(cfg, 0); }

/// `cfg.replications` independent runs, returned in replication order.
/// Runs execute on up to `threads` workers (0 = hardware concurrency).
inline std::vector<RawMetrics> replicate(const SimConfig& cfg, unsigned threads = 0) {
  cfg.validate();
  const auto reps = static_cast<std::size_t>(cfg.replications);
  std::vector<RawMetrics> out(reps);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
  if (threads <= 1) {
    for (std::size_t i = 0; i < reps; ++i) out[i] = run_replication(cfg, i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < reps; i = next++) out[i] = run_replication(cfg, i);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

/// Delivered packets per post-warmup slot of a saturated run.
inline double run_saturated(const SimConfig& cfg) {
  if (!cfg.saturated) throw ParamError("run_saturated requires the saturated flag");
  const RawMetrics m = run(cfg);
  return static_cast<double>(m.delivered) / static_cast<double>(m.elapsed_slots);
}

}  // namespace bsaloha
