#pragma once

// Declarative experiments: a key = value config, figure presets, the grid
// runner joining analytic and simulated values, and CSV output.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bsaloha/analytic.hpp"
#include "bsaloha/sim.hpp"
#include "bsaloha/stats.hpp"

namespace bsaloha {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& msg)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class ExperimentKind { analytic_point, sim_point, sweep, figure };
enum class FigureId { fig3, fig9, fig11, fig12, fig13 };
enum class Metric { throughput_sat, wait_mean, qk_tv, qk, stable_lo, stable_hi };

// Metric selector for sweeps; `stable` emits both stable_lo and stable_hi.
enum class SweepMetric { wait_mean, throughput_sat, stable, qk_tv };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::analytic_point: return "analytic_point";
    case ExperimentKind::sim_point: return "sim_point";
    case ExperimentKind::sweep: return "sweep";
    case ExperimentKind::figure: return "figure";
  }
  return {};
}

inline std::string to_string(FigureId f) {
  switch (f) {
    case FigureId::fig3: return "fig3";
    case FigureId::fig9: return "fig9";
    case FigureId::fig11: return "fig11";
    case FigureId::fig12: return "fig12";
    case FigureId::fig13: return "fig13";
  }
  return {};
}

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::throughput_sat: return "throughput_sat";
    case Metric::wait_mean: return "wait_mean";
    case Metric::qk_tv: return "qk_tv";
    case Metric::qk: return "qk";
    case Metric::stable_lo: return "stable_lo";
    case Metric::stable_hi: return "stable_hi";
  }
  return {};
}

inline std::string to_string(SweepMetric m) {
  switch (m) {
    case SweepMetric::wait_mean: return "wait_mean";
    case SweepMetric::throughput_sat: return "throughput_sat";
    case SweepMetric::stable: return "stable";
    case SweepMetric::qk_tv: return "qk_tv";
  }
  return {};
}

inline std::string to_string(RootChoice r) {
  return r == RootChoice::smallest ? "smallest" : "largest";
}

inline std::optional<FigureId> parse_figure_id(std::string_view s) {
  for (auto f : {FigureId::fig3, FigureId::fig9, FigureId::fig11, FigureId::fig12, FigureId::fig13}) {
    if (s == to_string(f)) return f;
  }
  return std::nullopt;
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::analytic_point;
  std::optional<FigureId> figure;
  SweepMetric metric = SweepMetric::wait_mean;

  // Grid axes; the grid is their product in the order n, lambda_hat, M, r.
  std::vector<std::int64_t> n_values;
  std::vector<double> lambda_hat_values;
  std::vector<BatchSize> m_values;
  std::vector<double> r_values;

  // Simulation template.
  std::int64_t slots = 1'000'000;
  std::int64_t warmup = 10'000;
  std::uint64_t seed = 1;
  int replications = 1;
  bool simulate = false;
  bool saturated = false;

  RootChoice root = RootChoice::smallest;
  std::string out;

  std::vector<SystemParams> grid() const {
    std::vector<SystemParams> g;
    for (auto n : n_values)
      for (auto lh : lambda_hat_values)
        for (auto m : m_values)
          for (auto r : r_values) g.push_back(SystemParams{n, lh, r, m});
    return g;
  }

  SimConfig sim_template(const SystemParams& p) const {
    SimConfig c;
    c.params = p;
    c.total_slots = slots;
    c.warmup_slots = warmup;
    c.seed = seed;
    c.replications = replications;
    c.saturated = saturated;
    return c;
  }

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

/// `count` points log-spaced on [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> v;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i) {
    v.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (count - 1)));
  }
  return v;
}

inline std::vector<double> lin_grid(double lo, double hi, int count) {
  std::vector<double> v;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i) v.push_back(lo + (hi - lo) * i / (count - 1));
  return v;
}

/// Parameter grids of the figure presets. fig9 uses r = 0.04 and 0.07,
/// inside every curve's stable region. fig13 evaluates the high-backlog root
/// where the fixed point has several (the equilibrium long simulations
/// settle in at large r).
inline ExperimentSpec figure_preset(FigureId f) {
  ExperimentSpec s;
  s.kind = ExperimentKind::figure;
  s.figure = f;
  s.simulate = true;
  s.slots = 1'000'000;
  s.warmup = 10'000;
  const BatchSize inf = BatchSize::infinite();
  switch (f) {
    case FigureId::fig3:
      s.n_values = {30, 50};
      s.lambda_hat_values = {0.4};
      s.m_values = {BatchSize(1), BatchSize(2), BatchSize(3), BatchSize(5), inf};
      s.r_values = log_grid(0.001, 0.5, 25);
      s.saturated = true;
      s.metric = SweepMetric::throughput_sat;
      break;
    case FigureId::fig9:
      s.n_values = {20};
      s.lambda_hat_values = {0.3};
      s.m_values = {BatchSize(1), BatchSize(10), inf};
      s.r_values = {0.04, 0.07};
      s.slots = 10'000'000;
      s.warmup = 100'000;
      s.metric = SweepMetric::qk_tv;
      break;
    case FigureId::fig11:
    case FigureId::fig12:
      s.n_values = {30, 50};
      s.lambda_hat_values = {0.1, 0.3};
      s.m_values = {f == FigureId::fig11 ? BatchSize(1) : BatchSize(2)};
      s.r_values = log_grid(0.002, 0.2, 25);
      s.metric = SweepMetric::wait_mean;
      break;
    case FigureId::fig13:
      s.n_values = {30, 50};
      s.lambda_hat_values = {0.1, 0.3, 0.7};
      s.m_values = {inf};
      s.r_values = log_grid(0.005, 0.5, 21);
      s.metric = SweepMetric::wait_mean;
      s.root = RootChoice::largest;
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Config text

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_real(std::string_view s, int line, std::string_view key) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(line, std::string(key) + ": expected a real number, got '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, int line, std::string_view key) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(line, std::string(key) + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view s, int line, std::string_view key) {
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw ConfigError(line, std::string(key) + ": expected true/false, got '" + std::string(s) + "'");
}

// r_grid accepts an explicit list, log(lo, hi, count) or lin(lo, hi, count).
inline std::vector<double> parse_r_grid(std::string_view v, int line) {
  for (std::string_view fn : {"log(", "lin("}) {
    if (v.substr(0, 4) == fn) {
      if (v.back() != ')') throw ConfigError(line, "r_grid: missing ')'");
      const auto args = split_list(v.substr(4, v.size() - 5));
      if (args.size() != 3) throw ConfigError(line, "r_grid: expected (lo, hi, count)");
      const double lo = parse_real(args[0], line, "r_grid");
      const double hi = parse_real(args[1], line, "r_grid");
      const int count = parse_int<int>(args[2], line, "r_grid");
      if (count < 1) throw ConfigError(line, "r_grid: count must be >= 1");
      if (fn == "log(" && !(lo > 0.0 && hi > 0.0)) {
        throw ConfigError(line, "r_grid: log grid needs positive bounds");
      }
      return fn == "log(" ? log_grid(lo, hi, count) : lin_grid(lo, hi, count);
    }
  }
  std::vector<double> out;
  for (auto item : split_list(v)) out.push_back(parse_real(item, line, "r_grid"));
  return out;
}

inline std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parse `key = value` lines (`#` starts a comment). Keys: kind, figure,
/// metric, n, lambda_hat, r | r_grid, M, slots, warmup, seed, replications,
/// simulate, saturated, root, out. List-valued keys take comma lists.
/// With kind = figure the figure preset supplies every key not given.
inline ExperimentSpec parse_config(std::string_view text) {
  struct Entry {
    int line;
    std::string key;
    std::string value;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    std::string key(detail::trim(line.substr(0, eq)));
    std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(line_no, "missing key");
    if (value.empty()) throw ConfigError(line_no, key + ": missing value");
    if (!seen.insert(key).second) throw ConfigError(line_no, "duplicate key '" + key + "'");
    entries.push_back({line_no, std::move(key), std::move(value)});
  }

  ExperimentSpec spec;
  // kind and figure first: a figure preset is the base the other keys edit.
  for (const auto& e : entries) {
    if (e.key == "kind") {
      if (e.value == "analytic_point") spec.kind = ExperimentKind::analytic_point;
      else if (e.value == "sim_point") spec.kind = ExperimentKind::sim_point;
      else if (e.value == "sweep") spec.kind = ExperimentKind::sweep;
      else if (e.value == "figure") spec.kind = ExperimentKind::figure;
      else throw ConfigError(e.line, "kind: unknown value '" + e.value + "'");
    }
  }
  for (const auto& e : entries) {
    if (e.key == "figure") {
      auto f = parse_figure_id(e.value);
      if (!f) throw ConfigError(e.line, "figure: unknown id '" + e.value + "'");
      if (spec.kind == ExperimentKind::figure) {
        spec = figure_preset(*f);
      } else {
        spec.figure = f;
      }
    }
  }
  if (spec.kind == ExperimentKind::figure && !spec.figure) {
    throw ConfigError(0, "kind = figure requires a 'figure' key");
  }
  spec.simulate = spec.kind == ExperimentKind::figure || spec.kind == ExperimentKind::sim_point;
  bool have_r = false;

  for (const auto& e : entries) {
    const int ln = e.line;
    const std::string_view v = e.value;
    if (e.key == "kind" || e.key == "figure") {
      continue;
    } else if (e.key == "metric") {
      if (v == "wait_mean") spec.metric = SweepMetric::wait_mean;
      else if (v == "throughput_sat") spec.metric = SweepMetric::throughput_sat;
      else if (v == "stable") spec.metric = SweepMetric::stable;
      else if (v == "qk_tv") spec.metric = SweepMetric::qk_tv;
      else throw ConfigError(ln, "metric: unknown value '" + e.value + "'");
    } else if (e.key == "n") {
      spec.n_values.clear();
      for (auto item : detail::split_list(v)) {
        const auto n = detail::parse_int<std::int64_t>(item, ln, "n");
        if (n < 1) throw ConfigError(ln, "n must be >= 1 (node count)");
        spec.n_values.push_back(n);
      }
    } else if (e.key == "lambda_hat") {
      spec.lambda_hat_values.clear();
      for (auto item : detail::split_list(v)) {
        const double lh = detail::parse_real(item, ln, "lambda_hat");
        if (!(lh > 0.0 && lh < 1.0)) {
          throw ConfigError(ln, "lambda_hat = " + std::string(item) +
                                    " out of range: must lie in (0,1), each node receiving a packet at "
                                    "the beginning of a slot with probability lambda_hat/n");
        }
        spec.lambda_hat_values.push_back(lh);
      }
    } else if (e.key == "r" || e.key == "r_grid") {
      if (have_r) throw ConfigError(ln, "give either r or r_grid, not both");
      have_r = true;
      spec.r_values = detail::parse_r_grid(v, ln);
      for (double r : spec.r_values) {
        if (!(r > 0.0 && r < 1.0)) {
          throw ConfigError(ln, e.key + ": transmission probability " + detail::fmt_exact(r) +
                                    " must lie in (0,1)");
        }
      }
    } else if (e.key == "M") {
      spec.m_values.clear();
      for (auto item : detail::split_list(v)) {
        if (item == "inf") {
          spec.m_values.push_back(BatchSize::infinite());
        } else {
          const auto m = detail::parse_int<std::int64_t>(item, ln, "M");
          if (m < 1) throw ConfigError(ln, "M must be >= 1 or 'inf'");
          spec.m_values.push_back(BatchSize(m));
        }
      }
    } else if (e.key == "slots") {
      spec.slots = detail::parse_int<std::int64_t>(v, ln, "slots");
      if (spec.slots < 1) throw ConfigError(ln, "slots must be >= 1");
    } else if (e.key == "warmup") {
      spec.warmup = detail::parse_int<std::int64_t>(v, ln, "warmup");
      if (spec.warmup < 0) throw ConfigError(ln, "warmup must be >= 0");
    } else if (e.key == "seed") {
      spec.seed = detail::parse_int<std::uint64_t>(v, ln, "seed");
    } else if (e.key == "replications") {
      spec.replications = detail::parse_int<int>(v, ln, "replications");
      if (spec.replications < 1) throw ConfigError(ln, "replications must be >= 1");
    } else if (e.key == "simulate") {
      spec.simulate = detail::parse_bool(v, ln, "simulate");
    } else if (e.key == "saturated") {
      spec.saturated = detail::parse_bool(v, ln, "saturated");
    } else if (e.key == "root") {
      if (v == "smallest") spec.root = RootChoice::smallest;
      else if (v == "largest") spec.root = RootChoice::largest;
      else throw ConfigError(ln, "root: expected smallest or largest");
    } else if (e.key == "out") {
      spec.out = e.value;
    } else {
      throw ConfigError(ln, "unknown key '" + e.key + "'");
    }
  }

  if (spec.n_values.empty()) throw ConfigError(0, "missing key 'n'");
  if (spec.lambda_hat_values.empty()) throw ConfigError(0, "missing key 'lambda_hat'");
  if (spec.m_values.empty()) throw ConfigError(0, "missing key 'M'");
  if (spec.r_values.empty()) throw ConfigError(0, "missing key 'r' or 'r_grid'");
  if (spec.warmup >= spec.slots) throw ConfigError(0, "warmup must be smaller than slots");
  if (spec.kind == ExperimentKind::analytic_point) spec.simulate = false;
  return spec;
}

/// Inverse of parse_config: every field written explicitly.
inline std::string render_config(const ExperimentSpec& s) {
  std::ostringstream o;
  auto join = [&](const auto& xs, auto fmt) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) out += ", ";
      out += fmt(xs[i]);
    }
    return out;
  };
  o << "kind = " << to_string(s.kind) << '\n';
  if (s.figure) o << "figure = " << to_string(*s.figure) << '\n';
  o << "metric = " << to_string(s.metric) << '\n';
  o << "n = " << join(s.n_values, [](std::int64_t n) { return std::to_string(n); }) << '\n';
  o << "lambda_hat = " << join(s.lambda_hat_values, detail::fmt_exact) << '\n';
  o << "M = " << join(s.m_values, [](BatchSize m) { return m.to_string(); }) << '\n';
  o << "r_grid = " << join(s.r_values, detail::fmt_exact) << '\n';
  o << "slots = " << s.slots << '\n';
  o << "warmup = " << s.warmup << '\n';
  o << "seed = " << s.seed << '\n';
  o << "replications = " << s.replications << '\n';
  o << "simulate = " << (s.simulate ? "true" : "false") << '\n';
  o << "saturated = " << (s.saturated ? "true" : "false") << '\n';
  o << "root = " << to_string(s.root) << '\n';
  if (!s.out.empty()) o << "out = " << s.out << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// Result rows and CSV

/// One CSV cell: absent, a number, or a sentinel.
struct Cell {
  enum class Tag { missing, number, unbounded, empty_region };
  Tag tag = Tag::missing;
  double value = 0.0;

  static Cell of(double v) { return {Tag::number, v}; }
  static Cell unbounded() { return {Tag::unbounded, 0.0}; }
  static Cell empty_region() { return {Tag::empty_region, 0.0}; }
  bool has_number() const { return tag == Tag::number; }

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct ResultRow {
  std::int64_t n = 0;
  double lambda_hat = 0.0;
  std::optional<double> r;
  BatchSize M{};
  Metric metric = Metric::wait_mean;
  Cell analytic_value;
  Cell analytic_corrected;
  Cell sim_mean;
  Cell sim_ci;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> slots;
  std::optional<std::int64_t> k;  // qk rows only

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> solver_errors;  // one entry per failed analytic cell
};

inline constexpr std::string_view kCsvHeader =
    "n,lambda_hat,r,M,metric,analytic_value,analytic_corrected,sim_mean,sim_ci,seed,slots";

namespace detail {

inline std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_cell(const Cell& c) {
  switch (c.tag) {
    case Cell::Tag::missing: return "";
    case Cell::Tag::number: return fmt_real(c.value);
    case Cell::Tag::unbounded: return "unbounded";
    case Cell::Tag::empty_region: return "empty";
  }
  return "";
}

}  // namespace detail

/// CSV text: the fixed header (plus a trailing `k` column when any row is a
/// per-k qk row), reals to 10 significant digits, LF line endings.
inline std::string render_csv(const std::vector<ResultRow>& rows) {
  bool with_k = false;
  for (const auto& row : rows) with_k = with_k || row.k.has_value();
  std::string out(kCsvHeader);
  if (with_k) out += ",k";
  out += '\n';
  for (const auto& row : rows) {
    out += std::to_string(row.n);
    out += ',' + detail::fmt_real(row.lambda_hat);
    out += ',' + (row.r ? detail::fmt_real(*row.r) : std::string());
    out += ',' + row.M.to_string();
    out += ',' + to_string(row.metric);
    out += ',' + detail::fmt_cell(row.analytic_value);
    out += ',' + detail::fmt_cell(row.analytic_corrected);
    out += ',' + detail::fmt_cell(row.sim_mean);
    out += ',' + detail::fmt_cell(row.sim_ci);
    out += ',' + (row.seed ? std::to_string(*row.seed) : std::string());
    out += ',' + (row.slots ? std::to_string(*row.slots) : std::string());
    if (with_k) out += ',' + (row.k ? std::to_string(*row.k) : std::string());
    out += '\n';
  }
  return out;
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << render_csv(rows);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Runner

namespace detail {

struct Evaluator {
  const ExperimentSpec& spec;
  ExperimentResult& result;

  ResultRow base(const SystemParams& p, Metric m, bool with_r = true) const {
    ResultRow row;
    row.n = p.n;
    row.lambda_hat = p.lambda_hat;
    if (with_r) row.r = p.r;
    row.M = p.M;
    row.metric = m;
    return row;
  }

  void note_error(const SystemParams& p, const std::exception& e) {
    result.solver_errors.push_back("n=" + std::to_string(p.n) + " lambda_hat=" + fmt_real(p.lambda_hat) +
                                   " r=" + fmt_real(p.r) + " M=" + p.M.to_string() + ": " + e.what());
  }

  void attach_sim(ResultRow& row, const Estimate& e) const {
    row.sim_mean = Cell::of(e.mean);
    row.sim_ci = Cell::of(e.ci_half_width);
    row.seed = spec.seed;
    row.slots = spec.slots;
  }

  // Analytic waiting time: closed form for finite M, the
  // unbounded-batch formula (uncorrected, corrected) for M = inf.
  std::pair<Cell, Cell> analytic_wait(const SystemParams& p) {
    Cell a, c;
    try {
      if (p.M.is_infinite()) {
        a = Cell::of(mean_waiting_time_batch_inf(p, false, spec.root));
        c = Cell::of(mean_waiting_time_batch_inf(p, true, spec.root));
      } else {
        SolveOptions o;
        o.root = spec.root;
        a = Cell::of(mean_waiting_time(p, o).total_wait);
      }
    } catch (const UnboundedDelay& e) {
      note_error(p, e);
      a = Cell::unbounded();
    } catch (const NoStableRoot& e) {
      note_error(p, e);
      a = Cell::unbounded();
    }
    return {a, c};
  }

  void wait_row(const SystemParams& p, bool sim_only_if_bounded) {
    ResultRow row = base(p, Metric::wait_mean);
    std::tie(row.analytic_value, row.analytic_corrected) = analytic_wait(p);
    const bool bounded = row.analytic_value.has_number();
    if (spec.simulate && (bounded || !sim_only_if_bounded)) {
      SimConfig c = spec.sim_template(p);
      c.saturated = false;
      const auto runs = replicate(c);
      try {
        attach_sim(row, estimate_waiting(runs));
      } catch (const InsufficientSamples&) {
        row.seed = spec.seed;
        row.slots = spec.slots;
      }
    }
    result.rows.push_back(std::move(row));
  }

  void throughput_row(const SystemParams& p) {
    ResultRow row = base(p, Metric::throughput_sat);
    row.analytic_value = Cell::of(saturated_throughput(p));
    row.analytic_corrected = Cell::of(saturated_throughput_finite_n(p));
    if (spec.simulate && !p.M.is_infinite()) {
      SimConfig c = spec.sim_template(p);
      c.saturated = true;
      attach_sim(row, estimate_throughput(replicate(c)));
    }
    result.rows.push_back(std::move(row));
  }

  void stable_rows(const SystemParams& p) {
    const StableRegion s = stable_region(p.n, p.lambda_hat, p.M);
    for (auto m : {Metric::stable_lo, Metric::stable_hi}) {
      ResultRow row = base(p, m, /*with_r=*/false);
      if (s.empty) {
        row.analytic_value = Cell::empty_region();
      } else {
        row.analytic_value = Cell::of(m == Metric::stable_lo ? s.lo : s.hi);
      }
      result.rows.push_back(std::move(row));
    }
  }

  void qk_rows(const SystemParams& p) {
    ResultRow tv = base(p, Metric::qk_tv);
    std::optional<QueueLaws> laws;
    try {
      SolveOptions o;
      o.root = spec.root;
      laws = queue_laws(p, solve_attempt_rate(p, o).g);
    } catch (const NoStableRoot& e) {
      note_error(p, e);
      tv.analytic_value = Cell::unbounded();
    }
    std::vector<ResultRow> per_k;
    if (spec.simulate && laws) {
      SimConfig c = spec.sim_template(p);
      c.saturated = false;
      const auto runs = replicate(c);
      try {
        const DistributionComparison cmp = compare_qk(runs, *laws);
        tv.sim_mean = Cell::of(cmp.tv_distance);
        tv.seed = spec.seed;
        tv.slots = spec.slots;
        for (std::int64_t k = 1; k <= cmp.support_checked; ++k) {
          ResultRow row = base(p, Metric::qk);
          row.k = k;
          row.analytic_value = Cell::of(cmp.reference[static_cast<std::size_t>(k)]);
          row.sim_mean = Cell::of(cmp.empirical[static_cast<std::size_t>(k)]);
          row.seed = spec.seed;
          row.slots = spec.slots;
          per_k.push_back(std::move(row));
        }
      } catch (const EmptyHistogram&) {
      }
    } else if (laws) {
      for (std::int64_t k = 1; laws->alpha * std::pow(1.0 - laws->alpha, double(k - 1)) > 1e-9 && k < 100000; ++k) {
        ResultRow row = base(p, Metric::qk);
        row.k = k;
        row.analytic_value = Cell::of(laws->qk(k));
        per_k.push_back(std::move(row));
      }
    }
    result.rows.push_back(std::move(tv));
    for (auto& row : per_k) result.rows.push_back(std::move(row));
  }
};

}  // namespace detail

/// Evaluate every grid point in order. Solver failures become "unbounded"
/// cells and are listed in solver_errors; the run continues.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  ExperimentResult result;
  detail::Evaluator ev{spec, result};
  const auto grid = spec.grid();

  switch (spec.kind) {
    case ExperimentKind::analytic_point:
      for (const auto& p : grid) {
        ev.wait_row(p, true);
        ev.throughput_row(p);
        ev.stable_rows(p);
      }
      break;
    case ExperimentKind::sim_point:
      for (const auto& p : grid) {
        if (spec.saturated) {
          ev.throughput_row(p);
        } else {
          ev.wait_row(p, false);
        }
      }
      break;
    case ExperimentKind::sweep:
    case ExperimentKind::figure: {
      const bool figure = spec.kind == ExperimentKind::figure;
      // Region rows depend on (n, lambda_hat, M) only.
      std::set<std::tuple<std::int64_t, double, std::int64_t>> region_done;
      for (const auto& p : grid) {
        switch (spec.metric) {
          case SweepMetric::wait_mean: ev.wait_row(p, figure); break;
          case SweepMetric::throughput_sat: ev.throughput_row(p); break;
          case SweepMetric::qk_tv: ev.qk_rows(p); break;
          case SweepMetric::stable: break;
        }
        const bool want_region = spec.metric == SweepMetric::stable ||
                                 (figure && spec.metric != SweepMetric::qk_tv);
        if (want_region &&
            region_done.emplace(p.n, p.lambda_hat, p.M.value_or(-1)).second) {
          ev.stable_rows(p);
        }
      }
      break;
    }
  }
  return result;
}

}  // namespace bsaloha
