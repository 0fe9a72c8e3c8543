// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Simulated runtime: checkpoint planning and serialization, checkpoint GC,
// the step-time watchdog, SDC repeat checks and recovery time. Everything
// runs on a simulated clock and is a pure function of its inputs.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "composer/error.hpp"

namespace composer::sim {

// ---------------------------------------------------------------------------
// Checkpoint planning
// ---------------------------------------------------------------------------

struct Shard {
  std::string name;
  std::int64_t bytes = 0;
  bool replicated = true;
  /// Replica holding a non-replicated shard.
  int owner = 0;
};

struct ShardManifest {
  std::vector<Shard> shards;
  int replicas = 1;
};

/// replica -> shards it writes.
using CheckpointPlan = std::map<int, std::vector<Shard>>;

inline void check_manifest(const ShardManifest& m) {
  if (m.replicas < 1) throw Error(ErrorCode::kInvalidArgument, "replicas", "must be >= 1");
  std::set<std::string> names;
  for (const auto& s : m.shards) {
    if (s.bytes <= 0) throw Error(ErrorCode::kInvalidArgument, s.name, "shard bytes must be positive");
    if (!names.insert(s.name).second) throw Error(ErrorCode::kInvalidArgument, s.name, "duplicate shard name");
    if (!s.replicated && (s.owner < 0 || s.owner >= m.replicas))
      throw Error(ErrorCode::kInvalidArgument, s.name, "owner out of range");
  }
}

/// Replicated shards go round-robin over replicas in manifest order;
/// non-replicated shards stay with their owner. Every replica has an entry.
inline CheckpointPlan plan_checkpoint(const ShardManifest& m) {
  check_manifest(m);
  CheckpointPlan plan;
  for (int r = 0; r < m.replicas; ++r) plan[r];
  int next = 0;
  for (const auto& s : m.shards) {
    if (s.replicated) {
      plan[next].push_back(s);
      next = (next + 1) % m.replicas;
    } else {
      plan[s.owner].push_back(s);
    }
  }
  return plan;
}

struct SaveResult {
  double duration_seconds = 0;
  /// Largest host-memory footprint on any single replica.
  std::int64_t peak_host_bytes = 0;
  friend bool operator==(const SaveResult&, const SaveResult&) = default;
};

/// Each replica copies its shards in plan order through at most `bound`
/// host buffers; a shard holds its buffer for bytes / copy_rate seconds.
inline SaveResult simulate_save(const CheckpointPlan& plan, int bound, double copy_rate) {
  if (bound < 1) throw Error(ErrorCode::kInvalidArgument, "bound", "must be >= 1");
  if (!(copy_rate > 0)) throw Error(ErrorCode::kInvalidArgument, "copy_rate", "must be positive");
  SaveResult out;
  for (const auto& [replica, shards] : plan) {
    (void)replica;
    // Slot free times, smallest first.
    std::priority_queue<double, std::vector<double>, std::greater<>> slots;
    for (int i = 0; i < bound; ++i) slots.push(0.0);
    struct Interval {
      double start, end;
      std::int64_t bytes;
    };
    std::vector<Interval> intervals;
    for (const auto& s : shards) {
      const double start = slots.top();
      slots.pop();
      const double end = start + static_cast<double>(s.bytes) / copy_rate;
      slots.push(end);
      intervals.push_back({start, end, s.bytes});
      out.duration_seconds = std::max(out.duration_seconds, end);
    }
    // Sweep: releases at time t happen before acquisitions at t.
    std::vector<std::pair<double, std::int64_t>> events;
    for (const auto& iv : intervals) {
      events.emplace_back(iv.start, iv.bytes);
      events.emplace_back(iv.end, -iv.bytes);
    }
    std::sort(events.begin(), events.end());
    std::int64_t live = 0;
    for (const auto& [t, delta] : events) {
      (void)t;
      live += delta;
      out.peak_host_bytes = std::max(out.peak_host_bytes, live);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Garbage collection
// ---------------------------------------------------------------------------

struct GcPolicy {
  int keep_last_n = 0;
  std::int64_t keep_every_k = 0;
};

/// Steps kept: the last n, plus every multiple of k when k > 0.
inline std::set<std::int64_t> gc_retained(const std::vector<std::int64_t>& steps, const GcPolicy& p) {
  if (p.keep_last_n < 0 || p.keep_every_k < 0) throw Error(ErrorCode::kInvalidArgument, "gc", "negative policy");
  if (p.keep_last_n == 0 && p.keep_every_k == 0)
    throw Error(ErrorCode::kInvalidArgument, "gc", "policy keeps nothing");
  if (!std::is_sorted(steps.begin(), steps.end())) throw Error(ErrorCode::kInvalidArgument, "gc", "steps not sorted");
  std::set<std::int64_t> keep;
  const auto n = static_cast<std::size_t>(p.keep_last_n);
  for (std::size_t i = steps.size() > n ? steps.size() - n : 0; i < steps.size(); ++i) keep.insert(steps[i]);
  if (p.keep_every_k > 0)
    for (auto s : steps)
      if (s % p.keep_every_k == 0) keep.insert(s);
  return keep;
}

// ---------------------------------------------------------------------------
// Watchdog
// ---------------------------------------------------------------------------

struct StepRecord {
  std::int64_t step = 0;
  double duration = 0;
  double utilization = 0;
};

enum class WatchdogAction { kRestart, kAlert, kDumpStacks };

inline std::string_view watchdog_action_name(WatchdogAction a) {
  switch (a) {
    case WatchdogAction::kRestart:
      return "restart";
    case WatchdogAction::kAlert:
      return "alert";
    case WatchdogAction::kDumpStacks:
      return "dump_stacks";
  }
  return "?";
}

inline WatchdogAction parse_watchdog_action(std::string_view s) {
  if (s == "restart") return WatchdogAction::kRestart;
  if (s == "alert") return WatchdogAction::kAlert;
  if (s == "dump_stacks") return WatchdogAction::kDumpStacks;
  throw Error(ErrorCode::kInvalidArgument, std::string(s), "unknown watchdog action");
}

struct WatchdogConfig {
  double slow_factor = 3.0;
  int window = 5;
  double low_util = 0.1;
  int consecutive = 3;
  WatchdogAction action = WatchdogAction::kAlert;
};

enum class WatchdogEventKind { kSlowStep, kLowUtilization };

struct WatchdogEvent {
  std::int64_t step = 0;
  WatchdogEventKind kind = WatchdogEventKind::kSlowStep;
  WatchdogAction action = WatchdogAction::kAlert;
  /// Median for slow steps, utilization for low-utilization events.
  double reference = 0;

  std::string to_string() const {
    std::ostringstream o;
    o << "step=" << step << " event=" << (kind == WatchdogEventKind::kSlowStep ? "slow_step" : "low_utilization")
      << " action=" << watchdog_action_name(action) << " reference=" << reference;
    return o.str();
  }
  friend bool operator==(const WatchdogEvent&, const WatchdogEvent&) = default;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Slow step: duration above slow_factor times the median of the previous
/// `window` durations. Low utilization: fires once on the c-th consecutive
/// step under the threshold, then re-arms after a step at or above it.
inline std::vector<WatchdogEvent> watchdog_scan(const std::vector<StepRecord>& trace, const WatchdogConfig& cfg) {
  if (cfg.window < 1 || cfg.consecutive < 1) throw Error(ErrorCode::kInvalidArgument, "watchdog", "bad config");
  if (trace.size() < static_cast<std::size_t>(cfg.window))
    throw Error(ErrorCode::kShortTrace, std::to_string(trace.size()), "trace shorter than window");
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].step <= trace[i - 1].step)
      throw Error(ErrorCode::kInvalidArgument, std::to_string(trace[i].step), "steps not increasing");
  std::vector<WatchdogEvent> events;
  const auto w = static_cast<std::size_t>(cfg.window);
  int low_run = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i >= w) {
      std::vector<double> prior;
      for (std::size_t j = i - w; j < i; ++j) prior.push_back(trace[j].duration);
      const double m = median(std::move(prior));
      if (trace[i].duration > cfg.slow_factor * m)
        events.push_back({trace[i].step, WatchdogEventKind::kSlowStep, cfg.action, m});
    }
    if (trace[i].utilization < cfg.low_util) {
      if (++low_run == cfg.consecutive)
        events.push_back({trace[i].step, WatchdogEventKind::kLowUtilization, cfg.action, trace[i].utilization});
    } else {
      low_run = 0;
    }
  }
  return events;
}

/// Lines of "step duration utilization"; '#' starts a comment.
inline std::vector<StepRecord> parse_trace(std::string_view text) {
  std::vector<StepRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    StepRecord r;
    if (!(ls >> r.step)) continue;
    if (!(ls >> r.duration >> r.utilization))
      throw Error(ErrorCode::kInvalidArgument, line, "expected: step duration utilization");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SDC
// ---------------------------------------------------------------------------

enum class SdcVerdict { kClean, kCorrupt };

using Payload = std::vector<std::uint8_t>;
using CommFn = std::function<Payload()>;
/// Called with the 0-based run index and that run's result.
using FaultInjector = std::function<void(int run, Payload& result)>;

/// Runs `comm` `repeats` times and compares the results pairwise. A fault
/// that corrupts every run identically is not detectable this way.
inline SdcVerdict sdc_check(const CommFn& comm, int repeats, const FaultInjector& inject = {}) {
  if (repeats < 2) throw Error(ErrorCode::kInvalidArgument, "repeats", "must be >= 2");
  std::vector<Payload> results;
  for (int r = 0; r < repeats; ++r) {
    Payload p = comm();
    if (inject) inject(r, p);
    results.push_back(std::move(p));
  }
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i] != results[0]) return SdcVerdict::kCorrupt;
  return SdcVerdict::kClean;
}

// ---------------------------------------------------------------------------
// Recovery
// ---------------------------------------------------------------------------

enum class RecoveryMode { kRemoteRestore, kPeerBroadcast };

struct RecoveryScenario {
  double state_bytes = 0;
  std::int64_t checkpoint_interval = 1;
  double step_seconds = 0;
  double remote_bps = 1;
  double interconnect_bps = 1;
  std::int64_t failure_step = 0;
  double reschedule_seconds = 0;
  RecoveryMode mode = RecoveryMode::kRemoteRestore;
};

struct RecoveryResult {
  double lost_work_seconds = 0;
  double restore_seconds = 0;
  double total_downtime = 0;
};

inline RecoveryResult simulate_recovery(const RecoveryScenario& s) {
  if (!(s.remote_bps > 0) || !(s.interconnect_bps > 0))
    throw Error(ErrorCode::kInvalidArgument, "bandwidth", "must be positive");
  if (s.checkpoint_interval < 1 || s.failure_step < 0 || s.state_bytes < 0 || s.step_seconds < 0)
    throw Error(ErrorCode::kInvalidArgument, "scenario", "invalid recovery scenario");
  RecoveryResult r;
  const std::int64_t last_ckpt = (s.failure_step / s.checkpoint_interval) * s.checkpoint_interval;
  r.lost_work_seconds = static_cast<double>(s.failure_step - last_ckpt) * s.step_seconds;
  r.restore_seconds =
      s.state_bytes / (s.mode == RecoveryMode::kPeerBroadcast ? s.interconnect_bps : s.remote_bps);
  r.total_downtime = r.lost_work_seconds + r.restore_seconds + s.reschedule_seconds;
  return r;
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

/// key=value lines; '#' starts a comment.
class Scenario {
 public:
  static Scenario parse(std::string_view text, std::filesystem::path base_dir = {}) {
    Scenario s;
    s.base_dir_ = std::move(base_dir);
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t\r");
        const auto e = v.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
      };
      if (eq == std::string::npos) {
        if (!trim(line).empty()) throw Error(ErrorCode::kInvalidArgument, line, "expected key=value");
        continue;
      }
      s.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return s;
  }

  static Scenario load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::kIo, file.string(), "cannot open scenario");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), file.parent_path());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::kInvalidArgument, key, "missing scenario key");
    return it->second;
  }
  std::string text_or(const std::string& key, std::string def) const { return has(key) ? text(key) : def; }
  double number(const std::string& key) const {
    try {
      return std::stod(text(key));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidArgument, key, "not a number");
    }
  }
  double number_or(const std::string& key, double def) const { return has(key) ? number(key) : def; }
  std::int64_t integer(const std::string& key) const { return static_cast<std::int64_t>(number(key)); }
  std::filesystem::path file(const std::string& key) const { return base_dir_ / text(key); }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

inline RecoveryScenario recovery_from_scenario(const Scenario& s, RecoveryMode mode) {
  RecoveryScenario r;
  r.state_bytes = s.number("state_bytes");
  r.checkpoint_interval = s.integer("checkpoint_interval");
  r.step_seconds = s.number("step_seconds");
  r.remote_bps = s.number("remote_bps");
  r.interconnect_bps = s.number("interconnect_bps");
  r.failure_step = s.integer("failure_step");
  r.reschedule_seconds = s.number_or("reschedule_seconds", 0.0);
  r.mode = mode;
  return r;
}

/// shards=name:bytes[:owner],...  An owner makes the shard non-replicated.
inline ShardManifest manifest_from_scenario(const Scenario& s) {
  ShardManifest m;
  m.replicas = static_cast<int>(s.integer("replicas"));
  std::istringstream in(s.text("shards"));
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream parts(item);
    std::string name, bytes, owner;
    std::getline(parts, name, ':');
    std::getline(parts, bytes, ':');
    std::getline(parts, owner, ':');
    if (name.empty() || bytes.empty()) throw Error(ErrorCode::kInvalidArgument, item, "expected name:bytes[:owner]");
    Shard sh{name, std::stoll(bytes), owner.empty(), owner.empty() ? 0 : std::stoi(owner)};
    m.shards.push_back(sh);
  }
  return m;
}

inline WatchdogConfig watchdog_from_scenario(const Scenario& s) {
  WatchdogConfig c;
  c.slow_factor = s.number_or("slow_factor", c.slow_factor);
  c.window = static_cast<int>(s.number_or("window", c.window));
  c.low_util = s.number_or("low_util", c.low_util);
  c.consecutive = static_cast<int>(s.number_or("consecutive", c.consecutive));
  if (s.has("action")) c.action = parse_watchdog_action(s.text("action"));
  return c;
}

}  // namespace composer::sim
