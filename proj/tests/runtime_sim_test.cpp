// Checkpoint planning, save simulation, GC, watchdog, SDC and recovery.

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "composer/runtime_sim.hpp"

namespace composer::sim {
namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kIo;
}

ShardManifest uniform(int n, std::int64_t bytes, int replicas) {
  ShardManifest m;
  m.replicas = replicas;
  for (int i = 0; i < n; ++i) m.shards.push_back({"s" + std::to_string(i), bytes});
  return m;
}

std::vector<std::size_t> counts(const CheckpointPlan& p) {
  std::vector<std::size_t> c;
  for (const auto& [_, v] : p) c.push_back(v.size());
  return c;
}

TEST(Checkpoint, RoundRobinPlan) {
  EXPECT_EQ(counts(plan_checkpoint(uniform(6, 10, 3))), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_EQ(counts(plan_checkpoint(uniform(5, 10, 3))), (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_EQ(counts(plan_checkpoint(uniform(4, 10, 1))), (std::vector<std::size_t>{4}));
  EXPECT_EQ(counts(plan_checkpoint(uniform(0, 10, 2))), (std::vector<std::size_t>{0, 0}));
}

TEST(Checkpoint, NonReplicatedStayWithOwner) {
  ShardManifest m = uniform(3, 10, 3);
  m.shards.push_back({"opt", 5, false, 2});
  const auto plan = plan_checkpoint(m);
  EXPECT_EQ(plan.at(2).back().name, "opt");
  EXPECT_EQ(counts(plan), (std::vector<std::size_t>{1, 1, 2}));
  m.shards.back().owner = 3;
  EXPECT_EQ(code_of([&] { plan_checkpoint(m); }), ErrorCode::kInvalidArgument);
}

// Every shard is written exactly once, replicas stay within one of each other.
TEST(Checkpoint, PlanPartitionProperty) {
  std::mt19937_64 gen(5);
  for (int c = 0; c < 200; ++c) {
    const int n = static_cast<int>(gen() % 30), r = 1 + static_cast<int>(gen() % 8);
    const auto plan = plan_checkpoint(uniform(n, 1 + static_cast<std::int64_t>(gen() % 100), r));
    std::multiset<std::string> seen;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& [_, v] : plan) {
      for (const auto& s : v) seen.insert(s.name);
      lo = std::min(lo, v.size());
      hi = std::max(hi, v.size());
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(n));
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), seen.size());
    EXPECT_EQ(plan.size(), static_cast<std::size_t>(r));
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Checkpoint, SaveBoundedConcurrency) {
  const auto plan = plan_checkpoint(uniform(4, 10, 1));
  const SaveResult two = simulate_save(plan, 2, 1.0);
  EXPECT_EQ(two.peak_host_bytes, 20);
  EXPECT_DOUBLE_EQ(two.duration_seconds, 20.0);
  const SaveResult all = simulate_save(plan, 4, 1.0);
  EXPECT_EQ(all.peak_host_bytes, 40);
  EXPECT_DOUBLE_EQ(all.duration_seconds, 10.0);
  EXPECT_EQ(simulate_save(plan, 9, 1.0), all);
  EXPECT_EQ(code_of([&] { simulate_save(plan, 0, 1.0); }), ErrorCode::kInvalidArgument);
}

// Peak memory is bounded by bound * largest shard; duration never grows with the bound.
TEST(Checkpoint, SaveProperties) {
  std::mt19937_64 gen(11);
  for (int c = 0; c < 100; ++c) {
    ShardManifest m;
    m.replicas = 1 + static_cast<int>(gen() % 4);
    std::int64_t biggest = 0, total_max = 0;
    for (int i = 0; i < 1 + static_cast<int>(gen() % 20); ++i) {
      const std::int64_t b = 1 + static_cast<std::int64_t>(gen() % 1000);
      biggest = std::max(biggest, b);
      m.shards.push_back({"s" + std::to_string(i), b});
    }
    const auto plan = plan_checkpoint(m);
    for (const auto& [_, v] : plan) {
      std::int64_t t = 0;
      for (const auto& s : v) t = std::max(t, s.bytes);
      total_max = std::max(total_max, t);
    }
    double prev = INFINITY;
    for (int bound = 1; bound <= 24; ++bound) {
      const SaveResult r = simulate_save(plan, bound, 100.0);
      EXPECT_LE(r.peak_host_bytes, bound * biggest);
      EXPECT_LE(r.duration_seconds, prev + 1e-9);
      prev = r.duration_seconds;
      if (bound >= 20) {
        EXPECT_DOUBLE_EQ(r.duration_seconds, static_cast<double>(total_max) / 100.0);
      }
    }
  }
}

TEST(Gc, Examples) {
  const std::vector<std::int64_t> steps{100, 200, 300, 400, 500, 600};
  EXPECT_EQ(gc_retained(steps, {2, 0}), (std::set<std::int64_t>{500, 600}));
  EXPECT_EQ(gc_retained(steps, {0, 300}), (std::set<std::int64_t>{300, 600}));
  EXPECT_EQ(gc_retained(steps, {1, 200}), (std::set<std::int64_t>{200, 400, 600}));
  EXPECT_EQ(gc_retained(steps, {10, 0}), std::set<std::int64_t>(steps.begin(), steps.end()));
  EXPECT_EQ(code_of([&] { gc_retained(steps, {0, 0}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { gc_retained({2, 1}, {1, 0}); }), ErrorCode::kInvalidArgument);
}

TEST(Gc, LatestAlwaysKept) {
  std::mt19937_64 gen(2);
  for (int c = 0; c < 200; ++c) {
    std::vector<std::int64_t> steps;
    std::int64_t s = 0;
    for (int i = 0; i < 1 + static_cast<int>(gen() % 30); ++i) steps.push_back(s += 1 + static_cast<std::int64_t>(gen() % 50));
    const GcPolicy p{1 + static_cast<int>(gen() % 5), static_cast<std::int64_t>(gen() % 60)};
    const auto keep = gc_retained(steps, p);
    EXPECT_TRUE(keep.count(steps.back()));
    EXPECT_GE(keep.size(), std::min<std::size_t>(steps.size(), static_cast<std::size_t>(p.keep_last_n)));
    for (auto k : keep) EXPECT_TRUE(std::find(steps.begin(), steps.end(), k) != steps.end());
  }
}

std::vector<StepRecord> flat_trace(int n) {
  std::vector<StepRecord> t;
  for (int i = 1; i <= n; ++i) t.push_back({i, 1.0, 0.9});
  return t;
}

TEST(Watchdog, SlowStep) {
  auto t = flat_trace(10);
  t[7].duration = 3.5;
  const auto ev = watchdog_scan(t, {});
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].step, 8);
  EXPECT_EQ(ev[0].kind, WatchdogEventKind::kSlowStep);
  EXPECT_DOUBLE_EQ(ev[0].reference, 1.0);
  t[7].duration = 3.0;
  EXPECT_TRUE(watchdog_scan(t, {}).empty());
}

TEST(Watchdog, LowUtilizationFiresOncePerRun) {
  auto t = flat_trace(12);
  for (int i = 3; i < 8; ++i) t[i].utilization = 0.05;
  t[10].utilization = 0.0;
  WatchdogConfig cfg;
  cfg.action = WatchdogAction::kRestart;
  const auto ev = watchdog_scan(t, cfg);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].step, 6);
  EXPECT_EQ(ev[0].kind, WatchdogEventKind::kLowUtilization);
  EXPECT_EQ(ev[0].action, WatchdogAction::kRestart);
  for (int i = 8; i < 11; ++i) t[i].utilization = 0.0;
  EXPECT_EQ(watchdog_scan(t, cfg).size(), 1u);
  t[8].utilization = 0.5;
  t[11].utilization = 0.0;
  const auto again = watchdog_scan(t, cfg);
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[1].step, 12);
}

TEST(Watchdog, Errors) {
  EXPECT_EQ(code_of([] { watchdog_scan(flat_trace(4), {}); }), ErrorCode::kShortTrace);
  auto t = flat_trace(6);
  t[3].step = 2;
  EXPECT_EQ(code_of([&] { watchdog_scan(t, {}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { parse_watchdog_action("reboot"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { parse_trace("1 2\n"); }), ErrorCode::kInvalidArgument);
}

TEST(Watchdog, ScenarioFile) {
  const Scenario s = Scenario::load(COMPOSER_SOURCE_DIR "/data/scenarios/watchdog.txt");
  const auto ev = watchdog_scan(parse_trace([&] {
                                  std::ifstream in(s.file("trace"));
                                  std::stringstream b;
                                  b << in.rdbuf();
                                  return b.str();
                                }()),
                                watchdog_from_scenario(s));
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].to_string(), "step=12 event=slow_step action=alert reference=1.01");
  EXPECT_EQ(ev[1].step, 22);
  EXPECT_EQ(ev[1].kind, WatchdogEventKind::kLowUtilization);
}

TEST(Sdc, DetectsDivergentRun) {
  const CommFn comm = [] { return Payload{1, 2, 3}; };
  EXPECT_EQ(sdc_check(comm, 3), SdcVerdict::kClean);
  EXPECT_EQ(sdc_check(comm, 3, [](int run, Payload& p) {
              if (run == 2) p[1] ^= 0x10;
            }),
            SdcVerdict::kCorrupt);
  // Identical corruption on every run is invisible to a repeat check.
  EXPECT_EQ(sdc_check(comm, 3, [](int, Payload& p) { p[0] = 9; }), SdcVerdict::kClean);
  EXPECT_EQ(code_of([&] { sdc_check(comm, 1); }), ErrorCode::kInvalidArgument);
}

TEST(Recovery, PeerBeatsRemote) {
  RecoveryScenario s{1e12, 100, 1.0, 1e9, 1e11, 250, 0, RecoveryMode::kRemoteRestore};
  const auto remote = simulate_recovery(s);
  EXPECT_DOUBLE_EQ(remote.restore_seconds, 1000.0);
  EXPECT_DOUBLE_EQ(remote.lost_work_seconds, 50.0);
  s.mode = RecoveryMode::kPeerBroadcast;
  const auto peer = simulate_recovery(s);
  EXPECT_DOUBLE_EQ(peer.restore_seconds, 10.0);
  EXPECT_DOUBLE_EQ(peer.total_downtime, 60.0);
  s.remote_bps = 0;
  EXPECT_EQ(code_of([&] { simulate_recovery(s); }), ErrorCode::kInvalidArgument);
}

TEST(Recovery, LargeJobScenario) {
  const Scenario s = Scenario::load(COMPOSER_SOURCE_DIR "/data/scenarios/recovery_32k.txt");
  // 50 lost steps of 2 s, 2.4e12 bytes, 120 s reschedule.
  const auto peer = simulate_recovery(recovery_from_scenario(s, RecoveryMode::kPeerBroadcast));
  const auto remote = simulate_recovery(recovery_from_scenario(s, RecoveryMode::kRemoteRestore));
  EXPECT_DOUBLE_EQ(peer.total_downtime, 100.0 + 24.0 + 120.0);
  EXPECT_DOUBLE_EQ(remote.total_downtime, 100.0 + 4800.0 + 120.0);
}

TEST(Scenario, Parsing) {
  const Scenario s = Scenario::parse("# c\n a = 1.5 \n\nname = x y # tail\nshards=a:10,b:20:1\nreplicas=2\n");
  EXPECT_DOUBLE_EQ(s.number("a"), 1.5);
  EXPECT_EQ(s.text("name"), "x y");
  EXPECT_EQ(s.number_or("missing", 7.0), 7.0);
  EXPECT_EQ(code_of([&] { s.text("missing"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { s.number("name"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { Scenario::parse("just words\n"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { Scenario::load("/nonexistent/file"); }), ErrorCode::kIo);
  const ShardManifest m = manifest_from_scenario(s);
  ASSERT_EQ(m.shards.size(), 2u);
  EXPECT_TRUE(m.shards[0].replicated);
  EXPECT_FALSE(m.shards[1].replicated);
  EXPECT_EQ(m.shards[1].owner, 1);
}

TEST(Scenario, SaveFile) {
  const Scenario s = Scenario::load(COMPOSER_SOURCE_DIR "/data/scenarios/save.txt");
  const auto plan = plan_checkpoint(manifest_from_scenario(s));
  const auto r = simulate_save(plan, static_cast<int>(s.integer("bound")), s.number("copy_rate"));
  EXPECT_LE(r.peak_host_bytes, 2 * 4000000000LL);
  EXPECT_GT(r.duration_seconds, 0.0);
}

}  // namespace
}  // namespace composer::sim
