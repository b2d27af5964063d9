#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pdsim/sim/engine.h"
#include "pdsim/sim/rng.h"

namespace pdsim::sim {

TEST(Engine, ScheduleOnEmptyQueue) {
  Engine e;
  e.schedule(0, 1, "a", [] {});
  EXPECT_EQ(e.pending(), 1u);
}

TEST(Engine, SameTimeFiresInInsertionOrder) {
  Engine e;
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) e.schedule(10, 1, "x", [&order, i] { order.push_back(i); });
  e.run_until(kForever);
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Engine, CancelledEventNeverFires) {
  Engine e;
  bool fired = false;
  const auto h = e.schedule(5, 1, "x", [&] { fired = true; });
  EXPECT_TRUE(e.cancel(h));
  EXPECT_FALSE(e.cancel(h));
  e.run_until(kForever);
  EXPECT_FALSE(fired);
  EXPECT_EQ(e.pending(), 0u);
}

TEST(Engine, RunUntilOnEmptyQueueAdvancesClock) {
  Engine e;
  const auto stats = e.run_until(100);
  EXPECT_EQ(stats.events_fired, 0u);
  EXPECT_EQ(e.now(), 100);
}

TEST(Engine, RunUntilStopsAtHorizon) {
  Engine e;
  for (SimTime t : {1, 2, 3}) e.schedule(t, 1, "x", [] {});
  EXPECT_EQ(e.run_until(2).events_fired, 2u);
  EXPECT_EQ(e.pending(), 1u);
  EXPECT_EQ(e.now(), 2);
}

TEST(Engine, SchedulingIntoThePastThrows) {
  Engine e;
  e.run_until(50);
  EXPECT_THROW(e.schedule(49, 1, "x", [] {}), InvariantViolation);
}

TEST(Engine, HandlersCanScheduleMoreWork) {
  Engine e;
  int n = 0;
  std::function<void()> tick = [&] {
    if (++n < 10) e.schedule_after(7, 1, "tick", tick);
  };
  e.schedule(0, 1, "tick", tick);
  e.run_until(kForever);
  EXPECT_EQ(n, 10);
  EXPECT_EQ(e.now(), 63);
}

TEST(Engine, EventCapThrows) {
  Engine e;
  e.set_max_events(3);
  std::function<void()> loop = [&] { e.schedule_after(1, 1, "loop", loop); };
  e.schedule(0, 1, "loop", loop);
  EXPECT_THROW(e.run_until(kForever), EventLimitExceeded);
}

std::string traced_run() {
  Engine e;
  e.enable_trace(true);
  RngStream rng(7, "test");
  for (int i = 0; i < 50; ++i) {
    e.schedule(static_cast<SimTime>(rng.below(1000)), static_cast<EntityId>(i % 3), "ev", [] {});
  }
  e.run_until(kForever);
  std::ostringstream os;
  write_trace_jsonl(os, e.trace());
  return os.str();
}

TEST(Engine, ReplayProducesIdenticalTrace) {
  const auto a = traced_run();
  EXPECT_EQ(a, traced_run());
  EXPECT_NE(a.find("\"kind\":\"ev\""), std::string::npos);
}

TEST(Rng, StreamDependsOnlyOnSeedAndName) {
  RngStreams a(11), b(11);
  a.get("other").next_u64();  // draws on another stream must not interfere
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.get("workload").next_u64(), b.get("workload").next_u64());
  }
}

TEST(Rng, DistinctNamesGiveDistinctStreams) {
  EXPECT_NE(derive_seed(1, "workload"), derive_seed(1, "flip"));
  EXPECT_NE(derive_seed(1, "workload"), derive_seed(2, "workload"));
}

TEST(Rng, UniformIntStaysInRange) {
  RngStream r(3, "x");
  std::set<std::int64_t> seen;
  for (int i = 0; i < 10'000; ++i) {
    const auto v = r.uniform_int(5000, 5004);
    ASSERT_GE(v, 5000);
    ASSERT_LE(v, 5004);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, BelowOneIsZero) {
  RngStream r(3, "x");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r.below(1), 0u);
}

TEST(Rng, ExponentialMeanMatchesRate) {
  RngStream r(5, "arrivals");
  double sum = 0;
  const int n = 100'000;
  for (int i = 0; i < n; ++i) sum += r.exponential(4.0);
  EXPECT_NEAR(sum / n, 0.25, 0.005);
}

}  // namespace pdsim::sim
