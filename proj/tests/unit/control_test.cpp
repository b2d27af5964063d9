#include <gtest/gtest.h>

#include <vector>

#include "pdsim/control/cluster.h"
#include "pdsim/control/flip.h"
#include "pdsim/control/status_table.h"
#include "pdsim/sim/engine.h"
#include "pdsim/sim/rng.h"

namespace pdsim::control {
namespace {

Request req(RequestId id, SimTime arrival, std::int32_t prompt, std::int32_t decode) {
  Request r;
  r.id = id;
  r.arrival = arrival;
  r.prompt_len = prompt;
  r.decode_len = decode;
  return r;
}

struct Harness {
  explicit Harness(ClusterConfig c, cost::CostModelParams p = {})
      : cost(p), rngs(1), cluster(engine, cost, c, rngs, table) {}

  sim::Engine engine;
  cost::CostModel cost;
  sim::RngStreams rngs;
  RequestStatusTable table;
  DisaggregatedCluster cluster;
};

ClusterConfig config(std::int32_t np, std::int32_t nd) {
  ClusterConfig c;
  c.n_prefill = np;
  c.n_decode = nd;
  return c;
}

}  // namespace

TEST(StatusTable, TimesGiveTtftAndJct) {
  RequestStatusTable t;
  t.insert(req(1, 0, 10, 10));
  auto& row = t.at(1);
  row.first_token = ms(50);
  t.complete(1, ms(300), 0);
  EXPECT_EQ(t.at(1).ttft(), ms(50));
  EXPECT_EQ(t.at(1).jct(), ms(300));
  EXPECT_EQ(t.at(1).phase, Phase::kDone);
  EXPECT_EQ(t.completed(), 1u);
}

TEST(StatusTable, RejectsInconsistentUpdates) {
  RequestStatusTable t;
  t.insert(req(1, 0, 10, 10));
  EXPECT_THROW(t.insert(req(1, 5, 10, 10)), InvariantViolation);
  EXPECT_THROW(t.complete(1, 10, 0), InvariantViolation);  // no first token
  t.advance(1, Phase::kDecoding);
  EXPECT_THROW(t.advance(1, Phase::kPrefilling), InvariantViolation);
  t.at(1).first_token = 5;
  t.complete(1, 10, 0);
  EXPECT_THROW(t.complete(1, 11, 0), InvariantViolation);
  EXPECT_THROW(t.at(2), InvariantViolation);
}

TEST(StatusTable, RowsOrderedById) {
  RequestStatusTable t;
  for (RequestId id : {5u, 1u, 3u}) t.insert(req(id, 0, 1, 1));
  const auto rows = t.rows();
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].id, 1u);
  EXPECT_EQ(rows[2].id, 5u);
}

TEST(UtilizationWindow, BusyFractionOverTrailingWindow) {
  UtilizationWindow w;
  w.add(0, 100);
  w.add(300, 400);
  EXPECT_DOUBLE_EQ(w.utilization(400, 400), 0.5);
  EXPECT_DOUBLE_EQ(w.utilization(450, 400), 150.0 / 400.0);  // [50, 450]
  EXPECT_DOUBLE_EQ(w.utilization(1000, 400), 0.0);
  w.clear();
  EXPECT_DOUBLE_EQ(w.utilization(1000, 400), 0.0);
}

TEST(FlipPolicy, Validation) {
  FlipPolicy p;
  p.min_latency = 8000;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.threshold = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Cluster, SingleRequestCompletesThroughBothRoles) {
  Harness h(config(1, 1));
  h.cluster.start();
  h.cluster.inject({req(0, 0, 100, 5)});
  h.engine.run_until(kForever);
  const auto& row = h.table.at(0);
  EXPECT_TRUE(row.done());
  EXPECT_EQ(row.prefill_instance, 1);
  EXPECT_EQ(row.decode_instance, 2);
  EXPECT_LE(row.ttft(), row.jct());
  EXPECT_TRUE(h.cluster.finished());
}

TEST(Cluster, RoutesToFewestQueuedPromptTokens) {
  Harness h(config(2, 1));
  h.cluster.start();
  h.cluster.inject({req(0, 0, 1000, 2), req(1, 0, 10, 2), req(2, 0, 10, 2)});
  h.engine.run_until(0);
  // the first goes to node 1 (tie by id); node 2 then holds fewer tokens
  EXPECT_EQ(h.table.at(0).prefill_instance, 1);
  EXPECT_EQ(h.table.at(1).prefill_instance, 2);
  EXPECT_EQ(h.table.at(2).prefill_instance, 2);
  h.engine.run_until(kForever);
  EXPECT_EQ(h.table.completed(), 3u);
}

TEST(Cluster, BroadcastEveryMonitorPeriod) {
  Harness h(config(1, 1));
  h.cluster.start();
  h.cluster.inject({req(0, seconds(1), 10, 2)});
  h.engine.run_until(0);
  EXPECT_EQ(h.cluster.counters().broadcasts, 1u);
  EXPECT_EQ(h.cluster.last_snapshot().front().snapshot_time, 0);
  h.engine.run_until(ms(100) - 1);
  EXPECT_EQ(h.cluster.counters().broadcasts, 1u);
  h.engine.run_until(ms(100));
  EXPECT_EQ(h.cluster.counters().broadcasts, 2u);
  h.engine.run_until(kForever);
  EXPECT_TRUE(h.cluster.finished());
}

TEST(Cluster, IdlePrefillFlipTakesFiveToSevenMs) {
  Harness h(config(2, 1));
  h.cluster.start();
  h.cluster.inject({req(0, seconds(1), 10, 2)});
  h.engine.run_until(ms(10));
  ASSERT_TRUE(h.cluster.request_flip(2));
  h.engine.run_until(ms(30));
  ASSERT_EQ(h.cluster.flips().size(), 1u);
  const auto& f = h.cluster.flips()[0];
  EXPECT_TRUE(f.done());
  EXPECT_EQ(f.drained, f.requested);
  EXPECT_GE(f.latency(), 5000);
  EXPECT_LE(f.latency(), 7000);
  EXPECT_EQ(h.cluster.role(2), Role::kDecode);
  h.engine.run_until(kForever);
  EXPECT_EQ(h.table.completed(), 1u);
}

TEST(Cluster, NewDecodeAppearsInNextBroadcast) {
  Harness h(config(2, 1));
  h.cluster.start();
  h.cluster.inject({req(0, seconds(1), 10, 2)});
  h.engine.run_until(ms(10));
  h.cluster.request_flip(2);
  h.engine.run_until(ms(99));
  EXPECT_EQ(h.cluster.role(2), Role::kDecode);
  EXPECT_EQ(h.cluster.last_snapshot().size(), 1u);
  h.engine.run_until(ms(100));
  EXPECT_EQ(h.cluster.last_snapshot().size(), 2u);
  h.engine.run_until(kForever);
}

TEST(Cluster, DecodeFlipDrainsRunningRequestFirst) {
  Harness h(config(1, 2));
  h.cluster.start();
  h.cluster.inject({req(0, 0, 20, 400), req(1, 0, 20, 400)});
  // wait until both are decoding
  h.engine.run_until(ms(300));
  InstanceId busy = kNoInstance;
  for (InstanceId n : {2, 3}) {
    if (!h.cluster.decode_at(n).drained()) busy = n;
  }
  ASSERT_NE(busy, kNoInstance);
  ASSERT_TRUE(h.cluster.request_flip(busy));
  h.engine.run_until(kForever);
  ASSERT_EQ(h.cluster.flips().size(), 1u);
  const auto& f = h.cluster.flips()[0];
  EXPECT_GT(f.drained, f.requested);
  EXPECT_EQ(h.cluster.role(busy), Role::kPrefill);
  EXPECT_EQ(h.table.completed(), 2u);
  EXPECT_EQ(h.cluster.counters().role_violations, 0u);
}

TEST(Cluster, LastInstanceOfARoleCannotFlip) {
  Harness h(config(1, 1));
  h.cluster.start();
  h.cluster.inject({req(0, seconds(1), 10, 2)});
  h.engine.run_until(ms(10));
  EXPECT_FALSE(h.cluster.request_flip(1));
  EXPECT_FALSE(h.cluster.request_flip(2));
  EXPECT_EQ(h.cluster.counters().ignored_flip_requests, 2u);
  h.engine.run_until(kForever);
}

TEST(Cluster, RolesConstantWithFlipsDisabled) {
  Harness h(config(2, 2));
  std::vector<Request> reqs;
  for (RequestId i = 0; i < 40; ++i) reqs.push_back(req(i, ms(50) * i, 30 + i, 5 + i));
  h.cluster.start();
  h.cluster.inject(reqs);
  h.engine.run_until(kForever);
  EXPECT_TRUE(h.cluster.flips().empty());
  EXPECT_EQ(h.cluster.role(1), Role::kPrefill);
  EXPECT_EQ(h.cluster.role(2), Role::kPrefill);
  EXPECT_EQ(h.cluster.role(3), Role::kDecode);
  EXPECT_EQ(h.cluster.role(4), Role::kDecode);
  EXPECT_EQ(h.table.completed(), reqs.size());
}

TEST(Cluster, ResourceUsageSumsRoleSpans) {
  const std::vector<RoleSpan> spans{{1, Role::kPrefill, 0, seconds(1), seconds(1)},
                                    {2, Role::kDecode, seconds(1), seconds(3), seconds(2)},
                                    {3, Role::kDecode, -1, -1, 0}};
  EXPECT_EQ(resource_usage(spans), seconds(3));
}

TEST(ClusterConfig, RejectsEmptyRoles) {
  auto c = config(0, 1);
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(1, 0);
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace pdsim::control
