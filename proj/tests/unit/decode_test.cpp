#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pdsim/baseline/coupled_instance.h"
#include "pdsim/decode/decode_instance.h"
#include "pdsim/decode/kv_store.h"
#include "pdsim/exp/decode_bench.h"
#include "pdsim/sim/engine.h"
#include "pdsim/sim/rng.h"
#include "pdsim/workload/workload.h"

namespace pdsim::decode {
namespace {

cost::CostModelParams small_memory(std::int64_t pages) {
  cost::CostModelParams p;
  p.mem_capacity_tokens = pages * p.page_size;
  return p;
}

DecodingRequest make(RequestId id, std::int32_t prompt, std::int32_t decode,
                     LengthBucket bucket = {0, 200}, std::int32_t generated = 0) {
  DecodingRequest r;
  r.req.id = id;
  r.req.prompt_len = prompt;
  r.req.decode_len = decode;
  r.bucket = bucket;
  r.generated = generated;
  return r;
}

DecodePolicy policy_of(DecodePolicyKind k, ReserveBound b = ReserveBound::kLower) {
  DecodePolicy p;
  p.kind = k;
  p.bound = b;
  return p;
}

}  // namespace

TEST(KvStore, ReserveReleaseAndSwap) {
  PagedKvStore s(10);
  s.reserve_to(1, 4);
  s.reserve_to(2, 3);
  EXPECT_EQ(s.used(), 7);
  EXPECT_THROW(s.reserve_to(3, 4), InvariantViolation);
  EXPECT_EQ(s.swap_out(1), 4);
  EXPECT_TRUE(s.swapped(1));
  EXPECT_FALSE(s.resident(1));
  EXPECT_EQ(s.free(), 7);
  EXPECT_THROW(s.reserve_to(1, 5), InvariantViolation);
  EXPECT_EQ(s.swap_in(1), 4);
  s.release(2);
  EXPECT_EQ(s.used(), 4);
}

TEST(KvStore, NoVictimsWhenMemorySuffices) {
  PagedKvStore s(20);
  s.reserve_to(1, 4);
  EXPECT_TRUE(select_victims(s, 10, {1}).empty());
}

TEST(KvStore, LargestResidentEvictedFirst) {
  PagedKvStore s(14);
  s.reserve_to(1, 4);
  s.reserve_to(2, 8);
  EXPECT_EQ(select_victims(s, 6, {1, 2}), std::vector<RequestId>{2});
  EXPECT_EQ(swap_out(s, 6), std::vector<RequestId>{2});
  EXPECT_TRUE(s.resident(1));
}

TEST(KvStore, VictimTiesGoToLargerId) {
  PagedKvStore s(10);
  s.reserve_to(3, 4);
  s.reserve_to(7, 4);
  EXPECT_EQ(select_victims(s, 4, {3, 7}), std::vector<RequestId>{7});
}

TEST(Admission, EmptyInstanceAdmitsUnderEveryPolicy) {
  const cost::CostModel cost(small_memory(8));
  for (auto k : {DecodePolicyKind::kGreedy, DecodePolicyKind::kReserveStatic,
                 DecodePolicyKind::kReserveDynamic}) {
    DecodeBatcher b(cost, policy_of(k));
    // requirement (prompt + lower) exceeds the whole instance
    b.enqueue(make(1, 16, 500, {3, 200}));
    EXPECT_EQ(b.admit().admitted.size(), 1u) << to_string(k);
  }
}

TEST(Admission, StaticDefersWhenRequirementExceedsFree) {
  // 20 pages; one running request holds 10, the newcomer needs 16 + 160 tokens = 11 pages.
  const cost::CostModel cost(small_memory(20));
  DecodeBatcher b(cost, policy_of(DecodePolicyKind::kReserveStatic));
  b.add_running(make(1, 160, 1000));
  const auto newcomer = make(2, 16, 1000, {10, 16});
  EXPECT_EQ(b.reserved_free_pages(), 10);
  EXPECT_EQ(b.requirement_pages(newcomer), 11);
  b.enqueue(newcomer);
  EXPECT_TRUE(b.admit().admitted.empty());
  EXPECT_EQ(b.waiting().size(), 1u);
}

TEST(Admission, GreedyAdmitsWhatStaticDefers) {
  // capacity = pages(prompt) + 1 and bucket.lower = 2 pages of tokens
  const cost::CostModel cost(small_memory(3));
  const auto newcomer = make(2, 16, 64, {1, 32});
  for (auto [k, admitted] : {std::pair{DecodePolicyKind::kGreedy, 1u},
                             std::pair{DecodePolicyKind::kReserveStatic, 0u}}) {
    DecodeBatcher b(cost, policy_of(k));
    b.add_running(make(1, 16, 64));
    b.enqueue(newcomer);
    EXPECT_EQ(b.admit().admitted.size(), admitted) << to_string(k);
  }
}

TEST(Admission, HeadOfLineBlocks) {
  const cost::CostModel cost(small_memory(20));
  DecodeBatcher b(cost, policy_of(DecodePolicyKind::kReserveStatic));
  b.add_running(make(1, 160, 1000));
  b.enqueue(make(2, 16, 1000, {10, 16}));  // deferred
  b.enqueue(make(3, 16, 10));              // would fit
  EXPECT_TRUE(b.admit().admitted.empty());
}

TEST(Admission, DynamicProjectsToShortestRemainingJob) {
  const cost::CostModel cost(small_memory(100));
  DecodeBatcher b(cost, policy_of(DecodePolicyKind::kReserveDynamic));
  // remaining to lower bound: 64 and 32 tokens; horizon 32
  b.add_running(make(1, 32, 500, {1, 64}));
  b.add_running(make(2, 32, 500, {1, 32}));
  // each running job charged pages(32 + 32) = 4
  EXPECT_EQ(b.projected_free_pages(), 92);
}

TEST(Admission, MaxBatchCapsRunningSet) {
  const cost::CostModel cost(small_memory(100));
  DecodePolicy p = policy_of(DecodePolicyKind::kGreedy);
  p.max_batch = 2;
  DecodeBatcher b(cost, p);
  for (RequestId i = 1; i <= 4; ++i) b.enqueue(make(i, 16, 4));
  EXPECT_EQ(b.admit().admitted.size(), 2u);
}

TEST(DecodeStep, LastTokenCompletesAndFreesPages) {
  const cost::CostModel cost(small_memory(10));
  DecodeBatcher b(cost, policy_of(DecodePolicyKind::kGreedy));
  b.add_running(make(1, 20, 1));
  b.plan_step();
  const auto done = b.complete_step();
  ASSERT_EQ(done.size(), 1u);
  EXPECT_EQ(done[0].generated, 1);
  EXPECT_EQ(b.store().used(), 0);
}

TEST(DecodeStep, PressureEvictsLargestAndRequeuesAtFront) {
  const cost::CostModel cost(small_memory(12));
  DecodeBatcher b(cost, policy_of(DecodePolicyKind::kGreedy));
  b.add_running(make(1, 64, 100));   // 4 pages, full
  b.add_running(make(2, 128, 100));  // 8 pages, full
  b.enqueue(make(3, 16, 5));
  const auto plan = b.plan_step();
  EXPECT_EQ(plan.victims, std::vector<RequestId>{2});
  EXPECT_EQ(plan.swap_out_pages, 8);
  EXPECT_EQ(plan.batch_size, 1u);
  ASSERT_EQ(b.waiting().size(), 2u);
  EXPECT_EQ(b.waiting().front().req.id, 2u);
  EXPECT_EQ(b.waiting().front().swaps, 1);
  EXPECT_LE(b.store().used(), b.store().capacity());
}

TEST(DecodeStep, LoneRequestThatCannotGrowThrows) {
  const cost::CostModel cost(small_memory(2));
  DecodeBatcher b(cost, policy_of(DecodePolicyKind::kGreedy));
  b.add_running(make(1, 32, 10));
  EXPECT_THROW(b.plan_step(), InvariantViolation);
}

TEST(DecodeInstance, IterationLatencyFormula) {
  sim::Engine e;
  const cost::CostModel cost({});
  DecodeInstance d(1, e, cost, policy_of(DecodePolicyKind::kGreedy), {});
  d.preload(make(1, 100, 3));
  d.preload(make(2, 200, 3));
  e.run_until(kForever);
  ASSERT_EQ(d.iterations().size(), 3u);
  const auto& first = d.iterations()[0];
  EXPECT_EQ(first.batch_size, 2u);
  EXPECT_EQ(first.kv_tokens, 300);
  EXPECT_EQ(first.latency, cost::to_sim_time(2'000.0 + 2 * 150.0 + 300 * 0.18));
  EXPECT_TRUE(d.drained());
}

TEST(DecodeInstance, LoadCountsAnnouncedRequests) {
  sim::Engine e;
  const cost::CostModel cost(small_memory(100));
  DecodeInstance d(3, e, cost, policy_of(DecodePolicyKind::kGreedy), {});
  Request heavy;
  heavy.id = 1;
  heavy.prompt_len = 160;
  heavy.decode_len = 400;
  Request light = heavy;
  light.id = 2;
  light.decode_len = 20;
  d.announce(heavy, {2, 200});
  d.announce(light, {0, 200});
  const auto l = d.load(0);
  EXPECT_EQ(l.id, 3);
  EXPECT_EQ(l.heavy, 1);
  EXPECT_EQ(l.light, 1);
  EXPECT_EQ(l.free_kv_tokens, (100 - 20) * 16);
  EXPECT_THROW(d.receive_kv(9), InvariantViolation);
}

TEST(DecodeInstance, CompletionHookSeesEveryRequest) {
  sim::Engine e;
  const cost::CostModel cost({});
  std::vector<RequestId> done;
  DecodeInstance::Hooks hooks;
  hooks.on_complete = [&](const DecodingRequest& r, SimTime) { done.push_back(r.req.id); };
  DecodeInstance d(1, e, cost, policy_of(DecodePolicyKind::kReserveDynamic), hooks);
  for (RequestId i = 0; i < 5; ++i) {
    Request r;
    r.id = i;
    r.prompt_len = 50;
    r.decode_len = 5 + 3 * static_cast<std::int32_t>(i);
    d.announce(r, {0, 200});
    e.schedule(static_cast<SimTime>(i) * 1000, 1, "kv", [&d, i] { d.receive_kv(i); });
  }
  e.run_until(kForever);
  EXPECT_EQ(done.size(), 5u);
}

TEST(CoupledBaseline, MatchesGreedyDecodeOnSameResidentSet) {
  const cost::CostModel cost(small_memory(20));
  std::vector<DecodingRequest> set;
  sim::RngStream rng(5, "resident");
  for (RequestId i = 0; i < 8; ++i) {
    set.push_back(make(i, 10 + static_cast<std::int32_t>(rng.below(21)),
                       30 + static_cast<std::int32_t>(rng.below(61))));
  }
  sim::Engine e1, e2;
  DecodeInstance d(1, e1, cost, policy_of(DecodePolicyKind::kGreedy), {});
  baseline::CoupledConfig cfg;
  cfg.max_batch.reset();
  baseline::CoupledInstance c(1, e2, cost, cfg, {});
  for (const auto& r : set) {
    d.preload(r);
    c.preload(r);
  }
  e1.run_until(kForever);
  e2.run_until(kForever);
  ASSERT_FALSE(d.iterations().empty());
  EXPECT_EQ(d.iterations(), c.iterations());
  EXPECT_GT(d.stats().swap_outs, 0u);
}

TEST(CoupledBaseline, PromptJoiningDecodesInflatesIteration) {
  sim::Engine e;
  const cost::CostModel cost({});
  baseline::CoupledInstance c(1, e, cost, {}, {});
  for (RequestId i = 0; i < 8; ++i) c.preload(make(i, 40, 50));
  Request p;
  p.id = 100;
  p.prompt_len = 512;
  p.decode_len = 10;
  c.enqueue(p);
  e.run_until(kForever);
  const auto& it = c.iterations();
  ASSERT_GE(it.size(), 2u);
  EXPECT_EQ(it[0].prefill_tokens, 512);
  EXPECT_EQ(it[0].latency, cost.mixed_iter_latency(512, 1, 8, 8 * 40));
  EXPECT_EQ(it[1].prefill_tokens, 0);
  EXPECT_GE(it[0].latency, 3 * it[1].latency);
}

TEST(CoupledBaseline, EmptySystemSchedulesNothing) {
  sim::Engine e;
  const cost::CostModel cost({});
  baseline::CoupledInstance c(1, e, cost, {}, {});
  EXPECT_EQ(e.pending(), 0u);
  EXPECT_TRUE(c.drained());
}

namespace {

std::vector<Request> overcommitted(std::uint64_t seed, std::size_t n) {
  workload::WorkloadSpec w;
  w.cls = workload::WorkloadClass::kLPHD;
  w.n_requests = n;
  w.lengths.heavy_decode = {std::log(900.0), 0.1, 129, 2000};
  sim::RngStream rng(seed, "workload");
  return workload::generate(w, rng);
}

exp::DecodeBenchResult bench(const std::vector<Request>& reqs, DecodePolicy p, double acc,
                             std::uint64_t seed, cost::CostModelParams params = {}) {
  prefill::PredictorModel m;
  m.accuracy = acc;
  return exp::run_decode_bench(reqs, params, p, m, seed);
}

}  // namespace

TEST(DecodePolicies, StaticUpperBoundNeverSwapsWithOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto reqs = overcommitted(seed, 200);
    const auto r = bench(reqs, policy_of(DecodePolicyKind::kReserveStatic, ReserveBound::kUpper),
                         1.0, seed);
    EXPECT_EQ(r.swap_outs, 0u) << "seed " << seed;
    EXPECT_EQ(r.completed, reqs.size());
  }
}

TEST(DecodePolicies, GreedySwapsOnOvercommittedWorkload) {
  const auto reqs = overcommitted(1, 256);
  const auto r = bench(reqs, policy_of(DecodePolicyKind::kGreedy), 1.0, 1);
  EXPECT_GT(r.swap_outs, 0u);
  EXPECT_LE(r.max_resident_pages, r.capacity_pages);
}

TEST(DecodePolicies, DynamicWithOracleAvoidsSwaps) {
  const auto reqs = overcommitted(1, 256);
  const auto r = bench(reqs, policy_of(DecodePolicyKind::kReserveDynamic), 1.0, 1);
  EXPECT_EQ(r.swap_outs, 0u);
}

TEST(DecodePolicies, ResidentPagesNeverExceedCapacity) {
  for (auto k : {DecodePolicyKind::kGreedy, DecodePolicyKind::kReserveStatic,
                 DecodePolicyKind::kReserveDynamic}) {
    const auto r = bench(overcommitted(2, 256), policy_of(k), 0.749, 2);
    EXPECT_LE(r.max_resident_pages, r.capacity_pages) << to_string(k);
  }
}

}  // namespace pdsim::decode
