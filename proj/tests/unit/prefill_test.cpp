#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <numeric>
#include <vector>

#include "pdsim/prefill/chunker.h"
#include "pdsim/prefill/dispatcher.h"
#include "pdsim/prefill/predictor.h"
#include "pdsim/prefill/scheduler.h"
#include "pdsim/sim/rng.h"

namespace pdsim::prefill {
namespace {

std::deque<QueuedPrompt> raw_of(std::vector<std::int32_t> lens) {
  std::deque<QueuedPrompt> raw;
  for (std::size_t i = 0; i < lens.size(); ++i) {
    raw.push_back({static_cast<RequestId>(i + 1), static_cast<SimTime>(i), lens[i]});
  }
  return raw;
}

std::vector<RequestId> ids(const std::vector<QueuedPrompt>& q) {
  std::vector<RequestId> out;
  for (const auto& p : q) out.push_back(p.id);
  return out;
}

InstanceLoad decode_load(InstanceId id, int heavy, int light, std::int64_t used = 0) {
  InstanceLoad l;
  l.id = id;
  l.role = Role::kDecode;
  l.heavy = heavy;
  l.light = light;
  l.used_kv_tokens = used;
  l.free_kv_tokens = 100'000 - used;
  return l;
}

}  // namespace

TEST(Scheduler, FcfsKeepsArrivalOrder) {
  auto raw = raw_of({300, 18, 512});
  std::vector<QueuedPrompt> sched;
  sort_raw_queue({PrefillOrder::kFCFS, 16}, raw, sched);
  EXPECT_EQ(ids(sched), (std::vector<RequestId>{1, 2, 3}));
}

TEST(Scheduler, SjfSortsByPromptLength) {
  auto raw = raw_of({300, 18, 512});
  std::vector<QueuedPrompt> sched;
  EXPECT_EQ(sort_raw_queue({PrefillOrder::kSJF, 16}, raw, sched), 3u);
  EXPECT_EQ(ids(sched), (std::vector<RequestId>{2, 1, 3}));
  EXPECT_TRUE(raw.empty());
}

TEST(Scheduler, LjfSortsLongestFirst) {
  auto raw = raw_of({300, 18, 512});
  std::vector<QueuedPrompt> sched;
  sort_raw_queue({PrefillOrder::kLJF, 16}, raw, sched);
  EXPECT_EQ(ids(sched), (std::vector<RequestId>{3, 1, 2}));
}

TEST(Scheduler, SchedBatchBoundsOvertaking) {
  auto raw = raw_of({300, 100, 5});
  std::vector<QueuedPrompt> sched;
  EXPECT_EQ(sort_raw_queue({PrefillOrder::kSJF, 2}, raw, sched), 2u);
  EXPECT_EQ(ids(sched), (std::vector<RequestId>{2, 1}));
  ASSERT_EQ(raw.size(), 1u);
  EXPECT_EQ(raw.front().id, 3u);
}

TEST(Scheduler, TiesBreakByArrival) {
  auto raw = raw_of({50, 50, 50});
  std::vector<QueuedPrompt> sched;
  sort_raw_queue({PrefillOrder::kSJF, 16}, raw, sched);
  EXPECT_EQ(ids(sched), (std::vector<RequestId>{1, 2, 3}));
}

TEST(Scheduler, InvalidBatchRejected) {
  EXPECT_THROW((PrefillPolicy{PrefillOrder::kSJF, 0}.validate()), ConfigError);
}

TEST(Chunker, SlicesAndPads) {
  const std::vector<QueuedPrompt> q{{1, 0, 18}, {2, 0, 100}, {3, 0, 512}, {4, 0, 900}};
  const auto chunks = chunkify(q, 512);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].slices,
            (std::vector<Slice>{{1, 0, 18}, {2, 0, 100}, {3, 0, 394}}));
  EXPECT_EQ(chunks[0].padded, 0);
  EXPECT_EQ(chunks[2].padded, 6);
  EXPECT_EQ(chunks[2].real_tokens(), 506);
}

TEST(Chunker, ExactChunkHasNoPadding) {
  const std::vector<QueuedPrompt> q{{1, 0, 512}};
  const auto chunks = chunkify(q, 512);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].padded, 0);
}

TEST(Chunker, OneTokenPromptPadsTheRest) {
  const std::vector<QueuedPrompt> q{{1, 0, 1}};
  const auto chunks = chunkify(q, 512);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].padded, 511);
}

TEST(Chunker, EveryTokenCoveredOnceInOrder) {
  sim::RngStream rng(12, "chunker");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<QueuedPrompt> q;
    const auto n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      q.push_back({static_cast<RequestId>(i), 0, static_cast<std::int32_t>(1 + rng.below(2000))});
    }
    const auto chunk_size = static_cast<std::int32_t>(1 + rng.below(1024));
    const auto chunks = chunkify(q, chunk_size);
    std::vector<std::int32_t> cursor(n, 0);
    for (const auto& c : chunks) {
      EXPECT_EQ(c.real_tokens() + c.padded, chunk_size);
      for (const auto& s : c.slices) {
        ASSERT_EQ(s.start, cursor[s.id]);
        cursor[s.id] += s.len;
      }
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(cursor[i], q[i].prompt_len);
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) EXPECT_EQ(chunks[i].padded, 0);
  }
}

TEST(Predictor, BucketRangesAreHalfOpen) {
  EXPECT_EQ(true_bucket(130, 200).index, 0);
  EXPECT_EQ(true_bucket(200, 200).index, 1);
  EXPECT_EQ(true_bucket(199, 200).upper(), 200);
  EXPECT_FALSE(true_bucket(130, 200).heavy());
  EXPECT_TRUE(true_bucket(200, 200).heavy());
}

TEST(Predictor, OracleAccuracyReturnsTruth) {
  PredictorModel m;
  m.accuracy = 1.0;
  sim::RngStream rng(1, "predictor/1");
  LengthPredictor p(m, rng);
  Request r;
  r.id = 1;
  r.decode_len = 130;
  EXPECT_EQ(p.predict(r).index, 0);
  r.id = 2;
  r.decode_len = 200;
  EXPECT_EQ(p.predict(r).index, 1);
}

TEST(Predictor, MeasuredAccuracyMatchesConfigured) {
  PredictorModel m;
  m.accuracy = 0.749;
  sim::RngStream rng(2, "predictor/1");
  sim::RngStream lens(3, "lengths");
  LengthPredictor p(m, rng);
  for (RequestId i = 0; i < 100'000; ++i) {
    Request r;
    r.id = i;
    r.decode_len = static_cast<std::int32_t>(1 + lens.below(2048));
    const auto b = p.predict(r);
    ASSERT_GE(b.index, 0);
    ASSERT_LE(b.index, m.max_bucket());
  }
  EXPECT_NEAR(static_cast<double>(p.correct()) / p.predictions(), 0.749, 0.005);
}

TEST(Predictor, PredictionIsMemoized) {
  PredictorModel m;
  m.accuracy = 0.1;
  sim::RngStream rng(4, "predictor/1");
  LengthPredictor p(m, rng);
  Request r;
  r.id = 9;
  r.decode_len = 700;
  const auto first = p.predict(r);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(p.predict(r), first);
  EXPECT_EQ(p.predictions(), 1u);
}

TEST(Predictor, DefaultAccuracyByGranularity) {
  EXPECT_DOUBLE_EQ(PredictorModel::default_accuracy(100), 0.589);
  EXPECT_DOUBLE_EQ(PredictorModel::default_accuracy(200), 0.749);
  EXPECT_DOUBLE_EQ(PredictorModel::default_accuracy(400), 0.85);
  EXPECT_THROW(PredictorModel::default_accuracy(300), ConfigError);
}

TEST(Dispatch, SingleInstanceAlwaysChosen) {
  sim::RngStream rng(1, "dispatcher/1");
  const std::vector<InstanceLoad> loads{decode_load(5, 40, 0, 99'000)};
  Request r;
  r.prompt_len = 500;
  const auto d = choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {3, 200}, loads, rng);
  EXPECT_EQ(d.chosen, 5);
}

TEST(Dispatch, HeavyGoesToLowerRatio) {
  // A: 3 heavy / 1 light, B: 1 heavy / 3 light; after a heavy arrives, 4:1 vs 2:3.
  sim::RngStream rng(1, "dispatcher/1");
  const std::vector<InstanceLoad> loads{decode_load(1, 3, 1), decode_load(2, 1, 3)};
  Request r;
  r.prompt_len = 20;
  const auto d = choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {2, 200}, loads, rng);
  EXPECT_EQ(d.chosen, 2);
  EXPECT_EQ(d.candidates.size(), 2u);
}

TEST(Dispatch, LightGoesToLowerRatioAfterAcceptance) {
  sim::RngStream rng(1, "dispatcher/1");
  const std::vector<InstanceLoad> loads{decode_load(1, 3, 1), decode_load(2, 1, 3)};
  Request r;
  r.prompt_len = 20;
  const auto d = choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {0, 200}, loads, rng);
  // light after acceptance: 3:2 vs 1:4
  EXPECT_EQ(d.chosen, 2);
}

TEST(Dispatch, HeavySpreadsByHeavyCountFirst) {
  // The ratio alone would pick the big instance: 5:8 vs 2:1 after acceptance.
  sim::RngStream rng(1, "dispatcher/1");
  const std::vector<InstanceLoad> loads{decode_load(1, 4, 8), decode_load(2, 1, 1)};
  Request r;
  r.prompt_len = 20;
  const auto d = choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {4, 200}, loads, rng);
  EXPECT_EQ(d.chosen, 2);
}

TEST(Dispatch, TieBreaksByKvUsageThenId) {
  sim::RngStream rng(1, "dispatcher/1");
  Request r;
  r.prompt_len = 20;
  std::vector<InstanceLoad> loads{decode_load(1, 1, 1, 500), decode_load(2, 1, 1, 100)};
  EXPECT_EQ(choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {0, 200}, loads, rng).chosen, 2);
  loads[1].used_kv_tokens = 500;
  EXPECT_EQ(choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {0, 200}, loads, rng).chosen, 1);
}

TEST(Dispatch, AlphaSetExcludesInstancesWithoutRoom) {
  sim::RngStream rng(1, "dispatcher/1");
  std::vector<InstanceLoad> loads{decode_load(1, 0, 0), decode_load(2, 9, 0), decode_load(3, 0, 5)};
  loads[0].free_kv_tokens = 100;  // needs upper 400 + prompt 20
  Request r;
  r.prompt_len = 20;
  for (int i = 0; i < 50; ++i) {
    const auto d = choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {1, 200}, loads, rng);
    EXPECT_EQ(d.alpha_size, 2u);
    EXPECT_NE(d.chosen, 1);
  }
}

TEST(Dispatch, EmptyAlphaFallsBackToLeastLoaded) {
  sim::RngStream rng(1, "dispatcher/1");
  std::vector<InstanceLoad> loads{decode_load(1, 0, 0, 900), decode_load(2, 0, 0, 300)};
  for (auto& l : loads) l.free_kv_tokens = 10;
  Request r;
  r.prompt_len = 20;
  const auto d = choose_decode_instance(DispatchPolicy::kPowerOfTwo, r, {0, 200}, loads, rng);
  EXPECT_TRUE(d.fallback);
  EXPECT_EQ(d.chosen, 2);
}

TEST(Dispatch, ImbalanceSendsEveryHeavyToOneInstance) {
  sim::RngStream rng(1, "dispatcher/1");
  std::vector<InstanceLoad> loads{decode_load(1, 0, 0), decode_load(2, 0, 0), decode_load(3, 0, 0)};
  Request r;
  r.prompt_len = 20;
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(choose_decode_instance(DispatchPolicy::kImbalance, r, {3, 200}, loads, rng).chosen, 1);
    EXPECT_NE(choose_decode_instance(DispatchPolicy::kImbalance, r, {0, 200}, loads, rng).chosen, 1);
  }
}

TEST(Dispatch, PowerOfTwoSpreadsHeavierThanImbalance) {
  // 32 requests per instance over 4 instances, every seed.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    sim::RngStream wl(seed, "lengths");
    std::vector<std::pair<Request, LengthBucket>> reqs;
    for (RequestId i = 0; i < 128; ++i) {
      Request r;
      r.id = i;
      r.prompt_len = static_cast<std::int32_t>(1 + wl.below(200));
      const bool heavy = wl.bernoulli(0.5);
      reqs.push_back({r, LengthBucket{heavy ? 2 : 0, 200}});
    }
    auto max_heavy = [&](DispatchPolicy policy) {
      sim::RngStream rng(seed, "dispatcher/1");
      Dispatcher d(policy, rng);
      LoadSnapshot snap;
      for (InstanceId id = 1; id <= 4; ++id) snap.push_back(decode_load(id, 0, 0));
      d.update_snapshot(snap);
      std::vector<int> heavy(5, 0);
      for (const auto& [r, b] : reqs) {
        const auto dec = d.dispatch(r, b);
        if (b.heavy()) ++heavy[dec->chosen];
      }
      return *std::max_element(heavy.begin(), heavy.end());
    };
    EXPECT_LT(max_heavy(DispatchPolicy::kPowerOfTwo), max_heavy(DispatchPolicy::kImbalance))
        << "seed " << seed;
  }
}

TEST(Dispatcher, NoSnapshotMeansPark) {
  sim::RngStream rng(1, "dispatcher/1");
  Dispatcher d(DispatchPolicy::kPowerOfTwo, rng);
  Request r;
  EXPECT_FALSE(d.dispatch(r, {0, 200}).has_value());
}

TEST(Dispatcher, ExcludedInstanceNeverChosen) {
  sim::RngStream rng(1, "dispatcher/1");
  Dispatcher d(DispatchPolicy::kRandom, rng);
  d.update_snapshot({decode_load(1, 0, 0), decode_load(2, 0, 0)});
  d.exclude(1);
  Request r;
  for (int i = 0; i < 30; ++i) EXPECT_EQ(d.dispatch(r, {0, 200})->chosen, 2);
  d.exclude(2);
  EXPECT_FALSE(d.dispatch(r, {0, 200}).has_value());
}

}  // namespace pdsim::prefill
