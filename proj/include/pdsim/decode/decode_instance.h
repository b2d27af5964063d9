#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pdsim/control/load.h"
#include "pdsim/cost/cost_model.h"
#include "pdsim/decode/kv_store.h"
#include "pdsim/prefill/predictor.h"
#include "pdsim/sim/engine.h"

namespace pdsim::decode {

using prefill::LengthBucket;

enum class DecodePolicyKind { kGreedy, kReserveStatic, kReserveDynamic };

std::string_view to_string(DecodePolicyKind k);
DecodePolicyKind parse_decode_policy(std::string_view s);

// Which end of the predicted range the reserve policies charge.
enum class ReserveBound { kLower, kUpper };

struct DecodePolicy {
  DecodePolicyKind kind = DecodePolicyKind::kReserveDynamic;
  std::optional<std::int32_t> max_batch;
  ReserveBound bound = ReserveBound::kLower;

  void validate() const;
};

struct DecodingRequest {
  Request req;
  LengthBucket bucket;
  std::int32_t generated = 0;
  std::int32_t swaps = 0;
  bool started = false;

  std::int64_t kv_tokens() const { return req.prompt_len + generated; }
  bool done() const { return generated >= req.decode_len; }
};

struct AdmitResult {
  std::vector<RequestId> admitted;  // in admission order
  std::vector<RequestId> first_admissions;
  std::int64_t swap_in_pages = 0;
  std::size_t swap_ins = 0;
};

struct StepPlan {
  std::size_t batch_size = 0;
  std::int64_t kv_tokens = 0;  // before this step's token
  std::vector<RequestId> victims;
  std::int64_t swap_out_pages = 0;
};

struct IterationRecord {
  SimTime start = 0;
  SimTime latency = 0;
  std::size_t batch_size = 0;
  std::int64_t kv_tokens = 0;
  std::size_t admitted = 0;
  std::size_t completed = 0;
  std::size_t swap_ins = 0;
  std::size_t swap_outs = 0;
  std::int64_t swap_pages = 0;
  std::int64_t resident_pages = 0;  // after this step's allocation
  // Prefill work folded into the iteration (coupled baseline only).
  std::int64_t prefill_tokens = 0;
  std::size_t prefill_requests = 0;

  bool operator==(const IterationRecord&) const = default;
};

// Continuous-batching core shared by decode instances and the coupled
// baseline: admission queue, running batch and paged memory. Time-free; the
// owning actor charges latencies.
class DecodeBatcher {
 public:
  DecodeBatcher(const cost::CostModel& cost, DecodePolicy policy);

  // Appends a request whose KV is available to the admission queue.
  void enqueue(DecodingRequest r);
  // Places a request straight into the running batch with its current KV
  // resident. Throws InvariantViolation if it does not fit.
  void add_running(DecodingRequest r);

  // Admits from the head of the queue in FIFO order while the policy allows.
  // Swapped-out requests sit at the head and pay the swap-in.
  AdmitResult admit();
  // Allocates one more token for every running request, evicting the
  // largest residents while memory is short. Throws InvariantViolation when
  // a lone request cannot grow.
  StepPlan plan_step();
  // Every running request generates one token; finished ones release their
  // pages and are returned.
  std::vector<DecodingRequest> complete_step();

  // Policy check for the request at the head of the queue.
  bool admissible(const DecodingRequest& r) const;
  std::int64_t pages_for_next_token(const DecodingRequest& r) const;
  std::int64_t requirement_pages(const DecodingRequest& r) const;
  std::int32_t bound_tokens(const DecodingRequest& r) const;
  // capacity - sum over running of max(held, reservation).
  std::int64_t reserved_free_pages() const;
  // Free pages once the shortest predicted-remaining job finishes, charging
  // every running job for the tokens generated until then.
  std::int64_t projected_free_pages() const;

  const PagedKvStore& store() const { return store_; }
  PagedKvStore& store() { return store_; }
  const std::deque<DecodingRequest>& waiting() const { return waiting_; }
  const std::vector<DecodingRequest>& running() const { return running_; }
  const DecodePolicy& policy() const { return policy_; }
  const cost::CostModel& cost() const { return *cost_; }
  bool batch_full() const;
  std::int64_t waiting_pages() const;

 private:
  const cost::CostModel* cost_;
  DecodePolicy policy_;
  PagedKvStore store_;
  std::deque<DecodingRequest> waiting_;
  std::vector<DecodingRequest> running_;
};

struct DecodeStats {
  std::uint64_t iterations = 0;
  std::uint64_t swap_outs = 0;
  std::uint64_t swap_ins = 0;
  std::uint64_t completed = 0;
  std::uint64_t true_heavy = 0;
  std::uint64_t predicted_heavy = 0;
  std::int64_t max_resident_pages = 0;
  SimTime first_start = -1;
  SimTime last_end = -1;
};

// Decode-only instance: receives prefilled KV, runs the continuous-batching
// loop and reports completions.
class DecodeInstance {
 public:
  struct Hooks {
    std::function<void(RequestId, SimTime)> on_decode_start;
    std::function<void(const DecodingRequest&, SimTime)> on_complete;
    std::function<void(SimTime start, SimTime end)> on_busy;
    std::function<void()> on_drained;
  };

  DecodeInstance(InstanceId id, sim::Engine& engine,
                 const cost::CostModel& cost, DecodePolicy policy, Hooks hooks);

  // Request metadata arrives when the transfer starts; the KV follows.
  void announce(const Request& req, LengthBucket bucket);
  void receive_kv(RequestId id);
  // Metadata of a request announced here that will not arrive after all.
  void withdraw(RequestId id);
  // Starts `r` resident and running, bypassing admission. Test scaffolding
  // for comparing iteration traces from a known resident set.
  void preload(DecodingRequest r);

  InstanceId id() const { return id_; }
  bool busy() const { return iterating_; }
  bool drained() const;
  InstanceLoad load(SimTime now) const;

  const DecodeStats& stats() const { return stats_; }
  const std::vector<IterationRecord>& iterations() const { return records_; }
  const DecodeBatcher& batcher() const { return batcher_; }
  void keep_iteration_records(bool on) { keep_records_ = on; }

 private:
  void kick();
  void boundary();
  void on_iteration_done();

  InstanceId id_;
  sim::Engine* engine_;
  const cost::CostModel* cost_;
  DecodeBatcher batcher_;
  Hooks hooks_;
  std::unordered_map<RequestId, DecodingRequest> incoming_;
  bool iterating_ = false;
  bool kick_pending_ = false;
  bool keep_records_ = true;
  SimTime iter_start_ = 0;
  IterationRecord current_;
  DecodeStats stats_;
  std::vector<IterationRecord> records_;
};

}  // namespace pdsim::decode
