#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "pdsim/control/load.h"
#include "pdsim/cost/cost_model.h"
#include "pdsim/prefill/chunker.h"
#include "pdsim/prefill/dispatcher.h"
#include "pdsim/prefill/predictor.h"
#include "pdsim/prefill/scheduler.h"
#include "pdsim/sim/engine.h"

namespace pdsim::prefill {

struct PrefillConfig {
  PrefillPolicy policy;
  PredictorModel predictor;
  DispatchPolicy dispatch = DispatchPolicy::kPowerOfTwo;
};

struct PrefillStats {
  std::uint64_t rounds = 0;
  std::uint64_t chunks = 0;
  std::uint64_t pad_tokens = 0;
  std::uint64_t real_tokens = 0;
  std::size_t max_raw_depth = 0;
  std::uint64_t parked_dispatches = 0;
  std::uint64_t fallback_dispatches = 0;
};

// One dispatcher decision, kept for metrics.
struct DispatchLogEntry {
  SimTime t = 0;
  RequestId request = 0;
  DispatchDecision decision;
};

// Prefill-only instance: raw and scheduled queues, chunked execution, the
// length predictor and the decode dispatcher.
class PrefillInstance {
 public:
  struct Hooks {
    // First chunk containing the request starts executing.
    std::function<void(RequestId, SimTime)> on_prefill_start;
    // Final chunk of the request finished: the first token exists.
    std::function<void(RequestId, SimTime, LengthBucket)> on_first_token;
    // Dispatcher picked `dst`; the caller starts the KV transfer.
    std::function<void(const Request&, LengthBucket, InstanceId dst)> send_kv;
    std::function<void(SimTime start, SimTime end)> on_busy;
    // Raw, scheduled and parked queues are all empty and nothing runs.
    std::function<void()> on_drained;
  };

  PrefillInstance(InstanceId id, sim::Engine& engine,
                  const cost::CostModel& cost, PrefillConfig config,
                  sim::RngStream& predictor_rng, sim::RngStream& dispatch_rng,
                  Hooks hooks);

  void enqueue(const Request& req);
  void receive_broadcast(LoadSnapshot snapshot);
  void exclude_decode(InstanceId id) { dispatcher_.exclude(id); }
  // Re-dispatches a request whose transfer target stopped being a decode
  // instance. The KV is already prefilled.
  void redispatch(const Request& req, LengthBucket bucket);

  InstanceId id() const { return id_; }
  bool busy() const { return running_; }
  bool drained() const;
  std::int64_t queued_prompt_tokens() const { return queued_tokens_; }
  InstanceLoad load(SimTime now) const;

  const PrefillStats& stats() const { return stats_; }
  const std::vector<DispatchLogEntry>& dispatch_log() const { return log_; }
  const LengthPredictor& predictor() const { return predictor_; }

 private:
  void kick();
  void start_round();
  void run_next_chunk();
  void on_chunk_done(std::size_t chunk_index);
  void dispatch_or_park(const Request& req, LengthBucket bucket);

  InstanceId id_;
  sim::Engine* engine_;
  const cost::CostModel* cost_;
  PrefillConfig config_;
  LengthPredictor predictor_;
  Dispatcher dispatcher_;
  Hooks hooks_;

  std::deque<QueuedPrompt> raw_;
  std::unordered_map<RequestId, Request> requests_;
  std::vector<QueuedPrompt> round_;
  std::vector<Chunk> chunks_;
  std::size_t next_chunk_ = 0;
  std::unordered_map<RequestId, std::int32_t> cursor_;
  std::vector<std::pair<Request, LengthBucket>> parked_;
  std::int64_t queued_tokens_ = 0;
  bool running_ = false;
  bool kick_pending_ = false;
  SimTime chunk_start_ = 0;

  PrefillStats stats_;
  std::vector<DispatchLogEntry> log_;
};

}  // namespace pdsim::prefill
