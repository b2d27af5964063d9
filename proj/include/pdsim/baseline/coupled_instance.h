#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "pdsim/cost/cost_model.h"
#include "pdsim/decode/decode_instance.h"
#include "pdsim/sim/engine.h"

namespace pdsim::baseline {

using decode::DecodingRequest;
using decode::IterationRecord;

struct CoupledConfig {
  // Prompts admitted per iteration.
  std::int32_t prefill_batch = 16;
  // Cap on sequences in flight (running plus admitted prompts), the way
  // max_num_seqs bounds a vLLM engine.
  std::optional<std::int32_t> max_batch = 16;

  void validate() const;
};

struct CoupledStats {
  std::uint64_t iterations = 0;
  std::uint64_t mixed_iterations = 0;
  std::uint64_t swap_outs = 0;
  std::uint64_t swap_ins = 0;
  std::uint64_t completed = 0;
  std::int64_t max_resident_pages = 0;
  SimTime first_start = -1;
  SimTime last_end = -1;
};

// Prefill and decode on one engine: every iteration may prefill whole
// prompts alongside the running decode batch. Greedy memory admission.
class CoupledInstance {
 public:
  struct Hooks {
    std::function<void(RequestId, SimTime)> on_prefill_start;
    std::function<void(RequestId, SimTime)> on_first_token;
    std::function<void(const DecodingRequest&, SimTime)> on_complete;
    std::function<void(SimTime start, SimTime end)> on_busy;
  };

  CoupledInstance(InstanceId id, sim::Engine& engine, const cost::CostModel& cost,
                  CoupledConfig config, Hooks hooks);

  void enqueue(const Request& req);
  // Starts `r` resident and decoding, bypassing admission.
  void preload(DecodingRequest r);

  InstanceId id() const { return id_; }
  bool busy() const { return iterating_; }
  bool drained() const;
  std::size_t queued() const { return prompts_.size(); }
  std::int64_t queued_prompt_tokens() const { return queued_tokens_; }

  const CoupledStats& stats() const { return stats_; }
  const std::vector<IterationRecord>& iterations() const { return records_; }
  const decode::DecodeBatcher& batcher() const { return batcher_; }
  void keep_iteration_records(bool on) { keep_records_ = on; }

 private:
  void kick();
  void boundary();
  void on_iteration_done();

  InstanceId id_;
  sim::Engine* engine_;
  const cost::CostModel* cost_;
  CoupledConfig config_;
  decode::DecodeBatcher batcher_;
  Hooks hooks_;
  std::deque<Request> prompts_;
  std::vector<Request> prefilling_;
  std::int64_t queued_tokens_ = 0;
  bool iterating_ = false;
  bool kick_pending_ = false;
  bool keep_records_ = true;
  SimTime iter_start_ = 0;
  IterationRecord current_;
  CoupledStats stats_;
  std::vector<IterationRecord> records_;
};

}  // namespace pdsim::baseline
