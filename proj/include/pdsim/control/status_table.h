#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "pdsim/workload/request.h"

namespace pdsim::control {

// Lifecycle of one request as seen by the control plane. Times are -1
// until the event happens.
struct RequestRow {
  RequestId id = 0;
  SimTime arrival = 0;
  std::int32_t prompt_len = 0;
  std::int32_t decode_len = 0;
  std::optional<SimTime> sla;
  Phase phase = Phase::kQueued;
  InstanceId prefill_instance = kNoInstance;
  InstanceId decode_instance = kNoInstance;
  SimTime prefill_start = -1;
  SimTime first_token = -1;
  SimTime decode_start = -1;
  SimTime completion = -1;
  std::int32_t predicted_bucket = -1;
  std::int32_t swaps = 0;
  bool rerouted = false;

  bool done() const { return completion >= 0; }
  SimTime ttft() const { return first_token - arrival; }
  SimTime jct() const { return completion - arrival; }
  SimTime prefill_wait() const { return prefill_start - arrival; }
};

class RequestStatusTable {
 public:
  // Throws InvariantViolation on a duplicate id.
  void insert(const Request& req);

  RequestRow& at(RequestId id);
  const RequestRow& at(RequestId id) const;
  bool contains(RequestId id) const { return rows_.contains(id); }

  void advance(RequestId id, Phase phase);
  // Finalizes the row. Throws InvariantViolation on a second completion or
  // if the first token was never recorded.
  void complete(RequestId id, SimTime t, std::int32_t swaps);

  std::size_t size() const { return rows_.size(); }
  std::size_t completed() const { return completed_; }
  // Rows ordered by id.
  std::vector<RequestRow> rows() const;

 private:
  std::map<RequestId, RequestRow> rows_;
  std::size_t completed_ = 0;
};

}  // namespace pdsim::control
