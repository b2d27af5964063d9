#pragma once

#include <deque>
#include <utility>

#include "pdsim/control/load.h"

namespace pdsim::control {

// Under-utilization trigger: flip an instance whose busy fraction stayed
// below `threshold` over the trailing `window`.
struct FlipPolicy {
  bool enabled = false;
  double threshold = 0.10;
  SimTime window = seconds(60);
  // Also require the other role to be busy on average, so an idle cluster
  // does not shuffle roles back and forth.
  bool require_target_demand = true;
  double demand_threshold = 0.5;
  SimTime min_latency = 5'000;
  SimTime max_latency = 7'000;

  void validate() const;
};

struct FlipRecord {
  InstanceId node = kNoInstance;
  Role from = Role::kPrefill;
  Role to = Role::kDecode;
  SimTime requested = -1;
  SimTime drained = -1;
  SimTime completed = -1;

  SimTime latency() const { return completed - drained; }
  bool done() const { return completed >= 0; }
};

// Busy time of one instance over a sliding window.
class UtilizationWindow {
 public:
  void add(SimTime start, SimTime end);
  // Busy fraction of [now - window, now].
  double utilization(SimTime now, SimTime window);
  void clear();

 private:
  std::deque<std::pair<SimTime, SimTime>> spans_;
  SimTime total_ = 0;
};

}  // namespace pdsim::control
