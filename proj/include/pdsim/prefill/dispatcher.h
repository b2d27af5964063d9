#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pdsim/control/load.h"
#include "pdsim/prefill/predictor.h"
#include "pdsim/sim/rng.h"
#include "pdsim/workload/request.h"

namespace pdsim::prefill {

enum class DispatchPolicy {
  // alpha/beta split on free KV, power-of-two sampling from alpha, then the
  // candidate with fewer heavy decodes for a heavy request, otherwise the
  // smaller heavy:light ratio after acceptance.
  kPowerOfTwo,
  // Uniform over all decode instances.
  kRandom,
  // Worst case: every predicted-heavy request goes to the lowest-id decode
  // instance, light ones are spread uniformly over the others.
  kImbalance,
};

std::string_view to_string(DispatchPolicy p);
DispatchPolicy parse_dispatch_policy(std::string_view s);

struct DispatchDecision {
  InstanceId chosen = kNoInstance;
  std::vector<InstanceId> candidates;  // sampled instances, chosen included
  std::size_t alpha_size = 0;
  // alpha was empty and the least-loaded instance was used instead.
  bool fallback = false;
};

// Picks a decode instance for a prefilled request. `loads` must be
// non-empty and hold decode instances only.
DispatchDecision choose_decode_instance(DispatchPolicy policy,
                                        const Request& req,
                                        LengthBucket bucket,
                                        std::span<const InstanceLoad> loads,
                                        sim::RngStream& rng);

// Dispatcher state kept at one prefill instance: the last broadcast
// snapshot plus the effect of its own decisions since that broadcast, so
// back-to-back decisions between broadcasts do not all see the same view.
class Dispatcher {
 public:
  Dispatcher(DispatchPolicy policy, sim::RngStream& rng);

  void update_snapshot(LoadSnapshot snapshot);
  // A decode instance is about to flip; stop dispatching to it.
  void exclude(InstanceId id);

  // nullopt when no decode instance is known; the caller parks the request.
  std::optional<DispatchDecision> dispatch(const Request& req,
                                           LengthBucket bucket);

  DispatchPolicy policy() const { return policy_; }
  const LoadSnapshot& view() const { return view_; }
  SimTime snapshot_time() const { return snapshot_time_; }

 private:
  DispatchPolicy policy_;
  sim::RngStream* rng_;
  LoadSnapshot view_;
  SimTime snapshot_time_ = -1;
};

}  // namespace pdsim::prefill
