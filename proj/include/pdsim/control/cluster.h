#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "pdsim/control/flip.h"
#include "pdsim/control/load.h"
#include "pdsim/control/status_table.h"
#include "pdsim/cost/cost_model.h"
#include "pdsim/decode/decode_instance.h"
#include "pdsim/prefill/prefill_instance.h"
#include "pdsim/sim/engine.h"
#include "pdsim/sim/rng.h"

namespace pdsim::control {

// Work done by one instance while holding one role: the resource-time
// charge is last_end - first_start.
struct RoleSpan {
  InstanceId node = kNoInstance;
  Role role = Role::kPrefill;
  SimTime first_start = -1;
  SimTime last_end = -1;
  SimTime busy = 0;

  SimTime charged() const { return first_start < 0 ? 0 : last_end - first_start; }
};

// Sum of charged() over spans.
SimTime resource_usage(const std::vector<RoleSpan>& spans);

struct ClusterConfig {
  std::int32_t n_prefill = 1;
  std::int32_t n_decode = 1;
  prefill::PrefillConfig prefill;
  decode::DecodePolicy decode;
  FlipPolicy flip;
  SimTime monitor_period = ms(100);
  // Arrivals parked longer than this (no prefill instance) are flagged.
  SimTime park_limit = seconds(10);

  void validate() const;
};

struct ClusterCounters {
  std::uint64_t reroutes = 0;
  std::uint64_t parked_arrivals = 0;
  std::uint64_t overdue_parked = 0;
  std::uint64_t role_violations = 0;
  std::uint64_t broadcasts = 0;
  std::uint64_t ignored_flip_requests = 0;
};

// Disaggregated cluster: every node can act as a prefill or a decode
// instance; the control plane routes arrivals, runs the load monitor and
// flips roles.
class DisaggregatedCluster {
 public:
  enum class NodeState { kActive, kDraining, kFlipping };

  DisaggregatedCluster(sim::Engine& engine, const cost::CostModel& cost,
                       ClusterConfig config, sim::RngStreams& rngs,
                       RequestStatusTable& table);
  ~DisaggregatedCluster();

  // Schedules the first monitor tick at the current time. Call before
  // inject() so the first broadcast precedes same-time arrivals.
  void start();
  void inject(const std::vector<Request>& requests);

  // Starts draining `node` toward the other role. Ignored (and counted) if
  // the node is not active, a flip is under way, or it is the last active
  // instance of its role. Returns whether the flip started.
  bool request_flip(InstanceId node);

  bool finished() const;
  std::size_t node_count() const { return nodes_.size(); }
  Role role(InstanceId node) const;
  NodeState state(InstanceId node) const;
  // Ids of the first node, so callers can enumerate nodes.
  InstanceId first_id() const { return 1; }

  const std::vector<FlipRecord>& flips() const { return flips_; }
  const ClusterCounters& counters() const { return counters_; }
  // Closed role segments plus the open segment of every node.
  std::vector<RoleSpan> spans() const;
  const prefill::PrefillInstance& prefill_at(InstanceId node) const;
  const decode::DecodeInstance& decode_at(InstanceId node) const;
  const LoadSnapshot& last_snapshot() const { return last_snapshot_; }

 private:
  struct Node;
  struct Transfer {
    Request req;
    prefill::LengthBucket bucket;
    InstanceId src = kNoInstance;
    InstanceId dst = kNoInstance;
  };

  Node& node(InstanceId id);
  const Node& node(InstanceId id) const;
  void on_arrival(const Request& req);
  bool route(const Request& req);
  void monitor_tick();
  void evaluate_flips();
  void begin_flip(Node& n);
  void maybe_finish_drain(Node& n);
  void finish_flip(Node& n);
  void send_kv(InstanceId src, const Request& req, prefill::LengthBucket bucket,
               InstanceId dst);
  void on_kv_arrival(const Transfer& t);
  void on_busy(Node& n, Role role, SimTime start, SimTime end);
  void maybe_stop();

  sim::Engine* engine_;
  const cost::CostModel* cost_;
  ClusterConfig config_;
  sim::RngStreams* rngs_;
  RequestStatusTable* table_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::deque<std::pair<Request, SimTime>> parked_;
  std::size_t injected_ = 0;
  std::size_t arrived_ = 0;
  bool flip_in_progress_ = false;
  bool started_ = false;
  std::optional<sim::EventHandle> tick_;
  LoadSnapshot last_snapshot_;
  std::vector<FlipRecord> flips_;
  std::vector<RoleSpan> closed_spans_;
  ClusterCounters counters_;
};

}  // namespace pdsim::control
