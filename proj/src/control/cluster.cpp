#include "pdsim/control/cluster.h"

#include <algorithm>
#include <string>

namespace pdsim::control {

SimTime resource_usage(const std::vector<RoleSpan>& spans) {
  SimTime total = 0;
  for (const auto& s : spans) total += s.charged();
  return total;
}

void ClusterConfig::validate() const {
  if (n_prefill < 1) throw ConfigError("cluster.n_prefill", "need at least one prefill instance");
  if (n_decode < 1) throw ConfigError("cluster.n_decode", "need at least one decode instance");
  if (monitor_period <= 0) {
    throw ConfigError("cluster.monitor_period_us", "monitor period must be > 0");
  }
  if (park_limit < 0) throw ConfigError("cluster.park_limit_us", "park limit must be >= 0");
  prefill.policy.validate();
  prefill.predictor.validate();
  decode.validate();
  flip.validate();
}

struct DisaggregatedCluster::Node {
  InstanceId id = kNoInstance;
  Role role = Role::kPrefill;
  NodeState state = NodeState::kActive;
  SimTime role_since = 0;
  std::unique_ptr<prefill::PrefillInstance> prefill;
  std::unique_ptr<decode::DecodeInstance> decode;
  UtilizationWindow util;
  RoleSpan span;
  std::int32_t inflight = 0;
  std::size_t flip_index = 0;
};

DisaggregatedCluster::DisaggregatedCluster(sim::Engine& engine,
                                           const cost::CostModel& cost,
                                           ClusterConfig config,
                                           sim::RngStreams& rngs,
                                           RequestStatusTable& table)
    : engine_(&engine), cost_(&cost), config_(config), rngs_(&rngs), table_(&table) {
  config_.validate();
  const std::int32_t total = config_.n_prefill + config_.n_decode;
  for (InstanceId id = 1; id <= total; ++id) {
    auto n = std::make_unique<Node>();
    n->id = id;
    n->role = id <= config_.n_prefill ? Role::kPrefill : Role::kDecode;
    n->span.node = id;
    n->span.role = n->role;

    prefill::PrefillInstance::Hooks ph;
    ph.on_prefill_start = [this, id](RequestId rid, SimTime t) {
      RequestRow& row = table_->at(rid);
      if (row.prefill_start < 0) row.prefill_start = t;
      table_->advance(rid, Phase::kPrefilling);
    };
    ph.on_first_token = [this](RequestId rid, SimTime t, prefill::LengthBucket b) {
      RequestRow& row = table_->at(rid);
      row.first_token = t;
      row.predicted_bucket = b.index;
      table_->advance(rid, Phase::kTransferring);
    };
    ph.send_kv = [this, id](const Request& req, prefill::LengthBucket b, InstanceId dst) {
      send_kv(id, req, b, dst);
    };
    ph.on_busy = [this, id](SimTime s, SimTime e) { on_busy(node(id), Role::kPrefill, s, e); };
    ph.on_drained = [this, id] { maybe_finish_drain(node(id)); };
    const std::string suffix = "/" + std::to_string(id);
    n->prefill = std::make_unique<prefill::PrefillInstance>(
        id, engine, cost, config_.prefill,
        rngs.get(std::string(sim::streams::kPredictor) + suffix),
        rngs.get(std::string(sim::streams::kDispatcher) + suffix), std::move(ph));

    decode::DecodeInstance::Hooks dh;
    dh.on_decode_start = [this](RequestId rid, SimTime t) {
      RequestRow& row = table_->at(rid);
      if (row.decode_start < 0) row.decode_start = t;
    };
    dh.on_complete = [this](const decode::DecodingRequest& r, SimTime t) {
      table_->complete(r.req.id, t, r.swaps);
      maybe_stop();
    };
    dh.on_busy = [this, id](SimTime s, SimTime e) { on_busy(node(id), Role::kDecode, s, e); };
    dh.on_drained = [this, id] { maybe_finish_drain(node(id)); };
    n->decode = std::make_unique<decode::DecodeInstance>(id, engine, cost,
                                                         config_.decode, std::move(dh));
    nodes_.push_back(std::move(n));
  }
}

DisaggregatedCluster::~DisaggregatedCluster() = default;

DisaggregatedCluster::Node& DisaggregatedCluster::node(InstanceId id) {
  if (id < 1 || static_cast<std::size_t>(id) > nodes_.size()) {
    throw InvariantViolation("unknown instance " + std::to_string(id));
  }
  return *nodes_[static_cast<std::size_t>(id - 1)];
}

const DisaggregatedCluster::Node& DisaggregatedCluster::node(InstanceId id) const {
  return const_cast<DisaggregatedCluster*>(this)->node(id);
}

Role DisaggregatedCluster::role(InstanceId id) const { return node(id).role; }

DisaggregatedCluster::NodeState DisaggregatedCluster::state(InstanceId id) const {
  return node(id).state;
}

const prefill::PrefillInstance& DisaggregatedCluster::prefill_at(InstanceId id) const {
  return *node(id).prefill;
}

const decode::DecodeInstance& DisaggregatedCluster::decode_at(InstanceId id) const {
  return *node(id).decode;
}

void DisaggregatedCluster::start() {
  if (started_) return;
  started_ = true;
  tick_ = engine_->schedule_after(0, kControlPlaneEntity, "monitor_tick",
                                  [this] { monitor_tick(); });
}

void DisaggregatedCluster::inject(const std::vector<Request>& requests) {
  for (const auto& req : requests) {
    ++injected_;
    engine_->schedule(req.arrival, kControlPlaneEntity, "arrival",
                      [this, req] { on_arrival(req); });
  }
}

bool DisaggregatedCluster::finished() const {
  return arrived_ == injected_ && table_->completed() == injected_ &&
         !flip_in_progress_;
}

void DisaggregatedCluster::maybe_stop() {
  if (tick_ && finished()) {
    engine_->cancel(*tick_);
    tick_.reset();
  }
}

void DisaggregatedCluster::on_arrival(const Request& req) {
  ++arrived_;
  table_->insert(req);
  if (!route(req)) {
    ++counters_.parked_arrivals;
    parked_.emplace_back(req, engine_->now());
  }
}

bool DisaggregatedCluster::route(const Request& req) {
  Node* best = nullptr;
  for (auto& n : nodes_) {
    if (n->role != Role::kPrefill || n->state != NodeState::kActive) continue;
    if (!best || n->prefill->queued_prompt_tokens() < best->prefill->queued_prompt_tokens()) {
      best = n.get();
    }
  }
  if (!best) return false;
  table_->at(req.id).prefill_instance = best->id;
  best->prefill->enqueue(req);
  return true;
}

void DisaggregatedCluster::monitor_tick() {
  const SimTime now = engine_->now();
  ++counters_.broadcasts;
  LoadSnapshot snapshot;
  for (const auto& n : nodes_) {
    if (n->role == Role::kDecode && n->state == NodeState::kActive) {
      snapshot.push_back(n->decode->load(now));
    }
  }
  last_snapshot_ = snapshot;
  for (auto& n : nodes_) n->prefill->receive_broadcast(snapshot);

  if (!parked_.empty()) {
    auto parked = std::move(parked_);
    parked_.clear();
    for (auto& [req, since] : parked) {
      if (route(req)) continue;
      if (now - since > config_.park_limit && since >= 0) {
        ++counters_.overdue_parked;
        since = -1;  // flag once
      }
      parked_.emplace_back(req, since);
    }
  }

  if (config_.flip.enabled && !flip_in_progress_) evaluate_flips();

  tick_.reset();
  if (!finished()) {
    tick_ = engine_->schedule_after(config_.monitor_period, kControlPlaneEntity,
                                    "monitor_tick", [this] { monitor_tick(); });
  }
}

void DisaggregatedCluster::evaluate_flips() {
  const SimTime now = engine_->now();
  const SimTime window = config_.flip.window;
  std::vector<double> util(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    util[i] = nodes_[i]->util.utilization(now, window);
  }
  auto active_stats = [&](Role r) {
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i]->role == r && nodes_[i]->state == NodeState::kActive) {
        ++count;
        sum += util[i];
      }
    }
    return std::pair{count, count ? sum / static_cast<double>(count) : 0.0};
  };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = *nodes_[i];
    if (n.state != NodeState::kActive) continue;
    if (now - n.role_since < window) continue;
    if (util[i] >= config_.flip.threshold) continue;
    if (active_stats(n.role).first < 2) continue;
    if (config_.flip.require_target_demand &&
        active_stats(other(n.role)).second < config_.flip.demand_threshold) {
      continue;
    }
    begin_flip(n);
    return;
  }
}

bool DisaggregatedCluster::request_flip(InstanceId id) {
  Node& n = node(id);
  std::size_t same_role = 0;
  for (const auto& m : nodes_) {
    if (m->role == n.role && m->state == NodeState::kActive) ++same_role;
  }
  if (flip_in_progress_ || n.state != NodeState::kActive || same_role < 2) {
    ++counters_.ignored_flip_requests;
    return false;
  }
  begin_flip(n);
  return true;
}

void DisaggregatedCluster::begin_flip(Node& n) {
  flip_in_progress_ = true;
  FlipRecord rec;
  rec.node = n.id;
  rec.from = n.role;
  rec.to = other(n.role);
  rec.requested = engine_->now();
  n.flip_index = flips_.size();
  flips_.push_back(rec);
  n.state = NodeState::kDraining;
  if (n.role == Role::kDecode) {
    for (auto& m : nodes_) m->prefill->exclude_decode(n.id);
  }
  maybe_finish_drain(n);
}

void DisaggregatedCluster::maybe_finish_drain(Node& n) {
  if (n.state != NodeState::kDraining) return;
  const bool drained = n.role == Role::kPrefill
                           ? n.prefill->drained()
                           : n.decode->drained() && n.inflight == 0;
  if (!drained) return;
  flips_[n.flip_index].drained = engine_->now();
  n.state = NodeState::kFlipping;
  const SimTime latency = rngs_->get(sim::streams::kFlip)
                              .uniform_int(config_.flip.min_latency, config_.flip.max_latency);
  engine_->schedule_after(latency, n.id, "flip_done", [this, &n] { finish_flip(n); });
}

void DisaggregatedCluster::finish_flip(Node& n) {
  if (n.span.first_start >= 0) closed_spans_.push_back(n.span);
  n.role = other(n.role);
  n.role_since = engine_->now();
  n.state = NodeState::kActive;
  n.util.clear();
  n.span = RoleSpan{};
  n.span.node = n.id;
  n.span.role = n.role;
  flips_[n.flip_index].completed = engine_->now();
  flip_in_progress_ = false;
  maybe_stop();
}

void DisaggregatedCluster::send_kv(InstanceId src, const Request& req,
                                   prefill::LengthBucket bucket, InstanceId dst) {
  Node& d = node(dst);
  table_->at(req.id).decode_instance = dst;
  d.decode->announce(req, bucket);
  ++d.inflight;
  Transfer t{req, bucket, src, dst};
  engine_->schedule_after(cost_->transfer_latency(req.prompt_len), dst, "kv_arrival",
                          [this, t] { on_kv_arrival(t); });
}

void DisaggregatedCluster::on_kv_arrival(const Transfer& t) {
  Node& d = node(t.dst);
  --d.inflight;
  if (d.role == Role::kDecode && d.state != NodeState::kFlipping) {
    table_->advance(t.req.id, Phase::kDecoding);
    d.decode->receive_kv(t.req.id);
  } else {
    d.decode->withdraw(t.req.id);
    table_->at(t.req.id).rerouted = true;
    ++counters_.reroutes;
    node(t.src).prefill->redispatch(t.req, t.bucket);
  }
  maybe_finish_drain(d);
}

void DisaggregatedCluster::on_busy(Node& n, Role role, SimTime start, SimTime end) {
  if (role != n.role) ++counters_.role_violations;
  n.util.add(start, end);
  if (n.span.first_start < 0) n.span.first_start = start;
  n.span.last_end = end;
  n.span.busy += end - start;
}

std::vector<RoleSpan> DisaggregatedCluster::spans() const {
  std::vector<RoleSpan> out = closed_spans_;
  for (const auto& n : nodes_) {
    if (n->span.first_start >= 0) out.push_back(n->span);
  }
  std::sort(out.begin(), out.end(), [](const RoleSpan& a, const RoleSpan& b) {
    return a.node != b.node ? a.node < b.node : a.first_start < b.first_start;
  });
  return out;
}

}  // namespace pdsim::control
