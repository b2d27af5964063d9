#include "pdsim/baseline/coupled_cluster.h"

#include <string>

namespace pdsim::baseline {

CoupledCluster::CoupledCluster(sim::Engine& engine, const cost::CostModel& cost,
                               std::int32_t n_instances, CoupledConfig config,
                               control::RequestStatusTable& table)
    : engine_(&engine), table_(&table) {
  if (n_instances < 1) {
    throw ConfigError("cluster.n_coupled", "need at least one coupled instance");
  }
  spans_.resize(static_cast<std::size_t>(n_instances));
  for (InstanceId id = 1; id <= n_instances; ++id) {
    CoupledSpan& span = spans_[static_cast<std::size_t>(id - 1)];
    span.node = id;
    CoupledInstance::Hooks h;
    h.on_prefill_start = [this](RequestId rid, SimTime t) {
      auto& row = table_->at(rid);
      row.prefill_start = t;
      table_->advance(rid, Phase::kPrefilling);
    };
    h.on_first_token = [this, id](RequestId rid, SimTime t) {
      auto& row = table_->at(rid);
      row.first_token = t;
      row.decode_instance = id;
      table_->advance(rid, Phase::kDecoding);
    };
    h.on_complete = [this](const DecodingRequest& r, SimTime t) {
      table_->complete(r.req.id, t, r.swaps);
    };
    h.on_busy = [&span](SimTime s, SimTime e) {
      if (span.first_start < 0) span.first_start = s;
      span.last_end = e;
      span.busy += e - s;
    };
    instances_.push_back(
        std::make_unique<CoupledInstance>(id, engine, cost, config, std::move(h)));
  }
}

const CoupledInstance& CoupledCluster::instance(InstanceId id) const {
  if (id < 1 || static_cast<std::size_t>(id) > instances_.size()) {
    throw InvariantViolation("unknown instance " + std::to_string(id));
  }
  return *instances_[static_cast<std::size_t>(id - 1)];
}

void CoupledCluster::inject(const std::vector<Request>& requests) {
  for (const auto& req : requests) {
    engine_->schedule(req.arrival, kControlPlaneEntity, "arrival",
                      [this, req] { on_arrival(req); });
  }
}

void CoupledCluster::on_arrival(const Request& req) {
  table_->insert(req);
  CoupledInstance* best = nullptr;
  for (auto& inst : instances_) {
    if (!best || inst->queued_prompt_tokens() < best->queued_prompt_tokens()) {
      best = inst.get();
    }
  }
  table_->at(req.id).prefill_instance = best->id();
  best->enqueue(req);
}

}  // namespace pdsim::baseline
