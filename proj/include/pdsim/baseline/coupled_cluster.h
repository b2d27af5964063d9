#pragma once

#include <memory>
#include <vector>

#include "pdsim/baseline/coupled_instance.h"
#include "pdsim/control/status_table.h"

namespace pdsim::baseline {

struct CoupledSpan {
  InstanceId node = kNoInstance;
  SimTime first_start = -1;
  SimTime last_end = -1;
  SimTime busy = 0;

  SimTime charged() const { return first_start < 0 ? 0 : last_end - first_start; }
};

// Coupled instances behind a least-queued-tokens router.
class CoupledCluster {
 public:
  CoupledCluster(sim::Engine& engine, const cost::CostModel& cost,
                 std::int32_t n_instances, CoupledConfig config,
                 control::RequestStatusTable& table);

  void inject(const std::vector<Request>& requests);

  std::size_t size() const { return instances_.size(); }
  const CoupledInstance& instance(InstanceId id) const;
  const std::vector<CoupledSpan>& spans() const { return spans_; }

 private:
  void on_arrival(const Request& req);

  sim::Engine* engine_;
  control::RequestStatusTable* table_;
  std::vector<std::unique_ptr<CoupledInstance>> instances_;
  std::vector<CoupledSpan> spans_;
};

}  // namespace pdsim::baseline
