#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdsim/baseline/coupled_instance.h"
#include "pdsim/control/cluster.h"
#include "pdsim/cost/cost_model.h"
#include "pdsim/workload/workload.h"

namespace pdsim::exp {

enum class SystemKind { kDisaggregated, kCoupled };

std::string_view to_string(SystemKind s);

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  SystemKind system = SystemKind::kDisaggregated;
  // One spec per workload phase; phases are merged by arrival time.
  std::vector<workload::WorkloadSpec> workload{workload::WorkloadSpec{}};
  control::ClusterConfig cluster;
  std::int32_t n_coupled = 1;
  baseline::CoupledConfig coupled;
  cost::CostModelParams cost;
  bool record_events = false;
  std::uint64_t max_events = 100'000'000;

  void validate() const;
};

// Parses the JSON layout documented in the README. Relative paths resolve
// against `base_dir`. Unknown keys and bad values raise ConfigError naming
// the key.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace pdsim::exp
