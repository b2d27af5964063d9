#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdsim/control/flip.h"
#include "pdsim/control/status_table.h"
#include "pdsim/exp/config.h"
#include "pdsim/sim/engine.h"

namespace pdsim::exp {

// Mean, median (mean of the middle pair for even n) and nearest-rank p99.
struct Stats {
  double mean = 0.0;
  double median = 0.0;
  double p99 = 0.0;

  bool operator==(const Stats&) const = default;
};

Stats summarize(std::vector<SimTime> values);

// Charged wall time of one instance in one role.
struct InstanceSpan {
  InstanceId instance = kNoInstance;
  std::string role;  // "prefill", "decode" or "coupled"
  SimTime first_start = -1;
  SimTime last_end = -1;
  SimTime busy = 0;

  SimTime charged() const { return first_start < 0 ? 0 : last_end - first_start; }
};

struct RunSummary {
  std::string name;
  std::string system;
  std::uint64_t seed = 0;
  std::uint64_t workload_fingerprint = 0;
  std::size_t requests = 0;
  std::size_t completed = 0;
  Stats ttft;
  Stats jct;
  Stats prefill_wait;
  SimTime makespan = 0;
  SimTime resource_usage = 0;
  double perf_per_dollar = 0.0;  // completed requests per resource-second
  std::uint64_t swaps = 0;
  std::uint64_t swap_ins = 0;
  std::uint64_t reroutes = 0;
  std::uint64_t events = 0;
  std::vector<control::FlipRecord> flips;
  std::vector<InstanceSpan> instances;
};

struct RunResult {
  RunSummary summary;
  std::vector<control::RequestRow> rows;
  std::vector<Request> workload;
  std::vector<sim::TraceRecord> trace;  // empty unless events are recorded
};

// Builds the workload for `config` from the seed's workload stream.
std::vector<Request> build_workload(const ExperimentConfig& config,
                                    sim::RngStreams& rngs);

// Deterministic given config (including seed). Throws ConfigError or
// InvariantViolation.
RunResult run_experiment(const ExperimentConfig& config);
// Same, on an explicit request list.
RunResult run_experiment(const ExperimentConfig& config,
                         const std::vector<Request>& requests);

// Summary figures from per-request rows alone.
RunSummary summarize_rows(const std::vector<control::RequestRow>& rows);

nlohmann::ordered_json summary_to_json(const RunSummary& s,
                                       const std::vector<control::RequestRow>& rows);
void write_requests_csv(std::ostream& out, const std::vector<control::RequestRow>& rows);
std::vector<control::RequestRow> read_requests_csv(std::istream& in);
// Writes summary.json, requests.csv and, when recorded, events.jsonl.
void write_outputs(const RunResult& result, const std::filesystem::path& dir);

struct ComparisonEntry {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double ratio = 0.0;        // a / b
  double improvement = 0.0;  // 1 - ratio, or ratio - 1 for higher-is-better
};

// Ratio table with `b` as the baseline. Throws ConfigError when the two
// summaries come from different workloads.
std::vector<ComparisonEntry> compare(const nlohmann::json& a, const nlohmann::json& b);
nlohmann::json load_summary(const std::filesystem::path& dir);
void print_comparison(std::ostream& out, const std::vector<ComparisonEntry>& table);

}  // namespace pdsim::exp
