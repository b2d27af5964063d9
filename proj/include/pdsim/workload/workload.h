#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pdsim/sim/rng.h"
#include "pdsim/workload/request.h"

namespace pdsim::workload {

enum class WorkloadClass { kLPLD, kLPHD, kHPLD, kHPHD, kMixed, kTrace };

std::string_view to_string(WorkloadClass c);
WorkloadClass parse_workload_class(std::string_view s);

// Classifies a request by the heavy/light thresholds.
WorkloadClass classify(std::int32_t prompt_len, std::int32_t decode_len);

enum class ArrivalProcess { kClosedLoop, kPoisson };

// Log-normal token-length distribution truncated to [min, max].
struct LengthDist {
  double mu = 0.0;
  double sigma = 1.0;
  std::int32_t min = 1;
  std::int32_t max = 2048;
};

struct LengthParams {
  LengthDist light_prompt;
  LengthDist heavy_prompt;
  LengthDist light_decode;
  LengthDist heavy_decode;

  // ShareGPT-shaped defaults: light prompts have a median of about 18
  // tokens, heavy prompts sit just above the 512-token threshold, and
  // generations split around the 128-token median answer length.
  static LengthParams sharegpt_like();
};

struct WorkloadSpec {
  WorkloadClass cls = WorkloadClass::kMixed;
  std::size_t n_requests = 128;
  ArrivalProcess arrival = ArrivalProcess::kClosedLoop;
  double rate_per_s = 1.0;  // Poisson only
  SimTime start = 0;
  LengthParams lengths = LengthParams::sharegpt_like();
  // Mixed-class weights in LPLD, LPHD, HPLD, HPHD order.
  std::array<double, 4> mix_weights{0.25, 0.25, 0.25, 0.25};
  std::filesystem::path trace_path;  // kTrace only

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Samples n_requests requests, sorted by arrival, ids 0..n-1.
std::vector<Request> generate(const WorkloadSpec& spec, sim::RngStream& rng);

// Loads `arrival_us,prompt_len,decode_len[,sla_us]` CSV. Ids follow file
// order; the result is stably sorted by arrival. Throws ConfigError naming
// the offending line.
std::vector<Request> load_trace(const std::filesystem::path& path);
std::vector<Request> parse_trace(std::istream& in);

// Writes the same CSV format. The sla column is present iff any request
// carries an SLA.
void export_trace(std::ostream& out, const std::vector<Request>& requests);
void export_trace(const std::filesystem::path& path,
                  const std::vector<Request>& requests);

// Stable 64-bit fingerprint of a request list, used to check that two runs
// consumed the same workload.
std::uint64_t fingerprint(const std::vector<Request>& requests);

}  // namespace pdsim::workload
