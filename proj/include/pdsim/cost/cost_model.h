#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "pdsim/common/types.h"

namespace pdsim::cost {

// Calibration constants. Times are microseconds. Defaults are calibration
// choices that reproduce the measured shapes, not hardware ground truth.
struct CostModelParams {
  std::int32_t chunk_size = 512;
  double t_chunk_us = 50'000.0;
  double t_prefill_overhead_us = 1'000.0;
  // Decode iteration: a + b * batch + c * kv_tokens.
  double decode_a_us = 2'000.0;
  double decode_b_us = 150.0;
  double decode_c_us_per_token = 0.18;
  std::int64_t mem_capacity_tokens = 160'000;
  std::int32_t page_size = 16;
  double swap_penalty_us_per_page = 500.0;
  double predictor_parallel_tax = 1.10;
  // Sequential predictor mode adds t_chunk / this per prefill batch.
  double predictor_sequential_speedup = 10.0;
  // 2 (K and V) * 40 layers * 5120 hidden * 2 bytes (fp16), OPT-13B.
  std::uint64_t kv_bytes_per_token = 819'200;
  std::uint64_t bandwidth_bytes_per_s = 25'000'000'000ULL;
  SimTime transfer_fixed_us = 0;

  // Throws ConfigError naming the offending key.
  void validate() const;
  std::int64_t capacity_pages() const { return mem_capacity_tokens / page_size; }
};

// Network presets: "roce200" (Direct-NIC, 200 Gbps), "nvlink300" (Direct,
// 300 GB/s), "indirect" (bounce through host DRAM).
CostModelParams with_preset(CostModelParams base, std::string_view preset);

// Reads every CostModelParams field present in `j`; unknown keys are
// rejected so typos surface as ConfigError.
CostModelParams params_from_json(const nlohmann::json& j,
                                 CostModelParams base = {});
nlohmann::ordered_json params_to_json(const CostModelParams& p);
CostModelParams load_calibration(const std::filesystem::path& path,
                                 CostModelParams base = {});

enum class PredictorMode { kOff, kParallel, kSequential };

std::string_view to_string(PredictorMode m);
PredictorMode parse_predictor_mode(std::string_view s);

// Stateless latency and memory model. All functions are pure given params.
class CostModel {
 public:
  explicit CostModel(CostModelParams params);

  const CostModelParams& params() const { return p_; }

  // Compute-bound prefill: flat up to chunk_size tokens, linear beyond.
  // `batch_start` marks the first batch of a scheduling round, which is
  // where the sequential predictor adds its latency.
  double prefill_latency_exact(std::int64_t total_tokens, std::int64_t n_requests,
                               PredictorMode mode,
                               bool batch_start = true) const;
  SimTime prefill_latency(std::int64_t total_tokens, std::int64_t n_requests,
                          PredictorMode mode, bool batch_start = true) const;

  // Memory-bound decode iteration.
  double decode_iter_latency_exact(std::int64_t batch_size,
                                   std::int64_t kv_tokens) const;
  SimTime decode_iter_latency(std::int64_t batch_size,
                              std::int64_t kv_tokens) const;

  // One continuous-batching iteration mixing prefill and decode work. Only
  // the coupled baseline uses it.
  SimTime mixed_iter_latency(std::int64_t prefill_tokens,
                             std::int64_t n_prefill_requests,
                             std::int64_t decode_batch,
                             std::int64_t kv_tokens) const;

  std::uint64_t kv_bytes(std::int64_t tokens) const;
  // transfer_fixed + tokens * kv_bytes_per_token / bandwidth, rounded up.
  SimTime transfer_latency(std::int64_t tokens) const;

  std::int64_t pages_needed(std::int64_t tokens) const;
  SimTime swap_latency(std::int64_t pages) const;

 private:
  CostModelParams p_;
};

// Rounds a non-negative latency in microseconds to the nearest whole
// microsecond.
SimTime to_sim_time(double us);

}  // namespace pdsim::cost
