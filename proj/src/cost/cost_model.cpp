#include "pdsim/cost/cost_model.h"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pdsim::cost {

namespace {

void require_positive(double v, const char* key) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("cost_model.") + key, "must be > 0");
  }
}

void require_non_negative(double v, const char* key) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("cost_model.") + key, "must be >= 0");
  }
}

}  // namespace

void CostModelParams::validate() const {
  if (chunk_size < 1) throw ConfigError("cost_model.chunk_size", "must be >= 1");
  require_positive(t_chunk_us, "t_chunk_us");
  require_non_negative(t_prefill_overhead_us, "t_prefill_overhead_us");
  require_positive(decode_a_us, "decode_a_us");
  require_positive(decode_b_us, "decode_b_us");
  require_non_negative(decode_c_us_per_token, "decode_c_us_per_token");
  if (page_size < 1) throw ConfigError("cost_model.page_size", "must be >= 1");
  if (mem_capacity_tokens < page_size) {
    throw ConfigError("cost_model.mem_capacity_tokens",
                      "must hold at least one page");
  }
  if (mem_capacity_tokens % page_size != 0) {
    throw ConfigError("cost_model.mem_capacity_tokens",
                      "must be a multiple of page_size");
  }
  require_positive(swap_penalty_us_per_page, "swap_penalty_us_per_page");
  if (!(predictor_parallel_tax >= 1.0)) {
    throw ConfigError("cost_model.predictor_parallel_tax", "must be >= 1");
  }
  require_positive(predictor_sequential_speedup, "predictor_sequential_speedup");
  if (kv_bytes_per_token == 0) {
    throw ConfigError("cost_model.kv_bytes_per_token", "must be > 0");
  }
  if (bandwidth_bytes_per_s == 0) {
    throw ConfigError("cost_model.bandwidth_bytes_per_s", "must be > 0");
  }
  if (transfer_fixed_us < 0) {
    throw ConfigError("cost_model.transfer_fixed_us", "must be >= 0");
  }
}

CostModelParams with_preset(CostModelParams base, std::string_view preset) {
  if (preset == "roce200") {
    base.bandwidth_bytes_per_s = 25'000'000'000ULL;
    base.transfer_fixed_us = 0;
  } else if (preset == "nvlink300") {
    base.bandwidth_bytes_per_s = 300'000'000'000ULL;
    base.transfer_fixed_us = 0;
  } else if (preset == "indirect") {
    // Direct-NIC bandwidth; the extra copy through host DRAM doubles a
    // nominal 100 us setup cost.
    base.bandwidth_bytes_per_s = 25'000'000'000ULL;
    base.transfer_fixed_us = 200;
  } else {
    throw ConfigError("cost_model.preset",
                      "unknown preset '" + std::string(preset) + "'");
  }
  return base;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cost_model.") + key, e.what());
  }
}

}  // namespace

CostModelParams params_from_json(const nlohmann::json& j,
                                 CostModelParams base) {
  if (!j.is_object()) throw ConfigError("cost_model", "expected an object");
  static const char* kKnown[] = {
      "chunk_size", "t_chunk_us", "t_prefill_overhead_us", "decode_a_us",
      "decode_b_us", "decode_c_us_per_token", "mem_capacity_tokens",
      "page_size", "swap_penalty_us_per_page", "predictor_parallel_tax",
      "predictor_sequential_speedup", "kv_bytes_per_token",
      "bandwidth_bytes_per_s", "transfer_fixed_us", "preset", "calibration"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) {
          return key == k;
        }) == std::end(kKnown)) {
      throw ConfigError("cost_model." + key, "unknown key");
    }
  }
  read_field(j, "chunk_size", base.chunk_size);
  read_field(j, "t_chunk_us", base.t_chunk_us);
  read_field(j, "t_prefill_overhead_us", base.t_prefill_overhead_us);
  read_field(j, "decode_a_us", base.decode_a_us);
  read_field(j, "decode_b_us", base.decode_b_us);
  read_field(j, "decode_c_us_per_token", base.decode_c_us_per_token);
  read_field(j, "mem_capacity_tokens", base.mem_capacity_tokens);
  read_field(j, "page_size", base.page_size);
  read_field(j, "swap_penalty_us_per_page", base.swap_penalty_us_per_page);
  read_field(j, "predictor_parallel_tax", base.predictor_parallel_tax);
  read_field(j, "predictor_sequential_speedup",
             base.predictor_sequential_speedup);
  read_field(j, "kv_bytes_per_token", base.kv_bytes_per_token);
  read_field(j, "bandwidth_bytes_per_s", base.bandwidth_bytes_per_s);
  read_field(j, "transfer_fixed_us", base.transfer_fixed_us);
  base.validate();
  return base;
}

nlohmann::ordered_json params_to_json(const CostModelParams& p) {
  nlohmann::ordered_json j;
  j["chunk_size"] = p.chunk_size;
  j["t_chunk_us"] = p.t_chunk_us;
  j["t_prefill_overhead_us"] = p.t_prefill_overhead_us;
  j["decode_a_us"] = p.decode_a_us;
  j["decode_b_us"] = p.decode_b_us;
  j["decode_c_us_per_token"] = p.decode_c_us_per_token;
  j["mem_capacity_tokens"] = p.mem_capacity_tokens;
  j["page_size"] = p.page_size;
  j["swap_penalty_us_per_page"] = p.swap_penalty_us_per_page;
  j["predictor_parallel_tax"] = p.predictor_parallel_tax;
  j["predictor_sequential_speedup"] = p.predictor_sequential_speedup;
  j["kv_bytes_per_token"] = p.kv_bytes_per_token;
  j["bandwidth_bytes_per_s"] = p.bandwidth_bytes_per_s;
  j["transfer_fixed_us"] = p.transfer_fixed_us;
  return j;
}

CostModelParams load_calibration(const std::filesystem::path& path,
                                 CostModelParams base) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cost_model.calibration", "cannot open " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cost_model.calibration", e.what());
  }
  return params_from_json(j, base);
}

std::string_view to_string(PredictorMode m) {
  switch (m) {
    case PredictorMode::kOff: return "off";
    case PredictorMode::kParallel: return "parallel";
    case PredictorMode::kSequential: return "sequential";
  }
  return "?";
}

PredictorMode parse_predictor_mode(std::string_view s) {
  if (s == "off") return PredictorMode::kOff;
  if (s == "parallel") return PredictorMode::kParallel;
  if (s == "sequential") return PredictorMode::kSequential;
  throw ConfigError("predictor.mode", "unknown mode '" + std::string(s) + "'");
}

SimTime to_sim_time(double us) {
  return static_cast<SimTime>(std::llround(us));
}

CostModel::CostModel(CostModelParams params) : p_(params) { p_.validate(); }

double CostModel::prefill_latency_exact(std::int64_t total_tokens,
                                        std::int64_t n_requests,
                                        PredictorMode mode,
                                        bool batch_start) const {
  const double chunks =
      std::max(1.0, static_cast<double>(total_tokens) / p_.chunk_size);
  double t = p_.t_chunk_us * chunks +
             static_cast<double>(n_requests) * p_.t_prefill_overhead_us;
  if (mode == PredictorMode::kParallel) t *= p_.predictor_parallel_tax;
  if (mode == PredictorMode::kSequential && batch_start) {
    t += p_.t_chunk_us / p_.predictor_sequential_speedup;
  }
  return t;
}

SimTime CostModel::prefill_latency(std::int64_t total_tokens,
                                   std::int64_t n_requests, PredictorMode mode,
                                   bool batch_start) const {
  return to_sim_time(
      prefill_latency_exact(total_tokens, n_requests, mode, batch_start));
}

double CostModel::decode_iter_latency_exact(std::int64_t batch_size,
                                            std::int64_t kv_tokens) const {
  return p_.decode_a_us + p_.decode_b_us * static_cast<double>(batch_size) +
         p_.decode_c_us_per_token * static_cast<double>(kv_tokens);
}

SimTime CostModel::decode_iter_latency(std::int64_t batch_size,
                                       std::int64_t kv_tokens) const {
  return to_sim_time(decode_iter_latency_exact(batch_size, kv_tokens));
}

SimTime CostModel::mixed_iter_latency(std::int64_t prefill_tokens,
                                      std::int64_t n_prefill_requests,
                                      std::int64_t decode_batch,
                                      std::int64_t kv_tokens) const {
  if (prefill_tokens <= 0 && decode_batch <= 0) {
    throw InvariantViolation("mixed iteration with no prefill and no decode work");
  }
  double t = 0.0;
  if (prefill_tokens > 0) {
    t += prefill_latency_exact(prefill_tokens, n_prefill_requests,
                               PredictorMode::kOff);
  }
  if (decode_batch > 0) t += decode_iter_latency_exact(decode_batch, kv_tokens);
  return to_sim_time(t);
}

std::uint64_t CostModel::kv_bytes(std::int64_t tokens) const {
  return static_cast<std::uint64_t>(tokens) * p_.kv_bytes_per_token;
}

SimTime CostModel::transfer_latency(std::int64_t tokens) const {
  using u128 = unsigned __int128;
  const u128 numer = static_cast<u128>(kv_bytes(tokens)) * 1'000'000u;
  const u128 bw = p_.bandwidth_bytes_per_s;
  const auto us = static_cast<SimTime>((numer + bw - 1) / bw);
  return p_.transfer_fixed_us + us;
}

std::int64_t CostModel::pages_needed(std::int64_t tokens) const {
  return (tokens + p_.page_size - 1) / p_.page_size;
}

SimTime CostModel::swap_latency(std::int64_t pages) const {
  return to_sim_time(p_.swap_penalty_us_per_page * static_cast<double>(pages));
}

}  // namespace pdsim::cost
