#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "pdsim/common/types.h"

namespace pdsim {

enum class Role : std::uint8_t { kPrefill, kDecode };

inline std::string_view to_string(Role r) {
  return r == Role::kPrefill ? "prefill" : "decode";
}
inline Role other(Role r) {
  return r == Role::kPrefill ? Role::kDecode : Role::kPrefill;
}

// Load report an instance sends to the cluster monitor. Prefill instances
// fill queued_prompt_tokens; decode instances fill the KV and heavy/light
// fields. Heavy/light counts use predicted buckets, the only lengths an
// instance can observe.
struct InstanceLoad {
  InstanceId id = kNoInstance;
  Role role = Role::kDecode;
  std::int64_t queued_prompt_tokens = 0;
  std::int64_t free_kv_tokens = 0;
  std::int64_t used_kv_tokens = 0;
  std::int32_t heavy = 0;
  std::int32_t light = 0;
  SimTime snapshot_time = 0;
};

// Decode-instance loads as broadcast to prefill instances, sorted by id.
using LoadSnapshot = std::vector<InstanceLoad>;

}  // namespace pdsim
