#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "pdsim/common/types.h"

namespace pdsim {

// Prompts longer than this are heavy prefills.
inline constexpr std::int32_t kHeavyPromptThreshold = 512;
// Generations longer than this are heavy decodes.
inline constexpr std::int32_t kHeavyDecodeThreshold = 128;

inline bool is_heavy_prefill(std::int32_t prompt_len) {
  return prompt_len > kHeavyPromptThreshold;
}
inline bool is_heavy_decode(std::int32_t decode_len) {
  return decode_len > kHeavyDecodeThreshold;
}

enum class Phase : std::uint8_t {
  kQueued,
  kPrefilling,
  kTransferring,
  kDecoding,
  kDone,
};

std::string_view to_string(Phase p);

// One inference job. Lengths are fixed at creation; decode_len is the true
// number of generated tokens and is hidden from schedulers.
struct Request {
  RequestId id = 0;
  SimTime arrival = 0;
  std::int32_t prompt_len = 1;
  std::int32_t decode_len = 1;
  std::optional<SimTime> sla;
  Phase phase = Phase::kQueued;

  // Moves the phase forward. Staying in the same phase is a no-op; moving
  // backwards throws InvariantViolation.
  void advance(Phase next);
};

}  // namespace pdsim
