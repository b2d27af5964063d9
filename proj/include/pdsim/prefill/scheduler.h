#pragma once

#include <cstdint>
#include <deque>
#include <string_view>
#include <vector>

#include "pdsim/common/types.h"

namespace pdsim::prefill {

enum class PrefillOrder { kFCFS, kSJF, kLJF };

std::string_view to_string(PrefillOrder o);
PrefillOrder parse_prefill_order(std::string_view s);

struct PrefillPolicy {
  PrefillOrder order = PrefillOrder::kSJF;
  // Requests sorted per scheduling round (PrefillSchedBatch).
  std::int32_t sched_batch = 16;

  void validate() const;
};

// A prompt waiting in a prefill instance's queues.
struct QueuedPrompt {
  RequestId id = 0;
  SimTime arrival = 0;
  std::int32_t prompt_len = 1;
};

// Takes min(sched_batch, raw.size()) prompts from the head of `raw`, sorts
// them by the policy (ties by arrival then id) and appends them to
// `scheduled`. Prompts left in `raw` wait for a later round, so nothing
// behind the head can overtake a whole round. Returns the number moved.
std::size_t sort_raw_queue(const PrefillPolicy& policy,
                           std::deque<QueuedPrompt>& raw,
                           std::vector<QueuedPrompt>& scheduled);

}  // namespace pdsim::prefill
