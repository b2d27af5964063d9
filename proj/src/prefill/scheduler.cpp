#include "pdsim/prefill/scheduler.h"

#include <algorithm>
#include <string>

namespace pdsim::prefill {

std::string_view to_string(PrefillOrder o) {
  switch (o) {
    case PrefillOrder::kFCFS: return "FCFS";
    case PrefillOrder::kSJF: return "SJF";
    case PrefillOrder::kLJF: return "LJF";
  }
  return "?";
}

PrefillOrder parse_prefill_order(std::string_view s) {
  if (s == "FCFS" || s == "fcfs") return PrefillOrder::kFCFS;
  if (s == "SJF" || s == "sjf") return PrefillOrder::kSJF;
  if (s == "LJF" || s == "ljf") return PrefillOrder::kLJF;
  throw ConfigError("policies.prefill.order",
                    "unknown order '" + std::string(s) + "'");
}

void PrefillPolicy::validate() const {
  if (sched_batch < 1) {
    throw ConfigError("policies.prefill.sched_batch", "must be >= 1");
  }
}

std::size_t sort_raw_queue(const PrefillPolicy& policy,
                           std::deque<QueuedPrompt>& raw,
                           std::vector<QueuedPrompt>& scheduled) {
  const std::size_t n =
      std::min(static_cast<std::size_t>(policy.sched_batch), raw.size());
  std::vector<QueuedPrompt> round(raw.begin(), raw.begin() + n);
  raw.erase(raw.begin(), raw.begin() + n);

  auto arrival_then_id = [](const QueuedPrompt& a, const QueuedPrompt& b) {
    return a.arrival != b.arrival ? a.arrival < b.arrival : a.id < b.id;
  };
  switch (policy.order) {
    case PrefillOrder::kFCFS:
      break;
    case PrefillOrder::kSJF:
      std::sort(round.begin(), round.end(), [&](const auto& a, const auto& b) {
        return a.prompt_len != b.prompt_len ? a.prompt_len < b.prompt_len
                                            : arrival_then_id(a, b);
      });
      break;
    case PrefillOrder::kLJF:
      std::sort(round.begin(), round.end(), [&](const auto& a, const auto& b) {
        return a.prompt_len != b.prompt_len ? a.prompt_len > b.prompt_len
                                            : arrival_then_id(a, b);
      });
      break;
  }
  scheduled.insert(scheduled.end(), round.begin(), round.end());
  return n;
}

}  // namespace pdsim::prefill
