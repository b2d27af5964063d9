#include "pdsim/prefill/dispatcher.h"

#include <algorithm>
#include <string>

namespace pdsim::prefill {

std::string_view to_string(DispatchPolicy p) {
  switch (p) {
    case DispatchPolicy::kPowerOfTwo: return "power_of_two";
    case DispatchPolicy::kRandom: return "random";
    case DispatchPolicy::kImbalance: return "imbalance";
  }
  return "?";
}

DispatchPolicy parse_dispatch_policy(std::string_view s) {
  if (s == "power_of_two") return DispatchPolicy::kPowerOfTwo;
  if (s == "random") return DispatchPolicy::kRandom;
  if (s == "imbalance") return DispatchPolicy::kImbalance;
  throw ConfigError("policies.dispatcher",
                    "unknown policy '" + std::string(s) + "'");
}

namespace {

// heavy:light after accepting the request. light == 0 with heavy > 0 is an
// infinite ratio; among infinite ratios fewer heavy requests is better.
struct Ratio {
  std::int64_t heavy;
  std::int64_t light;

  bool infinite() const { return light == 0 && heavy > 0; }
};

// -1 if a < b, 0 if equal, 1 if a > b.
int compare(const Ratio& a, const Ratio& b) {
  if (a.infinite() || b.infinite()) {
    if (a.infinite() != b.infinite()) return a.infinite() ? 1 : -1;
    return a.heavy < b.heavy ? -1 : (a.heavy > b.heavy ? 1 : 0);
  }
  // Both finite, so light == 0 implies heavy == 0 and 0/1 is the same value.
  const std::int64_t lhs = a.heavy * std::max<std::int64_t>(b.light, 1);
  const std::int64_t rhs = b.heavy * std::max<std::int64_t>(a.light, 1);
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

Ratio after_accept(const InstanceLoad& l, bool heavy) {
  return Ratio{l.heavy + (heavy ? 1 : 0), l.light + (heavy ? 0 : 1)};
}

const InstanceLoad& least_loaded(std::span<const InstanceLoad> loads) {
  return *std::min_element(loads.begin(), loads.end(),
                           [](const InstanceLoad& a, const InstanceLoad& b) {
                             if (a.used_kv_tokens != b.used_kv_tokens) {
                               return a.used_kv_tokens < b.used_kv_tokens;
                             }
                             return a.id < b.id;
                           });
}

DispatchDecision power_of_two(const Request& req, LengthBucket bucket,
                              std::span<const InstanceLoad> loads,
                              sim::RngStream& rng) {
  DispatchDecision d;
  const std::int64_t need =
      static_cast<std::int64_t>(bucket.upper()) + req.prompt_len;
  std::vector<const InstanceLoad*> alpha;
  for (const auto& l : loads) {
    if (l.free_kv_tokens >= need) alpha.push_back(&l);
  }
  d.alpha_size = alpha.size();
  if (alpha.empty()) {
    d.fallback = true;
    d.chosen = least_loaded(loads).id;
    d.candidates = {d.chosen};
    return d;
  }
  if (alpha.size() == 1) {
    d.chosen = alpha.front()->id;
    d.candidates = {d.chosen};
    return d;
  }
  const std::size_t i = rng.below(alpha.size());
  std::size_t j = rng.below(alpha.size() - 1);
  if (j >= i) ++j;
  const InstanceLoad* a = alpha[i];
  const InstanceLoad* b = alpha[j];
  if (b->id < a->id) std::swap(a, b);
  d.candidates = {a->id, b->id};

  const bool heavy = bucket.heavy();
  // A heavy request goes where fewer heavy decodes are already placed; the
  // ratio alone lets an instance with many lights keep attracting heavies.
  int c = 0;
  if (heavy && a->heavy != b->heavy) c = a->heavy < b->heavy ? -1 : 1;
  if (c == 0) c = compare(after_accept(*a, heavy), after_accept(*b, heavy));
  if (c == 0 && a->used_kv_tokens != b->used_kv_tokens) {
    c = a->used_kv_tokens < b->used_kv_tokens ? -1 : 1;
  }
  d.chosen = c <= 0 ? a->id : b->id;
  return d;
}

}  // namespace

DispatchDecision choose_decode_instance(DispatchPolicy policy,
                                        const Request& req,
                                        LengthBucket bucket,
                                        std::span<const InstanceLoad> loads,
                                        sim::RngStream& rng) {
  if (loads.empty()) {
    throw InvariantViolation("dispatch with an empty load snapshot");
  }
  switch (policy) {
    case DispatchPolicy::kPowerOfTwo:
      return power_of_two(req, bucket, loads, rng);
    case DispatchPolicy::kRandom: {
      DispatchDecision d;
      d.alpha_size = loads.size();
      d.chosen = loads[rng.below(loads.size())].id;
      d.candidates = {d.chosen};
      return d;
    }
    case DispatchPolicy::kImbalance: {
      DispatchDecision d;
      d.alpha_size = loads.size();
      // loads are sorted by id, so the heavy target is loads.front().
      if (bucket.heavy() || loads.size() == 1) {
        d.chosen = loads.front().id;
      } else {
        d.chosen = loads[1 + rng.below(loads.size() - 1)].id;
      }
      d.candidates = {d.chosen};
      return d;
    }
  }
  throw InvariantViolation("unhandled dispatch policy");
}

Dispatcher::Dispatcher(DispatchPolicy policy, sim::RngStream& rng)
    : policy_(policy), rng_(&rng) {}

void Dispatcher::update_snapshot(LoadSnapshot snapshot) {
  std::sort(snapshot.begin(), snapshot.end(),
            [](const InstanceLoad& a, const InstanceLoad& b) {
              return a.id < b.id;
            });
  snapshot_time_ = snapshot.empty() ? snapshot_time_
                                    : snapshot.front().snapshot_time;
  view_ = std::move(snapshot);
}

void Dispatcher::exclude(InstanceId id) {
  std::erase_if(view_, [id](const InstanceLoad& l) { return l.id == id; });
}

std::optional<DispatchDecision> Dispatcher::dispatch(const Request& req,
                                                     LengthBucket bucket) {
  if (view_.empty()) return std::nullopt;
  DispatchDecision d = choose_decode_instance(policy_, req, bucket, view_, *rng_);
  for (auto& l : view_) {
    if (l.id != d.chosen) continue;
    // Mirror the accounting the decode instance does when the request is
    // announced to it, until the next broadcast replaces this view.
    l.free_kv_tokens -= req.prompt_len;
    l.used_kv_tokens += req.prompt_len;
    (bucket.heavy() ? l.heavy : l.light) += 1;
  }
  return d;
}

}  // namespace pdsim::prefill
