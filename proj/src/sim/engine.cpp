#include "pdsim/sim/engine.h"

#include <ostream>

#include "json.hpp"

namespace pdsim::sim {

EventHandle Engine::schedule(SimTime at, EntityId target, std::string kind,
                             Handler fn) {
  if (at < now_) {
    throw InvariantViolation("event '" + kind + "' scheduled at " +
                             std::to_string(at) + " before clock " +
                             std::to_string(now_));
  }
  const std::uint64_t seq = next_seq_++;
  queue_.push(Entry{at, seq, target, std::move(kind), std::move(fn)});
  live_.insert(seq);
  return EventHandle{seq};
}

bool Engine::cancel(EventHandle handle) {
  if (live_.erase(handle.seq) == 0) return false;
  cancelled_.insert(handle.seq);
  return true;
}

RunStats Engine::run_until(SimTime t_end) {
  std::uint64_t fired_this_run = 0;
  while (!queue_.empty() && queue_.top().t <= t_end) {
    // priority_queue::top is const; the entry is moved out before pop.
    Entry e = std::move(const_cast<Entry&>(queue_.top()));
    queue_.pop();
    if (cancelled_.erase(e.seq) > 0) continue;
    live_.erase(e.seq);
    if (++fired_this_run > max_events_) {
      throw EventLimitExceeded("event cap of " + std::to_string(max_events_) +
                               " reached at t=" + std::to_string(e.t) +
                               " (last kind '" + e.kind + "')");
    }
    now_ = e.t;
    ++fired_;
    if (trace_on_) trace_.push_back(TraceRecord{e.t, e.seq, e.target, e.kind});
    if (e.fn) e.fn();
  }
  if (t_end != kForever && t_end > now_) now_ = t_end;
  return RunStats{fired_this_run, now_};
}

void write_trace_jsonl(std::ostream& out,
                       const std::vector<TraceRecord>& trace) {
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["t"] = r.t;
    j["seq"] = r.seq;
    j["target"] = r.target;
    j["kind"] = r.kind;
    out << j.dump() << '\n';
  }
}

}  // namespace pdsim::sim
