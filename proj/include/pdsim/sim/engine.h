#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <queue>
#include <string>
#include <unordered_set>
#include <vector>

#include "pdsim/common/types.h"

namespace pdsim::sim {

struct EventHandle {
  std::uint64_t seq = 0;
};

// One fired event, as written to the optional trace.
struct TraceRecord {
  SimTime t = 0;
  std::uint64_t seq = 0;
  EntityId target = 0;
  std::string kind;

  bool operator==(const TraceRecord&) const = default;
};

struct RunStats {
  std::uint64_t events_fired = 0;
  SimTime clock = 0;
};

// Raised by run_until when the per-run event cap is hit.
class EventLimitExceeded : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

// Single-threaded discrete-event engine. Events fire in (time, seq) order;
// seq is assigned at insertion so same-time events fire FIFO.
class Engine {
 public:
  using Handler = std::function<void()>;

  static constexpr std::uint64_t kDefaultMaxEvents = 100'000'000;

  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // Throws InvariantViolation if at < now().
  EventHandle schedule(SimTime at, EntityId target, std::string kind,
                       Handler fn);
  EventHandle schedule_after(SimTime delay, EntityId target, std::string kind,
                             Handler fn) {
    return schedule(now_ + delay, target, std::move(kind), std::move(fn));
  }

  // Returns false if the event already fired or was cancelled.
  bool cancel(EventHandle handle);

  // Fires every event with time <= t_end. Afterwards the clock sits at t_end,
  // or at the last fired event when t_end is kForever.
  RunStats run_until(SimTime t_end);

  SimTime now() const { return now_; }
  std::size_t pending() const { return queue_.size() - cancelled_.size(); }
  std::uint64_t events_fired() const { return fired_; }

  void set_max_events(std::uint64_t cap) { max_events_ = cap; }
  void enable_trace(bool on) { trace_on_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }

 private:
  struct Entry {
    SimTime t;
    std::uint64_t seq;
    EntityId target;
    std::string kind;
    Handler fn;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_set<std::uint64_t> cancelled_;
  std::unordered_set<std::uint64_t> live_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t fired_ = 0;
  std::uint64_t max_events_ = kDefaultMaxEvents;
  bool trace_on_ = false;
  std::vector<TraceRecord> trace_;
};

// Writes one JSON object per line: {"t":..,"seq":..,"target":..,"kind":".."}.
void write_trace_jsonl(std::ostream& out, const std::vector<TraceRecord>& trace);

}  // namespace pdsim::sim
