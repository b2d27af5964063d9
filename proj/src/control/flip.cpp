#include "pdsim/control/flip.h"

#include <algorithm>

namespace pdsim::control {

void FlipPolicy::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("policies.flip.threshold", "threshold must be in (0, 1)");
  }
  if (window <= 0) throw ConfigError("policies.flip.window_us", "window must be > 0");
  if (!(demand_threshold >= 0.0 && demand_threshold <= 1.0)) {
    throw ConfigError("policies.flip.demand_threshold", "demand_threshold must be in [0, 1]");
  }
  if (min_latency < 0) {
    throw ConfigError("policies.flip.min_latency_us", "min flip latency must be >= 0");
  }
  if (max_latency < min_latency) {
    throw ConfigError("policies.flip.max_latency_us", "max flip latency must be >= min");
  }
}

void UtilizationWindow::add(SimTime start, SimTime end) {
  if (end <= start) return;
  spans_.emplace_back(start, end);
  total_ += end - start;
}

double UtilizationWindow::utilization(SimTime now, SimTime window) {
  const SimTime lo = now - window;
  while (!spans_.empty() && spans_.front().second <= lo) {
    total_ -= spans_.front().second - spans_.front().first;
    spans_.pop_front();
  }
  SimTime busy = total_;
  if (!spans_.empty() && spans_.front().first < lo) busy -= lo - spans_.front().first;
  return static_cast<double>(busy) / static_cast<double>(window);
}

void UtilizationWindow::clear() {
  spans_.clear();
  total_ = 0;
}

}  // namespace pdsim::control
