#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pdsim {

// Simulated time in integer microseconds since the start of a run.
using SimTime = std::int64_t;

inline constexpr SimTime kForever = std::numeric_limits<SimTime>::max();

constexpr SimTime ms(std::int64_t v) { return v * 1000; }
constexpr SimTime seconds(std::int64_t v) { return v * 1000 * 1000; }

using RequestId = std::uint32_t;
using InstanceId = std::int32_t;
using EntityId = std::int32_t;

inline constexpr InstanceId kNoInstance = -1;
// Entity id used for events owned by the control plane.
inline constexpr EntityId kControlPlaneEntity = 0;

// Raised when a configuration value is invalid. key() names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Raised when a simulation invariant is broken. Always a bug or a
// misconfiguration that makes the run meaningless.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace pdsim
