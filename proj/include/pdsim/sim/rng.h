#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace pdsim::sim {

// A named, independently seeded random stream. All draws are implemented
// here on top of mt19937_64 instead of <random> distributions so sequences
// are identical across standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view name);

  std::uint64_t next_u64() { return gen_(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Uniform double in [0, 1).
  double uniform01();
  bool bernoulli(double p) { return uniform01() < p; }
  double normal();
  double lognormal(double mu, double sigma);
  double exponential(double rate);

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::mt19937_64 gen_;
};

// Derives the seed of a substream from the master seed and stream name.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view name);

// Registry of named substreams of one master seed. A stream's sequence
// depends only on (master seed, name), never on draws from other streams.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed) : master_(master_seed) {}

  RngStream& get(const std::string& name);
  std::uint64_t master_seed() const { return master_; }

 private:
  std::uint64_t master_;
  std::map<std::string, RngStream> streams_;
};

namespace streams {
inline constexpr const char* kWorkload = "workload";
inline constexpr const char* kPredictor = "predictor";
inline constexpr const char* kDispatcher = "dispatcher";
inline constexpr const char* kFlip = "flip";
}  // namespace streams

}  // namespace pdsim::sim
