#pragma once

#include <cstdint>
#include <unordered_map>

#include "pdsim/cost/cost_model.h"
#include "pdsim/sim/rng.h"
#include "pdsim/workload/request.h"

namespace pdsim::prefill {

// Predicted decode-length range [index * granularity, (index + 1) * granularity).
struct LengthBucket {
  std::int32_t index = 0;
  std::int32_t granularity = 200;

  std::int32_t lower() const { return index * granularity; }
  std::int32_t upper() const { return (index + 1) * granularity; }
  // A request counts as a heavy decode when even its lower bound is heavy.
  bool heavy() const { return lower() >= kHeavyDecodeThreshold; }

  bool operator==(const LengthBucket&) const = default;
};

LengthBucket true_bucket(std::int32_t decode_len, std::int32_t granularity);

// Statistical stand-in for the small classification model: returns the true
// bucket with probability `accuracy`, otherwise a neighbouring bucket.
struct PredictorModel {
  std::int32_t granularity = 200;
  double accuracy = 0.749;
  cost::PredictorMode mode = cost::PredictorMode::kParallel;
  // Largest decode length the target model can produce; bounds the buckets.
  std::int32_t max_decode_len = 2048;
  // Wrong predictions land k buckets away with weight decay^k.
  double confusion_decay = 0.5;

  // Measured top-1 accuracies of the fine-tuned classifier for the
  // granularities it was evaluated at (100, 200, 400). Throws ConfigError
  // for other granularities.
  static double default_accuracy(std::int32_t granularity);

  std::int32_t max_bucket() const { return max_decode_len / granularity; }
  void validate() const;
};

class LengthPredictor {
 public:
  LengthPredictor(PredictorModel model, sim::RngStream& rng);

  // One prediction per request: repeated calls return the memoized bucket.
  LengthBucket predict(const Request& req);

  const PredictorModel& model() const { return model_; }
  std::size_t predictions() const { return memo_.size(); }
  std::size_t correct() const { return correct_; }

 private:
  LengthBucket mispredict(std::int32_t truth);

  PredictorModel model_;
  sim::RngStream* rng_;
  std::unordered_map<RequestId, LengthBucket> memo_;
  std::size_t correct_ = 0;
};

}  // namespace pdsim::prefill
