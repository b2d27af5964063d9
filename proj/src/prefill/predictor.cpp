#include "pdsim/prefill/predictor.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace pdsim::prefill {

LengthBucket true_bucket(std::int32_t decode_len, std::int32_t granularity) {
  return LengthBucket{decode_len / granularity, granularity};
}

double PredictorModel::default_accuracy(std::int32_t granularity) {
  switch (granularity) {
    case 100: return 0.589;
    case 200: return 0.749;
    case 400: return 0.85;
  }
  throw ConfigError("predictor.accuracy",
                    "no default accuracy for granularity " +
                        std::to_string(granularity) + "; set it explicitly");
}

void PredictorModel::validate() const {
  if (granularity < 1) throw ConfigError("predictor.granularity", "must be >= 1");
  if (!(accuracy > 0.0 && accuracy <= 1.0)) {
    throw ConfigError("predictor.accuracy", "must be in (0, 1]");
  }
  if (max_decode_len < 1) {
    throw ConfigError("predictor.max_decode_len", "must be >= 1");
  }
  if (!(confusion_decay > 0.0 && confusion_decay < 1.0)) {
    throw ConfigError("predictor.confusion_decay", "must be in (0, 1)");
  }
}

LengthPredictor::LengthPredictor(PredictorModel model, sim::RngStream& rng)
    : model_(model), rng_(&rng) {
  model_.validate();
}

LengthBucket LengthPredictor::predict(const Request& req) {
  if (auto it = memo_.find(req.id); it != memo_.end()) return it->second;
  const LengthBucket truth = true_bucket(req.decode_len, model_.granularity);
  LengthBucket out = truth;
  if (!rng_->bernoulli(model_.accuracy)) out = mispredict(truth.index);
  if (out == truth) ++correct_;
  memo_.emplace(req.id, out);
  return out;
}

LengthBucket LengthPredictor::mispredict(std::int32_t truth) {
  // Candidates truth +- k, truncated to [0, max_bucket], weighted decay^k.
  const std::int32_t max_b = std::max(model_.max_bucket(), truth);
  std::vector<std::int32_t> buckets;
  std::vector<double> weights;
  double total = 0.0;
  for (std::int32_t b = 0; b <= max_b; ++b) {
    if (b == truth) continue;
    const double w = std::pow(model_.confusion_decay, std::abs(b - truth));
    if (w <= 0.0) continue;
    buckets.push_back(b);
    weights.push_back(w);
    total += w;
  }
  if (buckets.empty()) return LengthBucket{truth, model_.granularity};
  double u = rng_->uniform01() * total;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (u < weights[i]) return LengthBucket{buckets[i], model_.granularity};
    u -= weights[i];
  }
  return LengthBucket{buckets.back(), model_.granularity};
}

}  // namespace pdsim::prefill
