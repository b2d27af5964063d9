#include "pdsim/exp/decode_bench.h"

#include "pdsim/sim/engine.h"
#include "pdsim/sim/rng.h"

namespace pdsim::exp {

DecodeBenchResult run_decode_bench(const std::vector<Request>& requests,
                                   const cost::CostModelParams& params,
                                   decode::DecodePolicy policy,
                                   prefill::PredictorModel predictor,
                                   std::uint64_t seed) {
  sim::Engine engine;
  const cost::CostModel cost(params);
  sim::RngStreams rngs(seed);
  prefill::LengthPredictor lp(predictor,
                              rngs.get(std::string(sim::streams::kPredictor) + "/bench"));

  DecodeBenchResult out;
  long double jct_sum = 0;
  decode::DecodeInstance::Hooks hooks;
  hooks.on_complete = [&](const decode::DecodingRequest& r, SimTime t) {
    ++out.completed;
    jct_sum += t - r.req.arrival;
    out.makespan = std::max(out.makespan, t);
  };
  decode::DecodeInstance inst(1, engine, cost, policy, std::move(hooks));
  inst.keep_iteration_records(false);
  for (const auto& req : requests) {
    inst.announce(req, lp.predict(req));
    engine.schedule(req.arrival, 1, "kv_arrival", [&inst, id = req.id] {
      inst.receive_kv(id);
    });
  }
  engine.run_until(kForever);
  if (out.completed != requests.size()) {
    throw InvariantViolation("decode bench finished with unfinished requests");
  }
  out.mean_jct = out.completed ? static_cast<double>(jct_sum / out.completed) : 0.0;
  out.swap_outs = inst.stats().swap_outs;
  out.swap_ins = inst.stats().swap_ins;
  out.iterations = inst.stats().iterations;
  out.max_resident_pages = inst.stats().max_resident_pages;
  out.capacity_pages = params.capacity_pages();
  return out;
}

}  // namespace pdsim::exp
