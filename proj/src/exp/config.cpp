#include "pdsim/exp/config.h"

#include <algorithm>
#include <fstream>
#include <initializer_list>

namespace pdsim::exp {

using nlohmann::json;

std::string_view to_string(SystemKind s) {
  return s == SystemKind::kCoupled ? "coupled" : "disaggregated";
}

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> known) {
  check_object(j, path);
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* k) { return key == k; })) {
      throw ConfigError(join(path, key), "unknown key");
    }
  }
}

template <typename T>
bool read(const json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return false;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join(path, key), e.what());
  }
  return true;
}

workload::LengthDist read_dist(const json& j, const std::string& path,
                               workload::LengthDist d) {
  check_keys(j, path, {"mu", "sigma", "min", "max"});
  read(j, path, "mu", d.mu);
  read(j, path, "sigma", d.sigma);
  read(j, path, "min", d.min);
  read(j, path, "max", d.max);
  return d;
}

workload::WorkloadSpec read_workload(const json& j, const std::string& path,
                                     const std::filesystem::path& base_dir) {
  check_keys(j, path, {"class", "n_requests", "arrival", "start_us",
                       "mix_weights", "trace", "lengths"});
  workload::WorkloadSpec w;
  std::string cls;
  if (read(j, path, "class", cls)) w.cls = workload::parse_workload_class(cls);
  read(j, path, "n_requests", w.n_requests);
  if (j.contains("arrival")) {
    const auto& a = j.at("arrival");
    const std::string ap = join(path, "arrival");
    check_keys(a, ap, {"process", "rate"});
    std::string process = "closed_loop";
    read(a, ap, "process", process);
    if (process == "closed_loop") {
      w.arrival = workload::ArrivalProcess::kClosedLoop;
    } else if (process == "poisson") {
      w.arrival = workload::ArrivalProcess::kPoisson;
    } else {
      throw ConfigError(join(ap, "process"), "unknown process '" + process + "'");
    }
    read(a, ap, "rate", w.rate_per_s);
  }
  read(j, path, "start_us", w.start);
  if (j.contains("mix_weights")) {
    std::vector<double> mw;
    read(j, path, "mix_weights", mw);
    if (mw.size() != 4) {
      throw ConfigError(join(path, "mix_weights"), "expected 4 weights");
    }
    std::copy(mw.begin(), mw.end(), w.mix_weights.begin());
  }
  std::string trace;
  if (read(j, path, "trace", trace)) {
    std::filesystem::path p(trace);
    w.trace_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (j.contains("lengths")) {
    const auto& l = j.at("lengths");
    const std::string lp = join(path, "lengths");
    check_keys(l, lp, {"light_prompt", "heavy_prompt", "light_decode", "heavy_decode"});
    auto& L = w.lengths;
    if (l.contains("light_prompt")) {
      L.light_prompt = read_dist(l.at("light_prompt"), join(lp, "light_prompt"), L.light_prompt);
    }
    if (l.contains("heavy_prompt")) {
      L.heavy_prompt = read_dist(l.at("heavy_prompt"), join(lp, "heavy_prompt"), L.heavy_prompt);
    }
    if (l.contains("light_decode")) {
      L.light_decode = read_dist(l.at("light_decode"), join(lp, "light_decode"), L.light_decode);
    }
    if (l.contains("heavy_decode")) {
      L.heavy_decode = read_dist(l.at("heavy_decode"), join(lp, "heavy_decode"), L.heavy_decode);
    }
  }
  w.validate();
  return w;
}

void read_policies(const json& j, ExperimentConfig& c) {
  const std::string path = "policies";
  check_keys(j, path, {"prefill", "dispatcher", "decode", "flip"});
  auto& pc = c.cluster.prefill;
  if (j.contains("prefill")) {
    const auto& p = j.at("prefill");
    const std::string pp = "policies.prefill";
    check_keys(p, pp, {"order", "sched_batch"});
    std::string order;
    if (read(p, pp, "order", order)) pc.policy.order = prefill::parse_prefill_order(order);
    read(p, pp, "sched_batch", pc.policy.sched_batch);
  }
  std::string dispatcher;
  if (read(j, path, "dispatcher", dispatcher)) {
    pc.dispatch = prefill::parse_dispatch_policy(dispatcher);
  }
  if (j.contains("decode")) {
    const auto& d = j.at("decode");
    const std::string dp = "policies.decode";
    check_keys(d, dp, {"policy", "max_batch", "bound"});
    auto& dc = c.cluster.decode;
    std::string kind;
    if (read(d, dp, "policy", kind)) dc.kind = decode::parse_decode_policy(kind);
    if (d.contains("max_batch")) {
      if (d.at("max_batch").is_null()) {
        dc.max_batch.reset();
      } else {
        std::int32_t mb = 0;
        read(d, dp, "max_batch", mb);
        dc.max_batch = mb;
      }
    }
    std::string bound;
    if (read(d, dp, "bound", bound)) {
      if (bound == "lower") {
        dc.bound = decode::ReserveBound::kLower;
      } else if (bound == "upper") {
        dc.bound = decode::ReserveBound::kUpper;
      } else {
        throw ConfigError("policies.decode.bound", "expected 'lower' or 'upper'");
      }
    }
  }
  if (j.contains("flip")) {
    const auto& f = j.at("flip");
    const std::string fp = "policies.flip";
    check_keys(f, fp, {"enabled", "threshold", "window_us", "require_target_demand",
                       "demand_threshold", "min_latency_us", "max_latency_us"});
    auto& fc = c.cluster.flip;
    read(f, fp, "enabled", fc.enabled);
    read(f, fp, "threshold", fc.threshold);
    read(f, fp, "window_us", fc.window);
    read(f, fp, "require_target_demand", fc.require_target_demand);
    read(f, fp, "demand_threshold", fc.demand_threshold);
    read(f, fp, "min_latency_us", fc.min_latency);
    read(f, fp, "max_latency_us", fc.max_latency);
  }
}

void read_predictor(const json& j, ExperimentConfig& c) {
  const std::string path = "predictor";
  check_keys(j, path, {"granularity", "accuracy", "mode", "max_decode_len",
                       "confusion_decay"});
  auto& p = c.cluster.prefill.predictor;
  read(j, path, "granularity", p.granularity);
  if (!read(j, path, "accuracy", p.accuracy)) {
    p.accuracy = prefill::PredictorModel::default_accuracy(p.granularity);
  }
  std::string mode;
  if (read(j, path, "mode", mode)) p.mode = cost::parse_predictor_mode(mode);
  read(j, path, "max_decode_len", p.max_decode_len);
  read(j, path, "confusion_decay", p.confusion_decay);
}

cost::CostModelParams read_cost(const json& j, const std::filesystem::path& base_dir) {
  check_object(j, "cost_model");
  cost::CostModelParams p;
  std::string calibration;
  if (read(j, "cost_model", "calibration", calibration)) {
    std::filesystem::path cp(calibration);
    if (cp.is_relative() && !base_dir.empty()) cp = base_dir / cp;
    p = cost::load_calibration(cp, p);
  }
  std::string preset;
  if (read(j, "cost_model", "preset", preset)) p = cost::with_preset(p, preset);
  return cost::params_from_json(j, p);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (workload.empty()) throw ConfigError("workload", "no workload phases");
  for (const auto& w : workload) w.validate();
  if (system == SystemKind::kDisaggregated) {
    cluster.validate();
  } else {
    if (n_coupled < 1) throw ConfigError("cluster.n_coupled", "must be >= 1");
    coupled.validate();
  }
  cost.validate();
  if (max_events < 1) throw ConfigError("max_events", "must be >= 1");
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "", {"name", "seed", "system", "workload", "cluster", "policies",
                     "coupled", "predictor", "cost_model", "output", "max_events"});
  ExperimentConfig c;
  read(j, "", "name", c.name);
  read(j, "", "seed", c.seed);
  std::string system;
  if (!read(j, "", "system", system)) {
    throw ConfigError("system", "required: 'disaggregated' or 'coupled'");
  }
  if (system == "disaggregated") {
    c.system = SystemKind::kDisaggregated;
  } else if (system == "coupled") {
    c.system = SystemKind::kCoupled;
  } else {
    throw ConfigError("system", "expected 'disaggregated' or 'coupled'");
  }

  if (j.contains("workload")) {
    const auto& w = j.at("workload");
    check_object(w, "workload");
    c.workload.clear();
    if (w.contains("phases")) {
      if (w.size() != 1 || !w.at("phases").is_array() || w.at("phases").empty()) {
        throw ConfigError("workload.phases", "expected a non-empty array and no other keys");
      }
      for (std::size_t i = 0; i < w.at("phases").size(); ++i) {
        c.workload.push_back(read_workload(w.at("phases")[i],
                                           "workload.phases[" + std::to_string(i) + "]",
                                           base_dir));
      }
    } else {
      c.workload.push_back(read_workload(w, "workload", base_dir));
    }
  }

  if (j.contains("cluster")) {
    const auto& cl = j.at("cluster");
    check_keys(cl, "cluster", {"n_prefill", "n_decode", "n_coupled",
                               "monitor_period_us", "park_limit_us"});
    const bool coupled = c.system == SystemKind::kCoupled;
    for (const char* k : {"n_prefill", "n_decode", "monitor_period_us", "park_limit_us"}) {
      if (coupled && cl.contains(k)) {
        throw ConfigError(std::string("cluster.") + k, "not used by a coupled system");
      }
    }
    if (!coupled && cl.contains("n_coupled")) {
      throw ConfigError("cluster.n_coupled", "not used by a disaggregated system");
    }
    read(cl, "cluster", "n_prefill", c.cluster.n_prefill);
    read(cl, "cluster", "n_decode", c.cluster.n_decode);
    read(cl, "cluster", "n_coupled", c.n_coupled);
    read(cl, "cluster", "monitor_period_us", c.cluster.monitor_period);
    read(cl, "cluster", "park_limit_us", c.cluster.park_limit);
  }
  if (j.contains("policies")) read_policies(j.at("policies"), c);
  if (j.contains("coupled")) {
    const auto& cp = j.at("coupled");
    check_keys(cp, "coupled", {"prefill_batch", "max_batch"});
    read(cp, "coupled", "prefill_batch", c.coupled.prefill_batch);
    if (cp.contains("max_batch")) {
      if (cp.at("max_batch").is_null()) {
        c.coupled.max_batch.reset();
      } else {
        std::int32_t mb = 0;
        read(cp, "coupled", "max_batch", mb);
        c.coupled.max_batch = mb;
      }
    }
  }
  if (j.contains("predictor")) read_predictor(j.at("predictor"), c);
  if (j.contains("cost_model")) c.cost = read_cost(j.at("cost_model"), base_dir);
  if (j.contains("output")) {
    check_keys(j.at("output"), "output", {"events"});
    read(j.at("output"), "output", "events", c.record_events);
  }
  read(j, "", "max_events", c.max_events);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j, path.parent_path());
  if (!j.contains("name")) c.name = path.stem().string();
  return c;
}

}  // namespace pdsim::exp
