#include "pdsim/exp/runner.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pdsim/baseline/coupled_cluster.h"
#include "pdsim/control/cluster.h"

namespace pdsim::exp {

using nlohmann::json;
using nlohmann::ordered_json;

Stats summarize(std::vector<SimTime> values) {
  Stats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  long double sum = 0;
  for (SimTime v : values) sum += v;
  s.mean = static_cast<double>(sum / n);
  s.median = n % 2 ? static_cast<double>(values[n / 2])
                   : (static_cast<double>(values[n / 2 - 1]) +
                      static_cast<double>(values[n / 2])) / 2.0;
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n)));
  s.p99 = static_cast<double>(values[std::max<std::size_t>(rank, 1) - 1]);
  return s;
}

std::vector<Request> build_workload(const ExperimentConfig& config,
                                    sim::RngStreams& rngs) {
  std::vector<Request> all;
  for (const auto& spec : config.workload) {
    auto part = spec.cls == workload::WorkloadClass::kTrace
                    ? workload::load_trace(spec.trace_path)
                    : workload::generate(spec, rngs.get(sim::streams::kWorkload));
    all.insert(all.end(), part.begin(), part.end());
  }
  if (config.workload.size() > 1) {
    std::stable_sort(all.begin(), all.end(), [](const Request& a, const Request& b) {
      return a.arrival < b.arrival;
    });
    for (std::size_t i = 0; i < all.size(); ++i) all[i].id = static_cast<RequestId>(i);
  }
  return all;
}

RunSummary summarize_rows(const std::vector<control::RequestRow>& rows) {
  RunSummary s;
  s.requests = rows.size();
  std::vector<SimTime> ttft, jct, wait;
  for (const auto& r : rows) {
    if (!r.done()) continue;
    ++s.completed;
    ttft.push_back(r.ttft());
    jct.push_back(r.jct());
    wait.push_back(r.prefill_wait());
    s.makespan = std::max(s.makespan, r.completion);
    s.swaps += static_cast<std::uint64_t>(r.swaps);
    if (r.rerouted) ++s.reroutes;
  }
  s.ttft = summarize(std::move(ttft));
  s.jct = summarize(std::move(jct));
  s.prefill_wait = summarize(std::move(wait));
  return s;
}

namespace {

void finish_summary(RunSummary& s) {
  s.resource_usage = 0;
  for (const auto& span : s.instances) s.resource_usage += span.charged();
  s.perf_per_dollar =
      s.resource_usage > 0
          ? static_cast<double>(s.completed) / (static_cast<double>(s.resource_usage) / 1e6)
          : 0.0;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  sim::RngStreams rngs(config.seed);
  return run_experiment(config, build_workload(config, rngs));
}

RunResult run_experiment(const ExperimentConfig& config,
                         const std::vector<Request>& requests) {
  config.validate();
  sim::Engine engine;
  engine.set_max_events(config.max_events);
  engine.enable_trace(config.record_events);
  const cost::CostModel cost(config.cost);
  sim::RngStreams rngs(config.seed);
  control::RequestStatusTable table;

  RunResult result;
  result.workload = requests;
  std::vector<InstanceSpan> spans;
  std::uint64_t swap_ins = 0;
  std::uint64_t reroutes = 0;

  if (config.system == SystemKind::kDisaggregated) {
    control::DisaggregatedCluster cluster(engine, cost, config.cluster, rngs, table);
    cluster.start();
    cluster.inject(requests);
    engine.run_until(kForever);
    if (cluster.counters().role_violations > 0) {
      throw InvariantViolation("an instance did work outside its current role");
    }
    for (const auto& s : cluster.spans()) {
      spans.push_back({s.node, std::string(to_string(s.role)), s.first_start,
                       s.last_end, s.busy});
    }
    for (std::size_t i = 0; i < cluster.node_count(); ++i) {
      swap_ins += cluster.decode_at(static_cast<InstanceId>(i + 1)).stats().swap_ins;
    }
    reroutes = cluster.counters().reroutes;
    result.summary.flips = cluster.flips();
  } else {
    baseline::CoupledCluster cluster(engine, cost, config.n_coupled, config.coupled, table);
    cluster.inject(requests);
    engine.run_until(kForever);
    for (const auto& s : cluster.spans()) {
      if (s.first_start < 0) continue;
      spans.push_back({s.node, "coupled", s.first_start, s.last_end, s.busy});
    }
    for (std::size_t i = 0; i < cluster.size(); ++i) {
      swap_ins += cluster.instance(static_cast<InstanceId>(i + 1)).stats().swap_ins;
    }
  }

  if (table.completed() != requests.size()) {
    throw InvariantViolation("run ended with " +
                             std::to_string(requests.size() - table.completed()) +
                             " of " + std::to_string(requests.size()) +
                             " requests unfinished");
  }

  result.rows = table.rows();
  RunSummary& s = result.summary;
  const auto flips = std::move(s.flips);
  s = summarize_rows(result.rows);
  s.flips = flips;
  s.name = config.name;
  s.system = std::string(to_string(config.system));
  s.seed = config.seed;
  s.workload_fingerprint = workload::fingerprint(requests);
  s.swap_ins = swap_ins;
  s.reroutes = reroutes;
  s.events = engine.events_fired();
  s.instances = std::move(spans);
  finish_summary(s);
  result.trace = engine.trace();
  return result;
}

namespace {

ordered_json stats_json(const Stats& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["p99"] = s.p99;
  return j;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

constexpr const char* kCsvHeader =
    "id,arrival_us,prompt_len,decode_len,prefill_instance,decode_instance,"
    "prefill_start_us,first_token_us,decode_start_us,completion_us,ttft_us,"
    "jct_us,prefill_wait_us,predicted_bucket,swaps,rerouted";

}  // namespace

ordered_json summary_to_json(const RunSummary& s,
                             const std::vector<control::RequestRow>& rows) {
  ordered_json j;
  j["format"] = "pdsim-summary-v1";
  j["name"] = s.name;
  j["system"] = s.system;
  j["seed"] = s.seed;
  j["workload_fingerprint"] = hex64(s.workload_fingerprint);
  j["requests"] = s.requests;
  j["completed"] = s.completed;
  j["ttft_us"] = stats_json(s.ttft);
  j["jct_us"] = stats_json(s.jct);
  j["prefill_wait_us"] = stats_json(s.prefill_wait);
  j["makespan_us"] = s.makespan;
  j["resource_usage_us"] = s.resource_usage;
  j["perf_per_dollar"] = s.perf_per_dollar;
  j["swaps"] = s.swaps;
  j["swap_ins"] = s.swap_ins;
  j["reroutes"] = s.reroutes;
  j["events"] = s.events;
  j["flips"] = ordered_json::array();
  for (const auto& f : s.flips) {
    ordered_json fj;
    fj["instance"] = f.node;
    fj["from"] = to_string(f.from);
    fj["to"] = to_string(f.to);
    fj["requested_us"] = f.requested;
    fj["drained_us"] = f.drained;
    fj["completed_us"] = f.completed;
    fj["latency_us"] = f.done() ? f.latency() : -1;
    j["flips"].push_back(fj);
  }
  j["instances"] = ordered_json::array();
  for (const auto& span : s.instances) {
    ordered_json ij;
    ij["instance"] = span.instance;
    ij["role"] = span.role;
    ij["first_start_us"] = span.first_start;
    ij["last_end_us"] = span.last_end;
    ij["busy_us"] = span.busy;
    ij["charged_us"] = span.charged();
    j["instances"].push_back(ij);
  }
  j["per_request"] = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json rj;
    rj["id"] = r.id;
    rj["arrival_us"] = r.arrival;
    rj["ttft_us"] = r.ttft();
    rj["jct_us"] = r.jct();
    rj["prefill_instance"] = r.prefill_instance;
    rj["decode_instance"] = r.decode_instance;
    rj["swaps"] = r.swaps;
    rj["rerouted"] = r.rerouted;
    j["per_request"].push_back(rj);
  }
  return j;
}

void write_requests_csv(std::ostream& out, const std::vector<control::RequestRow>& rows) {
  out << "# pdsim requests v1\n" << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.id << ',' << r.arrival << ',' << r.prompt_len << ',' << r.decode_len << ','
        << r.prefill_instance << ',' << r.decode_instance << ',' << r.prefill_start << ','
        << r.first_token << ',' << r.decode_start << ',' << r.completion << ','
        << r.ttft() << ',' << r.jct() << ',' << r.prefill_wait() << ','
        << r.predicted_bucket << ',' << r.swaps << ',' << (r.rerouted ? 1 : 0) << '\n';
  }
}

std::vector<control::RequestRow> read_requests_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "# pdsim requests v1") {
    throw ConfigError("requests.csv", "missing '# pdsim requests v1' header");
  }
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ConfigError("requests.csv", "unexpected column header");
  }
  std::vector<control::RequestRow> rows;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<long long> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        f.push_back(std::stoll(cell));
      } catch (const std::exception&) {
        throw ConfigError("requests.csv", "line " + std::to_string(lineno) + ": bad field");
      }
    }
    if (f.size() != 16) {
      throw ConfigError("requests.csv", "line " + std::to_string(lineno) + ": expected 16 fields");
    }
    control::RequestRow r;
    r.id = static_cast<RequestId>(f[0]);
    r.arrival = f[1];
    r.prompt_len = static_cast<std::int32_t>(f[2]);
    r.decode_len = static_cast<std::int32_t>(f[3]);
    r.prefill_instance = static_cast<InstanceId>(f[4]);
    r.decode_instance = static_cast<InstanceId>(f[5]);
    r.prefill_start = f[6];
    r.first_token = f[7];
    r.decode_start = f[8];
    r.completion = f[9];
    r.predicted_bucket = static_cast<std::int32_t>(f[13]);
    r.swaps = static_cast<std::int32_t>(f[14]);
    r.rerouted = f[15] != 0;
    r.phase = r.completion >= 0 ? Phase::kDone : Phase::kQueued;
    rows.push_back(r);
  }
  return rows;
}

void write_outputs(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.json");
    out << summary_to_json(result.summary, result.rows).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "requests.csv");
    write_requests_csv(out, result.rows);
  }
  if (!result.trace.empty()) {
    std::ofstream out(dir / "events.jsonl");
    sim::write_trace_jsonl(out, result.trace);
  }
}

json load_summary(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "summary.json" : dir;
  std::ifstream in(path);
  if (!in) throw ConfigError("summary", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("summary", path.string() + ": " + e.what());
  }
}

std::vector<ComparisonEntry> compare(const json& a, const json& b) {
  auto field = [](const json& j, const char* key) -> const json& {
    if (!j.contains(key)) throw ConfigError(key, "summary lacks this field");
    return j.at(key);
  };
  if (field(a, "workload_fingerprint") != field(b, "workload_fingerprint")) {
    throw ConfigError("workload_fingerprint",
                      "summaries come from different workloads");
  }
  std::vector<ComparisonEntry> out;
  auto add = [&](std::string metric, double va, double vb, bool higher_better) {
    ComparisonEntry e;
    e.metric = std::move(metric);
    e.a = va;
    e.b = vb;
    if (vb != 0.0) {
      e.ratio = va / vb;
    } else {
      e.ratio = va == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    e.improvement = higher_better ? e.ratio - 1.0 : 1.0 - e.ratio;
    out.push_back(std::move(e));
  };
  for (const char* m : {"ttft_us", "jct_us"}) {
    for (const char* s : {"mean", "median", "p99"}) {
      add(std::string(m) + "." + s, field(a, m).at(s).get<double>(),
          field(b, m).at(s).get<double>(), false);
    }
  }
  add("resource_usage_us", field(a, "resource_usage_us").get<double>(),
      field(b, "resource_usage_us").get<double>(), false);
  add("perf_per_dollar", field(a, "perf_per_dollar").get<double>(),
      field(b, "perf_per_dollar").get<double>(), true);
  return out;
}

void print_comparison(std::ostream& out, const std::vector<ComparisonEntry>& table) {
  out << std::left << std::setw(20) << "metric" << std::right << std::setw(16) << "a"
      << std::setw(16) << "b" << std::setw(10) << "a/b" << std::setw(13) << "improvement"
      << '\n';
  out << std::fixed;
  for (const auto& e : table) {
    out << std::left << std::setw(20) << e.metric << std::right << std::setprecision(1)
        << std::setw(16) << e.a << std::setw(16) << e.b << std::setprecision(4)
        << std::setw(10) << e.ratio << std::setprecision(1) << std::setw(12)
        << e.improvement * 100.0 << "%\n";
  }
  out << std::defaultfloat;
}

}  // namespace pdsim::exp
