#include "pdsim/workload/workload.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pdsim {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kQueued: return "queued";
    case Phase::kPrefilling: return "prefilling";
    case Phase::kTransferring: return "transferring";
    case Phase::kDecoding: return "decoding";
    case Phase::kDone: return "done";
  }
  return "?";
}

void Request::advance(Phase next) {
  if (next < phase) {
    throw InvariantViolation("request " + std::to_string(id) +
                             " moved backwards from " +
                             std::string(to_string(phase)) + " to " +
                             std::string(to_string(next)));
  }
  phase = next;
}

}  // namespace pdsim

namespace pdsim::workload {

std::string_view to_string(WorkloadClass c) {
  switch (c) {
    case WorkloadClass::kLPLD: return "LPLD";
    case WorkloadClass::kLPHD: return "LPHD";
    case WorkloadClass::kHPLD: return "HPLD";
    case WorkloadClass::kHPHD: return "HPHD";
    case WorkloadClass::kMixed: return "Mixed";
    case WorkloadClass::kTrace: return "Trace";
  }
  return "?";
}

WorkloadClass parse_workload_class(std::string_view s) {
  for (auto c : {WorkloadClass::kLPLD, WorkloadClass::kLPHD,
                 WorkloadClass::kHPLD, WorkloadClass::kHPHD,
                 WorkloadClass::kMixed, WorkloadClass::kTrace}) {
    if (s == to_string(c)) return c;
  }
  throw ConfigError("workload.class", "unknown class '" + std::string(s) + "'");
}

WorkloadClass classify(std::int32_t prompt_len, std::int32_t decode_len) {
  const bool hp = is_heavy_prefill(prompt_len);
  const bool hd = is_heavy_decode(decode_len);
  if (hp) return hd ? WorkloadClass::kHPHD : WorkloadClass::kHPLD;
  return hd ? WorkloadClass::kLPHD : WorkloadClass::kLPLD;
}

LengthParams LengthParams::sharegpt_like() {
  LengthParams p;
  p.light_prompt = {std::log(18.0), 1.0, 1, kHeavyPromptThreshold};
  p.heavy_prompt = {std::log(800.0), 0.35, kHeavyPromptThreshold + 1, 1536};
  p.light_decode = {std::log(40.0), 0.7, 1, kHeavyDecodeThreshold};
  p.heavy_decode = {std::log(350.0), 0.5, kHeavyDecodeThreshold + 1, 1024};
  return p;
}

namespace {

void validate_dist(const LengthDist& d, const std::string& key) {
  if (!(d.sigma >= 0.0) || !std::isfinite(d.sigma)) {
    throw ConfigError(key + ".sigma", "must be finite and >= 0");
  }
  if (!std::isfinite(d.mu)) throw ConfigError(key + ".mu", "must be finite");
  if (d.min < 1) throw ConfigError(key + ".min", "must be >= 1");
  if (d.max < d.min) throw ConfigError(key + ".max", "must be >= min");
}

std::int32_t sample_length(const LengthDist& d, sim::RngStream& rng) {
  // Rejection sampling of the truncated log-normal; clamps after many misses
  // so a badly placed distribution still terminates deterministically.
  constexpr int kMaxTries = 1000;
  double x = 0.0;
  for (int i = 0; i < kMaxTries; ++i) {
    x = std::round(rng.lognormal(d.mu, d.sigma));
    if (x >= d.min && x <= d.max) return static_cast<std::int32_t>(x);
  }
  return static_cast<std::int32_t>(
      std::clamp(x, static_cast<double>(d.min), static_cast<double>(d.max)));
}

WorkloadClass pick_class(const WorkloadSpec& spec, sim::RngStream& rng) {
  if (spec.cls != WorkloadClass::kMixed) return spec.cls;
  const double total =
      std::accumulate(spec.mix_weights.begin(), spec.mix_weights.end(), 0.0);
  double u = rng.uniform01() * total;
  static constexpr WorkloadClass kOrder[] = {
      WorkloadClass::kLPLD, WorkloadClass::kLPHD, WorkloadClass::kHPLD,
      WorkloadClass::kHPHD};
  for (std::size_t i = 0; i < 4; ++i) {
    if (u < spec.mix_weights[i]) return kOrder[i];
    u -= spec.mix_weights[i];
  }
  return kOrder[3];
}

}  // namespace

void WorkloadSpec::validate() const {
  if (n_requests < 1) throw ConfigError("workload.n_requests", "must be >= 1");
  if (arrival == ArrivalProcess::kPoisson &&
      (!(rate_per_s > 0.0) || !std::isfinite(rate_per_s))) {
    throw ConfigError("workload.arrival.rate", "must be > 0");
  }
  if (start < 0) throw ConfigError("workload.start_us", "must be >= 0");
  validate_dist(lengths.light_prompt, "workload.lengths.light_prompt");
  validate_dist(lengths.heavy_prompt, "workload.lengths.heavy_prompt");
  validate_dist(lengths.light_decode, "workload.lengths.light_decode");
  validate_dist(lengths.heavy_decode, "workload.lengths.heavy_decode");
  if (lengths.light_prompt.max > kHeavyPromptThreshold) {
    throw ConfigError("workload.lengths.light_prompt.max",
                      "light prompts must not exceed 512 tokens");
  }
  if (lengths.heavy_prompt.min <= kHeavyPromptThreshold) {
    throw ConfigError("workload.lengths.heavy_prompt.min",
                      "heavy prompts must exceed 512 tokens");
  }
  if (lengths.light_decode.max > kHeavyDecodeThreshold) {
    throw ConfigError("workload.lengths.light_decode.max",
                      "light decodes must not exceed 128 tokens");
  }
  if (lengths.heavy_decode.min <= kHeavyDecodeThreshold) {
    throw ConfigError("workload.lengths.heavy_decode.min",
                      "heavy decodes must exceed 128 tokens");
  }
  double total = 0.0;
  for (double w : mix_weights) {
    if (!(w >= 0.0)) throw ConfigError("workload.mix_weights", "must be >= 0");
    total += w;
  }
  if (cls == WorkloadClass::kMixed && !(total > 0.0)) {
    throw ConfigError("workload.mix_weights", "must not all be zero");
  }
  if (cls == WorkloadClass::kTrace && trace_path.empty()) {
    throw ConfigError("workload.trace", "required for class Trace");
  }
}

std::vector<Request> generate(const WorkloadSpec& spec, sim::RngStream& rng) {
  spec.validate();
  if (spec.cls == WorkloadClass::kTrace) return load_trace(spec.trace_path);

  std::vector<Request> out;
  out.reserve(spec.n_requests);
  double t_s = 0.0;
  for (std::size_t i = 0; i < spec.n_requests; ++i) {
    const WorkloadClass c = pick_class(spec, rng);
    const bool hp = c == WorkloadClass::kHPLD || c == WorkloadClass::kHPHD;
    const bool hd = c == WorkloadClass::kLPHD || c == WorkloadClass::kHPHD;
    Request r;
    r.id = static_cast<RequestId>(i);
    r.prompt_len = sample_length(
        hp ? spec.lengths.heavy_prompt : spec.lengths.light_prompt, rng);
    r.decode_len = sample_length(
        hd ? spec.lengths.heavy_decode : spec.lengths.light_decode, rng);
    if (spec.arrival == ArrivalProcess::kPoisson) {
      t_s += rng.exponential(spec.rate_per_s);
      r.arrival = spec.start + static_cast<SimTime>(std::llround(t_s * 1e6));
    } else {
      r.arrival = spec.start;
    }
    out.push_back(r);
  }
  return out;
}

namespace {

std::int64_t parse_int(const std::string& cell, std::size_t line,
                       const char* column) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(cell, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (cell.empty() || pos != cell.size()) {
    throw ConfigError("trace line " + std::to_string(line),
                      std::string("malformed ") + column + " '" + cell + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::vector<Request> parse_trace(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<Request> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      if (line != "arrival_us,prompt_len,decode_len" &&
          line != "arrival_us,prompt_len,decode_len,sla_us") {
        throw ConfigError("trace line " + std::to_string(line_no),
                          "expected header arrival_us,prompt_len,decode_len"
                          "[,sla_us]");
      }
      have_header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() < 3 || cells.size() > 4) {
      throw ConfigError("trace line " + std::to_string(line_no),
                        "expected 3 or 4 columns");
    }
    Request r;
    r.id = static_cast<RequestId>(out.size());
    r.arrival = parse_int(cells[0], line_no, "arrival_us");
    const auto prompt = parse_int(cells[1], line_no, "prompt_len");
    const auto decode = parse_int(cells[2], line_no, "decode_len");
    if (r.arrival < 0) {
      throw ConfigError("trace line " + std::to_string(line_no),
                        "negative arrival_us");
    }
    if (prompt < 1 || decode < 1) {
      throw ConfigError("trace line " + std::to_string(line_no),
                        "token counts must be >= 1");
    }
    r.prompt_len = static_cast<std::int32_t>(prompt);
    r.decode_len = static_cast<std::int32_t>(decode);
    if (cells.size() == 4 && !cells[3].empty()) {
      r.sla = parse_int(cells[3], line_no, "sla_us");
    }
    out.push_back(r);
  }
  if (!have_header) throw ConfigError("trace", "empty trace file");
  std::stable_sort(out.begin(), out.end(),
                   [](const Request& a, const Request& b) {
                     return a.arrival < b.arrival;
                   });
  return out;
}

std::vector<Request> load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("workload.trace", "cannot open " + path.string());
  return parse_trace(in);
}

void export_trace(std::ostream& out, const std::vector<Request>& requests) {
  const bool with_sla = std::any_of(requests.begin(), requests.end(),
                                    [](const Request& r) { return r.sla; });
  out << "arrival_us,prompt_len,decode_len" << (with_sla ? ",sla_us" : "")
      << '\n';
  for (const auto& r : requests) {
    out << r.arrival << ',' << r.prompt_len << ',' << r.decode_len;
    if (with_sla) {
      out << ',';
      if (r.sla) out << *r.sla;
    }
    out << '\n';
  }
}

void export_trace(const std::filesystem::path& path,
                  const std::vector<Request>& requests) {
  std::ofstream out(path);
  if (!out) throw ConfigError("trace", "cannot write " + path.string());
  export_trace(out, requests);
}

std::uint64_t fingerprint(const std::vector<Request>& requests) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& r : requests) {
    mix(r.id);
    mix(static_cast<std::uint64_t>(r.arrival));
    mix(static_cast<std::uint64_t>(r.prompt_len));
    mix(static_cast<std::uint64_t>(r.decode_len));
  }
  return h;
}

}  // namespace pdsim::workload
