#include <glob.h>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdsim/exp/config.h"
#include "pdsim/exp/runner.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  return out;
}

pdsim::exp::RunResult run_one(const std::string& config_path,
                              std::optional<std::uint64_t> seed, bool events,
                              const std::filesystem::path& out_dir) {
  auto config = pdsim::exp::load_config(config_path);
  if (seed) config.seed = *seed;
  if (events) config.record_events = true;
  auto result = pdsim::exp::run_experiment(config);
  pdsim::exp::write_outputs(result, out_dir);
  return result;
}

void print_summary_line(std::ostream& out, const pdsim::exp::RunSummary& s) {
  out << std::fixed << std::setprecision(1) << s.name << " [" << s.system << "] seed "
      << s.seed << ": " << s.completed << "/" << s.requests << " done, ttft "
      << s.ttft.mean / 1000.0 << " ms, jct " << s.jct.mean / 1000.0 << " ms, resource "
      << static_cast<double>(s.resource_usage) / 1e6 << " s, perf/$ "
      << std::setprecision(3) << s.perf_per_dollar << ", swaps " << s.swaps << ", flips "
      << s.flips.size() << '\n'
      << std::defaultfloat;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disaggregated LLM inference serving simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool events = false;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--events", events, "Also write events.jsonl");

  std::string dir_a, dir_b;
  auto* cmp = app.add_subcommand("compare", "Compare two runs (b is the baseline)");
  cmp->add_option("--a", dir_a, "Run directory or summary.json")->required();
  cmp->add_option("--b", dir_b, "Baseline run directory or summary.json")->required();

  std::string pattern;
  std::string sweep_out = "sweep_out";
  auto* sweep = app.add_subcommand("sweep", "Run every config matching a glob");
  sweep->add_option("--configs", pattern, "Config glob, e.g. 'configs/*.json'")->required();
  sweep->add_option("--out", sweep_out, "Parent output directory");
  sweep->add_option("--seed", seed, "Override every config's seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      auto result = run_one(config_path, seed, events, out_dir);
      print_summary_line(std::cout, result.summary);
    } else if (*cmp) {
      const auto table =
          pdsim::exp::compare(pdsim::exp::load_summary(dir_a), pdsim::exp::load_summary(dir_b));
      pdsim::exp::print_comparison(std::cout, table);
    } else if (*sweep) {
      const auto configs = expand_glob(pattern);
      if (configs.empty()) {
        throw pdsim::ConfigError("configs", "no file matches '" + pattern + "'");
      }
      for (const auto& c : configs) {
        const auto dir = std::filesystem::path(sweep_out) / std::filesystem::path(c).stem();
        auto result = run_one(c, seed, false, dir);
        print_summary_line(std::cout, result.summary);
      }
    }
  } catch (const pdsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pdsim::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  }
  return 0;
}
