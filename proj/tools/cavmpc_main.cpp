#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cavmpc/scenario_io.hpp"
#include "cavmpc/simulation.hpp"
#include "cavmpc/sweep.hpp"
#include "cavmpc/trace_io.hpp"

namespace {

cavmpc::ScenarioConfig load_scenario(const std::string& path) {
  if (path.empty()) return cavmpc::ScenarioConfig{};
  return cavmpc::parse_scenario(path);
}

// "a:b" inclusive range or a comma-separated list.
std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  const size_t colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::uint64_t lo = cavmpc::detail::parse_u64(spec.substr(0, colon), "--seeds");
    const std::uint64_t hi = cavmpc::detail::parse_u64(spec.substr(colon + 1), "--seeds");
    if (hi < lo) throw cavmpc::ParseError("--seeds: range end below start");
    if (hi - lo >= 100000) throw cavmpc::ParseError("--seeds: range too large");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    for (const std::string& item : cavmpc::detail::split(spec, ','))
      seeds.push_back(cavmpc::detail::parse_u64(item, "--seeds"));
  }
  if (seeds.empty()) throw cavmpc::ParseError("--seeds: empty seed list");
  return seeds;
}

void apply_overrides(cavmpc::ScenarioConfig& cfg, const std::optional<std::uint64_t>& seed,
                     const std::optional<int>& vehicles, const std::optional<int>& horizon,
                     const std::optional<double>& duration) {
  if (seed) cfg.seed = *seed;
  if (vehicles) {
    if (*vehicles != cfg.n_vehicles) cfg.init.clear();
    cfg.n_vehicles = *vehicles;
  }
  if (horizon) cfg.mpc.horizon = *horizon;
  if (duration) cfg.duration = *duration;
}

void print_run_summary(const cavmpc::SimTrace& trace, const cavmpc::Metrics& metrics) {
  std::printf("steps            %d (%.1f s%s)\n", metrics.steps, metrics.end_time,
              trace.stopped_early ? ", ended at standstill" : "");
  std::printf("collision        %s\n", metrics.collision ? "YES" : "no");
  std::printf("min bumper gap   %.3f m\n", metrics.min_bumper_gap);
  std::printf("min margin       %.3f m\n", metrics.min_margin);
  std::printf("violations       %d (max slack %.6f m)\n", metrics.violation_count,
              metrics.max_slack);
  std::printf("terminal gap     %.3f m\n", metrics.terminal_cav_gap);
  std::printf("all stopped      %s\n", metrics.all_stopped ? "yes" : "no");
  std::printf("solve time       median %.2f ms, p95 %.2f ms\n", metrics.solve_ms_median,
              metrics.solve_ms_p95);
  for (const std::string& ev : trace.events) std::printf("event: %s\n", ev.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon safe braking for an automated vehicle behind human traffic"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> vehicles, horizon;
  std::optional<double> duration;

  CLI::App* run = app.add_subcommand("run", "simulate one scenario and write its tables");
  run->add_option("--scenario", scenario_path, "scenario file (INI); defaults built in");
  run->add_option("--out", out_dir, "output directory")->capture_default_str();
  run->add_option("--seed", seed, "override the RNG seed");
  run->add_option("--vehicles", vehicles, "override the vehicle count (controlled one included)");
  run->add_option("--horizon", horizon, "override the prediction horizon (steps)");
  run->add_option("--duration", duration, "override the run length [s]");

  std::string seed_spec = "1:50";
  int jobs = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "run a seed batch and aggregate the results");
  sweep->add_option("--scenario", scenario_path, "scenario file (INI); defaults built in");
  sweep->add_option("--out", out_dir, "output directory")->capture_default_str();
  sweep->add_option("--seeds", seed_spec, "seed list 'a,b,c' or range 'a:b'")
      ->capture_default_str();
  sweep->add_option("--vehicles", vehicles, "pin the vehicle count instead of cycling 3..6");
  sweep->add_option("--horizon", horizon, "override the prediction horizon (steps)");
  sweep->add_option("--duration", duration, "override the run length [s]");
  sweep->add_option("--jobs", jobs, "worker threads")->capture_default_str();

  CLI::App* check = app.add_subcommand("check", "validate a scenario file and echo it");
  check->add_option("--scenario", scenario_path, "scenario file (INI)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      cavmpc::ScenarioConfig cfg = load_scenario(scenario_path);
      apply_overrides(cfg, seed, vehicles, horizon, duration);
      const auto [trace, metrics] = cavmpc::run_simulation(cfg);
      cavmpc::write_outputs(trace, metrics, out_dir);
      std::printf("wrote %s/{trajectory.csv,cav.csv,estimates.csv,metrics.txt}\n",
                  out_dir.c_str());
      print_run_summary(trace, metrics);
      return metrics.collision ? 2 : 0;
    }
    if (sweep->parsed()) {
      cavmpc::RunManifest manifest;
      manifest.base = load_scenario(scenario_path);
      manifest.seeds = parse_seed_spec(seed_spec);
      manifest.out_dir = out_dir;
      manifest.vehicles_override = vehicles;
      manifest.horizon_override = horizon;
      manifest.duration_override = duration;
      manifest.jobs = jobs;
      const cavmpc::SweepReport report = cavmpc::run_sweep(manifest);
      for (const cavmpc::RunSummary& s : report.runs) {
        if (!s.completed) {
          std::printf("seed %llu  n=%d  ERROR %s\n",
                      static_cast<unsigned long long>(s.seed), s.n_vehicles, s.error.c_str());
          continue;
        }
        std::printf("seed %llu  n=%d  %s  min_gap %.2f  violations %d  terminal_gap %.2f\n",
                    static_cast<unsigned long long>(s.seed), s.n_vehicles,
                    s.metrics.collision ? "COLLISION" : (s.metrics.all_stopped ? "stopped"
                                                                               : "running"),
                    s.metrics.min_bumper_gap, s.metrics.violation_count,
                    s.metrics.terminal_cav_gap);
      }
      std::printf("sweep: %d/%zu completed, %d collisions, %d violations, min gap %.3f m\n",
                  report.completed_runs, report.runs.size(), report.collisions,
                  report.total_violations, report.min_gap_overall);
      std::printf("wrote %s/{runs.csv,aggregate.txt}\n", out_dir.c_str());
      return report.ok() ? 0 : (report.collisions > 0 ? 2 : 1);
    }
    // check
    const cavmpc::ScenarioConfig cfg = cavmpc::parse_scenario(scenario_path);
    std::printf("%s", cavmpc::serialize_scenario(cfg).c_str());
    std::fprintf(stderr, "%s: ok\n", scenario_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
