#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cavmpc/simulation.hpp"
#include "cavmpc/trace_io.hpp"

namespace cavmpc {

/// A batch of runs over seeds. Unless a vehicle count is pinned, platoon
/// size cycles 3..6 total vehicles across the batch so one sweep covers
/// two to five preceding vehicles.
struct RunManifest {
  ScenarioConfig base{};
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;  ///< empty disables all file output
  std::optional<int> vehicles_override;
  std::optional<int> horizon_override;
  std::optional<double> duration_override;
  int jobs{1};
  bool write_runs{true};  ///< per-run table directories under out_dir
};

struct RunSummary {
  std::uint64_t seed{0};
  int n_vehicles{0};
  bool completed{false};
  std::string error;
  Metrics metrics{};
};

struct SweepReport {
  std::vector<RunSummary> runs;
  int completed_runs{0};
  int collisions{0};
  int total_violations{0};
  double worst_slack{0.0};
  double min_gap_overall{std::numeric_limits<double>::infinity()};
  double min_margin_overall{std::numeric_limits<double>::infinity()};
  int all_stopped_runs{0};
  double solve_ms_median{0.0};  ///< median of per-run medians
  double solve_ms_p95{0.0};     ///< worst per-run 95th percentile

  bool ok() const {
    return completed_runs == static_cast<int>(runs.size()) && collisions == 0;
  }
};

/// Scenario for one sweep entry. Explicit initial states survive only if
/// the vehicle count stays what they were written for; otherwise the
/// default layout for the active count applies.
inline ScenarioConfig sweep_scenario(const RunManifest& manifest, size_t index) {
  ScenarioConfig cfg = manifest.base;
  cfg.seed = manifest.seeds[index];
  if (manifest.vehicles_override) {
    cfg.n_vehicles = *manifest.vehicles_override;
  } else {
    cfg.n_vehicles = 3 + static_cast<int>(index % 4);
  }
  if (cfg.n_vehicles != manifest.base.n_vehicles) cfg.init.clear();
  if (manifest.horizon_override) cfg.mpc.horizon = *manifest.horizon_override;
  if (manifest.duration_override) cfg.duration = *manifest.duration_override;
  return cfg;
}

/// Executes the batch, optionally across threads. Worker errors and
/// collisions are captured per run, never thrown across the batch; the
/// report says what happened everywhere.
inline SweepReport run_sweep(const RunManifest& manifest) {
  if (manifest.seeds.empty()) throw std::invalid_argument("run_sweep: no seeds");
  const int jobs = std::max(1, manifest.jobs);

  SweepReport report;
  report.runs.resize(manifest.seeds.size());

  std::atomic<size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const size_t index = next.fetch_add(1);
      if (index >= manifest.seeds.size()) return;
      RunSummary& summary = report.runs[index];
      const ScenarioConfig cfg = sweep_scenario(manifest, index);
      summary.seed = cfg.seed;
      summary.n_vehicles = cfg.n_vehicles;
      try {
        const auto [trace, metrics] = run_simulation(cfg);
        summary.metrics = metrics;
        summary.completed = true;
        if (!manifest.out_dir.empty() && manifest.write_runs)
          write_outputs(trace, metrics,
                        manifest.out_dir / ("run_seed" + std::to_string(cfg.seed)));
      } catch (const std::exception& e) {
        summary.error = e.what();
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  std::vector<double> medians;
  for (const RunSummary& s : report.runs) {
    if (!s.completed) continue;
    ++report.completed_runs;
    const Metrics& m = s.metrics;
    if (m.collision) ++report.collisions;
    report.total_violations += m.violation_count;
    report.worst_slack = std::max(report.worst_slack, m.max_slack);
    report.min_gap_overall = std::min(report.min_gap_overall, m.min_bumper_gap);
    report.min_margin_overall = std::min(report.min_margin_overall, m.min_margin);
    if (m.all_stopped) ++report.all_stopped_runs;
    report.solve_ms_p95 = std::max(report.solve_ms_p95, m.solve_ms_p95);
    medians.push_back(m.solve_ms_median);
  }
  report.solve_ms_median = detail::percentile_nearest_rank(medians, 50.0);

  if (!manifest.out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(manifest.out_dir, ec);
    {
      detail::FilePtr f = detail::open_for_write(manifest.out_dir / "runs.csv");
      std::fprintf(f.get(),
                   "seed,n_vehicles,completed,collision,violations,max_slack,min_bumper_gap,"
                   "min_margin,terminal_cav_gap,all_stopped,steps,end_time,solve_ms_median,"
                   "solve_ms_p95,error\n");
      for (const RunSummary& s : report.runs) {
        std::string err = s.error;
        for (char& c : err)
          if (c == ',' || c == '\n') c = ';';
        const Metrics& m = s.metrics;
        std::fprintf(f.get(),
                     "%llu,%d,%d,%d,%d,%.10f,%.10f,%.10f,%.10f,%d,%d,%.10f,%.6f,%.6f,%s\n",
                     static_cast<unsigned long long>(s.seed), s.n_vehicles,
                     s.completed ? 1 : 0, m.collision ? 1 : 0, m.violation_count, m.max_slack,
                     m.min_bumper_gap, m.min_margin, m.terminal_cav_gap, m.all_stopped ? 1 : 0,
                     m.steps, m.end_time, m.solve_ms_median, m.solve_ms_p95, err.c_str());
      }
    }
    {
      detail::FilePtr f = detail::open_for_write(manifest.out_dir / "aggregate.txt");
      std::fprintf(f.get(), "runs = %zu\n", report.runs.size());
      std::fprintf(f.get(), "completed = %d\n", report.completed_runs);
      std::fprintf(f.get(), "collisions = %d\n", report.collisions);
      std::fprintf(f.get(), "total_violations = %d\n", report.total_violations);
      std::fprintf(f.get(), "worst_slack = %.10f\n", report.worst_slack);
      std::fprintf(f.get(), "min_gap_overall = %.10f\n", report.min_gap_overall);
      std::fprintf(f.get(), "min_margin_overall = %.10f\n", report.min_margin_overall);
      std::fprintf(f.get(), "all_stopped_runs = %d\n", report.all_stopped_runs);
      std::fprintf(f.get(), "solve_ms_median = %.6f\n", report.solve_ms_median);
      std::fprintf(f.get(), "solve_ms_p95 = %.6f\n", report.solve_ms_p95);
      std::fprintf(f.get(), "ok = %d\n", report.ok() ? 1 : 0);
    }
  }
  return report;
}

}  // namespace cavmpc
