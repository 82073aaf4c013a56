#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include "cavmpc/simulation.hpp"

namespace cavmpc {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_for_write(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return f;
}

}  // namespace detail

/// Writes the run's tables into `out_dir` (created if missing):
/// trajectory.csv, cav.csv, estimates.csv, metrics.txt. Columns are fixed;
/// numbers print in fixed decimal at ten digits (wall-clock times at six),
/// always in the C locale, so identical runs produce identical bytes.
inline void write_outputs(const SimTrace& trace, const Metrics& metrics,
                          const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec && !fs::is_directory(out_dir))
    throw std::runtime_error("cannot create output directory '" + out_dir.string() + "'");

  {
    detail::FilePtr f = detail::open_for_write(out_dir / "trajectory.csv");
    std::fprintf(f.get(), "t,id,p,v,u,delta_p,delta_v\n");
    for (const VehicleRow& r : trace.vehicles)
      std::fprintf(f.get(), "%.10f,%d,%.10f,%.10f,%.10f,%.10f,%.10f\n", r.t, r.id, r.p, r.v,
                   r.u, r.delta_p, r.delta_v);
  }
  {
    detail::FilePtr f = detail::open_for_write(out_dir / "cav.csv");
    std::fprintf(f.get(), "t,e_p,e_v,s1,slack,solver_status,solve_time\n");
    for (const CavRow& r : trace.cav)
      std::fprintf(f.get(), "%.10f,%.10f,%.10f,%.10f,%.10f,%s,%.6f\n", r.t, r.e_p, r.e_v, r.s1,
                   r.slack, r.solver_status.c_str(), r.solve_time);
  }
  {
    detail::FilePtr f = detail::open_for_write(out_dir / "estimates.csv");
    std::fprintf(f.get(), "t,hdv_id,gamma1,gamma2,gamma3,eta,nu,rho,residual\n");
    for (const EstimateRow& r : trace.estimates)
      std::fprintf(f.get(), "%.10f,%d,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f\n", r.t,
                   r.hdv_id, r.gamma1, r.gamma2, r.gamma3, r.eta, r.nu, r.rho, r.residual);
  }
  {
    detail::FilePtr f = detail::open_for_write(out_dir / "metrics.txt");
    std::fprintf(f.get(), "collision = %d\n", trace.collision ? 1 : 0);
    std::fprintf(f.get(), "min_margin = %.10f\n", metrics.min_margin);
    std::fprintf(f.get(), "min_bumper_gap = %.10f\n", metrics.min_bumper_gap);
    std::fprintf(f.get(), "violation_count = %d\n", metrics.violation_count);
    std::fprintf(f.get(), "max_slack = %.10f\n", metrics.max_slack);
    std::fprintf(f.get(), "control_effort = %.10f\n", metrics.control_effort);
    std::fprintf(f.get(), "terminal_cav_gap = %.10f\n", metrics.terminal_cav_gap);
    std::fprintf(f.get(), "all_stopped = %d\n", metrics.all_stopped ? 1 : 0);
    std::fprintf(f.get(), "end_time = %.10f\n", metrics.end_time);
    std::fprintf(f.get(), "steps = %d\n", metrics.steps);
    std::fprintf(f.get(), "v_min_seen = %.10f\n", metrics.v_min_seen);
    std::fprintf(f.get(), "v_max_seen = %.10f\n", metrics.v_max_seen);
    std::fprintf(f.get(), "u_min_seen = %.10f\n", metrics.u_min_seen);
    std::fprintf(f.get(), "u_max_seen = %.10f\n", metrics.u_max_seen);
    for (const auto& [id, v] : metrics.terminal_speeds)
      std::fprintf(f.get(), "terminal_speed_%d = %.10f\n", id, v);
    for (const auto& [id, u] : metrics.max_abs_u)
      std::fprintf(f.get(), "max_abs_u_%d = %.10f\n", id, u);
    std::fprintf(f.get(), "solve_ms_median = %.6f\n", metrics.solve_ms_median);
    std::fprintf(f.get(), "solve_ms_p95 = %.6f\n", metrics.solve_ms_p95);
  }
}

}  // namespace cavmpc
