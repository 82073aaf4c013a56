// Smallest end-to-end use of the library: default three-vehicle approach to
// a red light, one seed, metrics on stdout.
#include <cstdio>

#include "cavmpc/simulation.hpp"

int main() {
  cavmpc::ScenarioConfig cfg;
  cfg.n_vehicles = 3;
  cfg.seed = 42;

  const auto [trace, metrics] = cavmpc::run_simulation(cfg);

  std::printf("simulated %d steps (%.1f s)\n", metrics.steps, metrics.end_time);
  std::printf("collision: %s\n", metrics.collision ? "yes" : "no");
  std::printf("min bumper gap: %.3f m\n", metrics.min_bumper_gap);
  std::printf("terminal gap behind predecessor: %.3f m\n", metrics.terminal_cav_gap);
  std::printf("all vehicles stopped: %s\n", metrics.all_stopped ? "yes" : "no");
  for (const auto& [id, v] : metrics.terminal_speeds)
    std::printf("  vehicle %d terminal speed %.4f m/s\n", id, v);
  return metrics.collision ? 1 : 0;
}
