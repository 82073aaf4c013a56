#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cavmpc/simulation.hpp"

namespace cavmpc {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(trim(s.substr(start)));
      break;
    }
    out.emplace_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

// from_chars keeps parsing locale-free and round-trip exact.
inline double parse_double(std::string_view text, const std::string& where) {
  const std::string_view t = trim(text);
  double value{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ParseError(where + ": invalid number '" + std::string(t) + "'");
  return value;
}

inline long long parse_int(std::string_view text, const std::string& where) {
  const std::string_view t = trim(text);
  long long value{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ParseError(where + ": invalid integer '" + std::string(t) + "'");
  return value;
}

inline std::uint64_t parse_u64(std::string_view text, const std::string& where) {
  const std::string_view t = trim(text);
  std::uint64_t value{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ParseError(where + ": invalid unsigned integer '" + std::string(t) + "'");
  return value;
}

inline bool parse_bool(std::string_view text, const std::string& where) {
  const std::string_view t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ParseError(where + ": invalid boolean '" + std::string(t) + "'");
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses a scenario from INI-style text. Sections [scenario], [hdv],
/// [limits], [controller], [estimator]; '#' or ';' starts a comment.
/// Unknown keys and malformed or inconsistent values fail with the key
/// named in the error. `origin` labels error messages (a file name).
inline ScenarioConfig parse_scenario_text(const std::string& text,
                                          const std::string& origin = "scenario") {
  ScenarioConfig cfg;
  std::vector<double> init_positions, init_speeds;

  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;

    const std::string where = origin + ":" + std::to_string(lineno);
    if (sv.front() == '[') {
      if (sv.back() != ']') throw ParseError(where + ": unterminated section header");
      section = std::string(detail::trim(sv.substr(1, sv.size() - 2)));
      if (section != "scenario" && section != "hdv" && section != "limits" &&
          section != "controller" && section != "estimator")
        throw ParseError(where + ": unknown section [" + section + "]");
      continue;
    }
    const size_t eq = sv.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected key = value");
    const std::string key(detail::trim(sv.substr(0, eq)));
    const std::string value(detail::trim(sv.substr(eq + 1)));
    const std::string ctx = where + ": " + key;

    if (section == "scenario") {
      if (key == "n_vehicles") cfg.n_vehicles = static_cast<int>(detail::parse_int(value, ctx));
      else if (key == "p0") cfg.p0 = detail::parse_double(value, ctx);
      else if (key == "duration") cfg.duration = detail::parse_double(value, ctx);
      else if (key == "seed") cfg.seed = detail::parse_u64(value, ctx);
      else if (key == "l_c") cfg.l_c = detail::parse_double(value, ctx);
      else if (key == "d_f") cfg.d_f = detail::parse_double(value, ctx);
      else if (key == "perturbation") cfg.perturbation = detail::parse_double(value, ctx);
      else if (key == "hdv_only") cfg.hdv_only = detail::parse_bool(value, ctx);
      else if (key == "init_positions") {
        init_positions.clear();
        for (const std::string& item : detail::split(value, ','))
          init_positions.push_back(detail::parse_double(item, ctx));
      } else if (key == "init_speeds") {
        init_speeds.clear();
        for (const std::string& item : detail::split(value, ','))
          init_speeds.push_back(detail::parse_double(item, ctx));
      } else if (key == "departures") {
        cfg.departures.clear();
        if (!value.empty()) {
          for (const std::string& item : detail::split(value, ',')) {
            const size_t colon = item.find(':');
            if (colon == std::string::npos)
              throw ParseError(ctx + ": expected time:id, got '" + item + "'");
            DepartureEvent ev;
            ev.time = detail::parse_double(item.substr(0, colon), ctx);
            ev.vehicle_id = static_cast<int>(detail::parse_int(item.substr(colon + 1), ctx));
            cfg.departures.push_back(ev);
          }
        }
      } else {
        throw ParseError(where + ": unknown key '" + key + "' in [scenario]");
      }
    } else if (section == "hdv") {
      if (key == "alpha") cfg.ovm.alpha = detail::parse_double(value, ctx);
      else if (key == "beta") cfg.ovm.beta = detail::parse_double(value, ctx);
      else if (key == "v_d") cfg.ovm.v_d = detail::parse_double(value, ctx);
      else if (key == "rho") cfg.ovm.rho = detail::parse_double(value, ctx);
      else if (key == "s0") cfg.ovm.s_0 = detail::parse_double(value, ctx);
      else throw ParseError(where + ": unknown key '" + key + "' in [hdv]");
    } else if (section == "limits") {
      if (key == "u_min") cfg.mpc.limits.u_min = detail::parse_double(value, ctx);
      else if (key == "u_max") cfg.mpc.limits.u_max = detail::parse_double(value, ctx);
      else if (key == "v_min") cfg.mpc.limits.v_min = detail::parse_double(value, ctx);
      else if (key == "v_max") cfg.mpc.limits.v_max = detail::parse_double(value, ctx);
      else if (key == "tau") cfg.mpc.limits.tau = detail::parse_double(value, ctx);
      else throw ParseError(where + ": unknown key '" + key + "' in [limits]");
    } else if (section == "controller") {
      if (key == "horizon") cfg.mpc.horizon = static_cast<int>(detail::parse_int(value, ctx));
      else if (key == "rho") cfg.mpc.policy.rho = detail::parse_double(value, ctx);
      else if (key == "s0") cfg.mpc.policy.s_0 = detail::parse_double(value, ctx);
      else if (key == "w_ep") cfg.mpc.weights.w_ep = detail::parse_double(value, ctx);
      else if (key == "w_ev") cfg.mpc.weights.w_ev = detail::parse_double(value, ctx);
      else if (key == "w_u") cfg.mpc.weights.w_u = detail::parse_double(value, ctx);
      else if (key == "w_slack") cfg.mpc.weights.w_slack = detail::parse_double(value, ctx);
      else if (key == "qp_tol") cfg.mpc.qp_tol = detail::parse_double(value, ctx);
      else if (key == "qp_max_iter")
        cfg.mpc.qp_max_iter = static_cast<int>(detail::parse_int(value, ctx));
      else throw ParseError(where + ": unknown key '" + key + "' in [controller]");
    } else if (section == "estimator") {
      if (key == "gamma0") {
        const std::vector<std::string> parts = detail::split(value, ',');
        if (parts.size() != 3) throw ParseError(ctx + ": gamma0 needs three components");
        for (int i = 0; i < 3; ++i)
          cfg.rls.gamma0(i) = detail::parse_double(parts[static_cast<size_t>(i)], ctx);
      } else if (key == "cov0") {
        cfg.rls.cov0 = detail::parse_double(value, ctx);
      } else if (key == "xi") {
        cfg.rls.xi = detail::parse_double(value, ctx);
      } else {
        throw ParseError(where + ": unknown key '" + key + "' in [estimator]");
      }
    } else {
      throw ParseError(where + ": key '" + key + "' outside any section");
    }
  }

  if (init_positions.size() != init_speeds.size())
    throw ParseError(origin + ": init_positions and init_speeds must pair up");
  for (size_t i = 0; i < init_positions.size(); ++i)
    cfg.init.push_back(VehicleInit{init_positions[i], init_speeds[i]});

  try {
    cfg.validate();
  } catch (const std::domain_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return cfg;
}

inline ScenarioConfig parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

/// Canonical text form: every key explicit, numbers at full precision, so
/// parse(serialize(c)) reproduces c exactly.
inline std::string serialize_scenario(const ScenarioConfig& cfg) {
  using detail::format_double;
  std::ostringstream os;
  os << "[scenario]\n";
  os << "n_vehicles = " << cfg.n_vehicles << "\n";
  os << "p0 = " << format_double(cfg.p0) << "\n";
  os << "duration = " << format_double(cfg.duration) << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "l_c = " << format_double(cfg.l_c) << "\n";
  os << "d_f = " << format_double(cfg.d_f) << "\n";
  os << "perturbation = " << format_double(cfg.perturbation) << "\n";
  os << "hdv_only = " << (cfg.hdv_only ? "true" : "false") << "\n";
  if (!cfg.init.empty()) {
    os << "init_positions = ";
    for (size_t i = 0; i < cfg.init.size(); ++i)
      os << (i ? ", " : "") << format_double(cfg.init[i].p);
    os << "\ninit_speeds = ";
    for (size_t i = 0; i < cfg.init.size(); ++i)
      os << (i ? ", " : "") << format_double(cfg.init[i].v);
    os << "\n";
  }
  if (!cfg.departures.empty()) {
    os << "departures = ";
    for (size_t i = 0; i < cfg.departures.size(); ++i)
      os << (i ? ", " : "") << format_double(cfg.departures[i].time) << ":"
         << cfg.departures[i].vehicle_id;
    os << "\n";
  }
  os << "\n[hdv]\n";
  os << "alpha = " << format_double(cfg.ovm.alpha) << "\n";
  os << "beta = " << format_double(cfg.ovm.beta) << "\n";
  os << "v_d = " << format_double(cfg.ovm.v_d) << "\n";
  os << "rho = " << format_double(cfg.ovm.rho) << "\n";
  os << "s0 = " << format_double(cfg.ovm.s_0) << "\n";
  os << "\n[limits]\n";
  os << "u_min = " << format_double(cfg.mpc.limits.u_min) << "\n";
  os << "u_max = " << format_double(cfg.mpc.limits.u_max) << "\n";
  os << "v_min = " << format_double(cfg.mpc.limits.v_min) << "\n";
  os << "v_max = " << format_double(cfg.mpc.limits.v_max) << "\n";
  os << "tau = " << format_double(cfg.mpc.limits.tau) << "\n";
  os << "\n[controller]\n";
  os << "horizon = " << cfg.mpc.horizon << "\n";
  os << "rho = " << format_double(cfg.mpc.policy.rho) << "\n";
  os << "s0 = " << format_double(cfg.mpc.policy.s_0) << "\n";
  os << "w_ep = " << format_double(cfg.mpc.weights.w_ep) << "\n";
  os << "w_ev = " << format_double(cfg.mpc.weights.w_ev) << "\n";
  os << "w_u = " << format_double(cfg.mpc.weights.w_u) << "\n";
  os << "w_slack = " << format_double(cfg.mpc.weights.w_slack) << "\n";
  os << "qp_tol = " << format_double(cfg.mpc.qp_tol) << "\n";
  os << "qp_max_iter = " << cfg.mpc.qp_max_iter << "\n";
  os << "\n[estimator]\n";
  os << "gamma0 = " << format_double(cfg.rls.gamma0(0)) << ", "
     << format_double(cfg.rls.gamma0(1)) << ", " << format_double(cfg.rls.gamma0(2)) << "\n";
  os << "cov0 = " << format_double(cfg.rls.cov0) << "\n";
  os << "xi = " << format_double(cfg.rls.xi) << "\n";
  return os.str();
}

}  // namespace cavmpc
