#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavmpc::testing {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Drops the trailing comma-separated field from every row. Used to compare
// tables whose last column is a wall-clock measurement.
inline std::string strip_last_column(const std::string& csv) {
  std::ostringstream out;
  for (const auto& line : split_lines(csv)) {
    const auto pos = line.rfind(',');
    out << (pos == std::string::npos ? line : line.substr(0, pos)) << '\n';
  }
  return out.str();
}

// Removes key=value lines whose key contains the given fragment.
inline std::string drop_keys_containing(const std::string& text, const std::string& fragment) {
  std::ostringstream out;
  for (const auto& line : split_lines(text)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.substr(0, eq).find(fragment) != std::string::npos) continue;
    out << line << '\n';
  }
  return out.str();
}

}  // namespace cavmpc::testing
