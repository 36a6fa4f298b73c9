#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "usaad/core/errors.hpp"

namespace usaad {

namespace kvdetail {
inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace kvdetail

// Flat key = value config files; # starts a comment, values may be quoted.
inline std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    line = kvdetail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = kvdetail::trim(line.substr(0, eq));
    std::string val = kvdetail::trim(line.substr(eq + 1));
    if (val.size() >= 2 && ((val.front() == '"' && val.back() == '"') ||
                            (val.front() == '\'' && val.back() == '\'')))
      val = val.substr(1, val.size() - 2);
    if (key.empty())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out[key] = val;
  }
  return out;
}

}  // namespace usaad
