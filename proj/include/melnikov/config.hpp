#pragma once

#include "melnikov/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace melnikov {

/// Shortest round-trip decimal form of x (at most 17 significant digits).
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_number(const std::string& s, const std::string& key) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e) fail(ErrorKind::invalid_argument, "config: " + key + " is not a number: '" + s + "'");
  return v;
}

struct ModelConfig {
  std::string id;
  std::map<std::string, double> params;
  std::optional<double> h0;
};

struct RunConfig {
  std::string command;
  ModelConfig model;
  int N = 64;
  double tol = 1e-8;
  std::vector<double> eps{1e-2, 1e-3, 1e-4};
  std::string format = "csv";
  std::string out;  // empty: standard output
  std::uint64_t seed = 1;
  double phase = 0.5 * kPi;  // derivative and splitting checks
  int checks = 0;            // extra seeded derivative check points
};

inline const std::set<std::string>& known_commands() {
  static const std::set<std::string> c{"scan", "zeros", "derivative", "verify-splitting", "diagnostics"};
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline long parse_integer(const std::string& s, const std::string& key) {
  long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    fail(ErrorKind::invalid_argument, "config: " + key + " is not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Flat `key = value` lines; `#` starts a comment. Keys: run.command, run.N,
/// run.tol, run.eps (comma list), run.format, run.out, run.seed, run.phase,
/// run.checks, model.id, model.h0 and model.<parameter>.
inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::invalid_argument, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) fail(ErrorKind::invalid_argument, "config: duplicate key " + key);
    if (key == "run.command") {
      c.command = val;
    } else if (key == "run.N") {
      c.N = static_cast<int>(detail::parse_integer(val, key));
    } else if (key == "run.tol") {
      c.tol = parse_number(val, key);
    } else if (key == "run.eps") {
      c.eps.clear();
      std::istringstream ls(val);
      std::string item;
      while (std::getline(ls, item, ',')) c.eps.push_back(parse_number(detail::trim(item), key));
    } else if (key == "run.format") {
      c.format = val;
    } else if (key == "run.out") {
      c.out = val;
    } else if (key == "run.seed") {
      c.seed = static_cast<std::uint64_t>(detail::parse_integer(val, key));
    } else if (key == "run.phase") {
      c.phase = parse_number(val, key);
    } else if (key == "run.checks") {
      c.checks = static_cast<int>(detail::parse_integer(val, key));
    } else if (key == "model.id") {
      c.model.id = val;
    } else if (key == "model.h0") {
      c.model.h0 = parse_number(val, key);
    } else if (key.rfind("model.", 0) == 0 && key.size() > 6) {
      c.model.params[key.substr(6)] = parse_number(val, key);
    } else {
      fail(ErrorKind::invalid_argument, "config: unknown key " + key);
    }
  }
  return c;
}

inline std::string write_config(const RunConfig& c) {
  std::ostringstream o;
  if (!c.command.empty()) o << "run.command = " << c.command << '\n';
  o << "run.N = " << c.N << '\n';
  o << "run.tol = " << format_number(c.tol) << '\n';
  o << "run.eps = ";
  for (std::size_t i = 0; i < c.eps.size(); ++i) o << (i ? "," : "") << format_number(c.eps[i]);
  o << '\n';
  o << "run.format = " << c.format << '\n';
  if (!c.out.empty()) o << "run.out = " << c.out << '\n';
  o << "run.seed = " << c.seed << '\n';
  o << "run.phase = " << format_number(c.phase) << '\n';
  o << "run.checks = " << c.checks << '\n';
  o << "model.id = " << c.model.id << '\n';
  if (c.model.h0) o << "model.h0 = " << format_number(*c.model.h0) << '\n';
  for (const auto& [k, v] : c.model.params) o << "model." << k << " = " << format_number(v) << '\n';
  return o.str();
}

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.id == b.id && a.params == b.params && a.h0 == b.h0;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.command == b.command && a.model == b.model && a.N == b.N && a.tol == b.tol && a.eps == b.eps &&
         a.format == b.format && a.out == b.out && a.seed == b.seed && a.phase == b.phase && a.checks == b.checks;
}

}  // namespace melnikov
