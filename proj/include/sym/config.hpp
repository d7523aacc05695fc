#pragma once

// Server configuration read from a flat TOML file.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sym/core.hpp"
#include "sym/service.hpp"

namespace sym {

struct Config {
  std::string listen_addr = "127.0.0.1:8080";
  std::filesystem::path data_dir = "sym-data";
  double update_interval_hours = 24.0;
  int default_k = 3;
  double alpha = 0.2;
  int min_samples = 5;

  std::string host() const { return listen_addr.substr(0, listen_addr.rfind(':')); }

  int port() const {
    const auto colon = listen_addr.rfind(':');
    int p = 0;
    const std::string_view digits = std::string_view(listen_addr).substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), p);
    if (colon == std::string::npos || ec != std::errc{} || ptr != digits.data() + digits.size() || p < 0 || p > 65535) {
      fail(ErrorCode::validation, "listen_addr must look like host:port");
    }
    return p;
  }

  ServiceConfig service_config() const {
    ServiceConfig c;
    c.default_k = default_k;
    c.update.alpha = alpha;
    c.update.min_samples = min_samples;
    c.update_interval = std::chrono::milliseconds(static_cast<std::int64_t>(update_interval_hours * 3'600'000.0));
    return c;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// Strips a trailing comment that is not inside a basic string.
inline std::string strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

inline std::string toml_string(const std::string& v, std::size_t line) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
    fail(ErrorCode::validation, "config line " + std::to_string(line) + ": expected a quoted string");
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) {
      const char n = v[++i];
      switch (n) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail(ErrorCode::validation, "config line " + std::to_string(line) + ": unsupported escape");
      }
    } else {
      out.push_back(v[i]);
    }
  }
  return out;
}

template <typename T>
T toml_number(const std::string& v, std::size_t line) {
  std::string digits;
  for (char c : v) {
    if (c != '_') digits.push_back(c);
  }
  T out{};
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
  if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
    fail(ErrorCode::validation, "config line " + std::to_string(line) + ": '" + v + "' is not a number");
  }
  return out;
}

}  // namespace detail

/// Parses the top-level key/value subset of TOML the server uses. Tables,
/// arrays and unknown keys are rejected.
inline Config parse_config(std::string_view text) {
  Config c;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto content = detail::trim(detail::strip_comment(raw));
    if (content.empty()) continue;
    if (content.front() == '[') {
      fail(ErrorCode::validation, "config line " + std::to_string(line) + ": tables are not supported");
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) fail(ErrorCode::validation, "config line " + std::to_string(line) + ": expected key = value");
    const auto key = detail::trim(std::string_view(content).substr(0, eq));
    const auto value = detail::trim(std::string_view(content).substr(eq + 1));
    if (key == "listen_addr") c.listen_addr = detail::toml_string(value, line);
    else if (key == "data_dir") c.data_dir = detail::toml_string(value, line);
    else if (key == "update_interval_hours") c.update_interval_hours = detail::toml_number<double>(value, line);
    else if (key == "default_k") c.default_k = detail::toml_number<int>(value, line);
    else if (key == "alpha") c.alpha = detail::toml_number<double>(value, line);
    else if (key == "min_samples") c.min_samples = detail::toml_number<int>(value, line);
    else fail(ErrorCode::validation, "config line " + std::to_string(line) + ": unknown key '" + key + "'");
  }
  if (!(c.update_interval_hours > 0.0)) fail(ErrorCode::validation, "update_interval_hours must be positive");
  c.port();
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::not_found, "cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  Config c = parse_config(buf.str());
  if (c.data_dir.is_relative()) c.data_dir = path.parent_path() / c.data_dir;
  return c;
}

}  // namespace sym
