#pragma once

// Flat key = value configuration (a TOML subset): one assignment per line,
// '#' comments, values are numbers, booleans, "strings" or [arrays]. Values
// are read with the JSON grammar, which covers this subset.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

namespace symred {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, std::size_t column, const std::string& msg)
      : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t line_ = 0;
  std::size_t column_ = 0;
};

struct ConfigEntry {
  nlohmann::json value;
  std::size_t line = 0;    // 0 when the value came from the command line
  std::size_t column = 0;
};

struct ConfigTable {
  std::string source = "<config>";
  std::map<std::string, ConfigEntry> entries;

  void set(const std::string& key, nlohmann::json v) { entries[key] = ConfigEntry{std::move(v), 0, 0}; }
};

namespace detail {

inline bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

// Strips a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

}  // namespace detail

inline ConfigTable parse_config(std::istream& is, const std::string& source = "<config>") {
  ConfigTable table;
  table.source = source;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = detail::strip_comment(raw);
    std::size_t i = line.find_first_not_of(" \t\r");
    if (i == std::string::npos) continue;
    const std::size_t key_begin = i;
    while (i < line.size() && detail::is_key_char(line[i])) ++i;
    if (i == key_begin) throw ConfigError(source, line_no, key_begin + 1, "expected a key");
    const std::string key = line.substr(key_begin, i - key_begin);
    i = line.find_first_not_of(" \t", i);
    if (i == std::string::npos || line[i] != '=')
      throw ConfigError(source, line_no, (i == std::string::npos ? line.size() : i) + 1, "expected '=' after key");
    ++i;
    i = line.find_first_not_of(" \t", i);
    if (i == std::string::npos) throw ConfigError(source, line_no, line.size() + 1, "missing value");
    std::size_t end = line.find_last_not_of(" \t\r");
    const std::string text = line.substr(i, end - i + 1);
    try {
      nlohmann::json v = nlohmann::json::parse(text);
      if (v.is_object() || v.is_null()) throw ConfigError(source, line_no, i + 1, "unsupported value type");
      if (table.entries.count(key)) throw ConfigError(source, line_no, key_begin + 1, "duplicate key '" + key + "'");
      table.entries[key] = ConfigEntry{std::move(v), line_no, key_begin + 1};
    } catch (const nlohmann::json::parse_error& e) {
      const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
      throw ConfigError(source, line_no, i + 1 + offset, "invalid value '" + text + "'");
    }
  }
  return table;
}

inline ConfigTable parse_config_string(const std::string& text, const std::string& source = "<string>") {
  std::istringstream is(text);
  return parse_config(is, source);
}

inline ConfigTable load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is, path);
}

// Everything an experiment consumes. Unset optionals fall back to the
// experiment's catalog defaults.
struct ExperimentConfig {
  std::string experiment;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<double> dt;
  std::optional<double> t;
  std::optional<std::string> family;
  std::optional<int> n;
  std::optional<int> m;
  std::optional<int> m2;
  std::optional<double> spin;
  std::optional<std::vector<double>> x0;
  std::optional<double> grid_h;
  std::string out_dir;
  bool write_csv = false;
  bool write_wden = false;
  double tolerance_scale = 1.0;
  unsigned threads = 0;

  void validate() const {
    if (experiment.empty()) throw ConfigError("config: 'experiment' is required");
    if (!seed) throw ConfigError("config: 'seed' is required (no default seed)");
    if (paths && *paths < 20) throw ConfigError("config: 'paths' must be >= 20");
    if (dt && !(*dt > 0.0)) throw ConfigError("config: 'dt' must be positive");
    if (t && !(*t > 0.0)) throw ConfigError("config: 't' must be positive");
    if (grid_h && !(*grid_h > 0.0)) throw ConfigError("config: 'grid_h' must be positive");
    if (!(tolerance_scale > 0.0)) throw ConfigError("config: 'tolerance_scale' must be positive");
    if (n && *n < 1) throw ConfigError("config: 'n' must be >= 1");
    if (m && *m < 1) throw ConfigError("config: 'm' must be >= 1");
    if (m2 && *m2 < 0) throw ConfigError("config: 'm2' must be >= 0");
    if (spin && !(*spin >= 0.0)) throw ConfigError("config: 'spin' must be >= 0");
  }
};

namespace detail {

inline ConfigError entry_error(const ConfigTable& t, const ConfigEntry& e, const std::string& msg) {
  if (e.line == 0) return ConfigError("command line: " + msg);
  return ConfigError(t.source, e.line, e.column, msg);
}

template <class T>
T config_value(const ConfigTable& t, const std::string& key, const ConfigEntry& e) {
  const nlohmann::json& v = e.value;
  try {
    if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t> || std::is_same_v<T, int> ||
                  std::is_same_v<T, unsigned>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if (!std::is_same_v<T, int> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        throw ConfigError("");
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw entry_error(t, e, "key '" + key + "' has an invalid value " + v.dump());
  }
}

}  // namespace detail

// Builds an ExperimentConfig from a parsed table; unknown keys are errors.
inline ExperimentConfig experiment_config(const ConfigTable& table) {
  ExperimentConfig c;
  for (const auto& [key, v] : table.entries) {
    if (key == "experiment") c.experiment = detail::config_value<std::string>(table, key, v);
    else if (key == "seed") c.seed = detail::config_value<std::uint64_t>(table, key, v);
    else if (key == "paths") c.paths = detail::config_value<std::size_t>(table, key, v);
    else if (key == "dt") c.dt = detail::config_value<double>(table, key, v);
    else if (key == "t") c.t = detail::config_value<double>(table, key, v);
    else if (key == "family") c.family = detail::config_value<std::string>(table, key, v);
    else if (key == "n") c.n = detail::config_value<int>(table, key, v);
    else if (key == "m") c.m = detail::config_value<int>(table, key, v);
    else if (key == "m2") c.m2 = detail::config_value<int>(table, key, v);
    else if (key == "spin") c.spin = detail::config_value<double>(table, key, v);
    else if (key == "x0") c.x0 = detail::config_value<std::vector<double>>(table, key, v);
    else if (key == "grid_h") c.grid_h = detail::config_value<double>(table, key, v);
    else if (key == "out") c.out_dir = detail::config_value<std::string>(table, key, v);
    else if (key == "csv") c.write_csv = detail::config_value<bool>(table, key, v);
    else if (key == "wden") c.write_wden = detail::config_value<bool>(table, key, v);
    else if (key == "tolerance_scale") c.tolerance_scale = detail::config_value<double>(table, key, v);
    else if (key == "threads") c.threads = detail::config_value<unsigned>(table, key, v);
    else throw detail::entry_error(table, v, "unknown key '" + key + "'");
  }
  return c;
}

}  // namespace symred
