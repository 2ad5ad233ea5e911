// Flat `key = value` configuration files with '#' comments. Unknown keys are
// kept and echoed back, so every results directory records the exact
// configuration that produced it.
#pragma once
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"

namespace tfm {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_string(const std::string& text, const std::string& source = "<string>") {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t used = 0;
      long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(source_ + ": key '" + key + "': not an integer: '" + it->second + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t used = 0;
      double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(source_ + ": key '" + key + "': not a number: '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(source_ + ": key '" + key + "': not a boolean: '" + it->second + "'");
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::istringstream ls(it->second);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      try {
        out.push_back(std::stoi(trim(tok)));
      } catch (...) {
        throw ConfigError(source_ + ": key '" + key + "': not an integer list: '" + it->second +
                          "'");
      }
    }
    return out;
  }

  // Sorted, normalized rendering for config.echo files.
  std::string echo() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  }

  std::map<std::string, std::string> values_;
  std::string source_ = "<empty>";
};

}  // namespace tfm
