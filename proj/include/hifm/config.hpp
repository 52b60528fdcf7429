#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hifm/errors.hpp"

namespace hifm {

// Flat key=value text with [section] headers; '#' and ';' start comments.
// Keys are addressed as "section.key".
class Config {
 public:
  static Config parse_string(const std::string& text) {
    Config config;
    std::stringstream ss(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(ss, line)) {
      ++line_no;
      const auto comment = line.find_first_of("#;");
      if (comment != std::string::npos) line = line.substr(0, comment);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']') {
          throw ValidationError("config line " + std::to_string(line_no) + ": unclosed section");
        }
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) {
        throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
      }
      config.entries_[section.empty() ? key : section + "." + key] = value;
    }
    return config;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ValidationError("config key '" + key + "': cannot parse '" + it->second + "'");
    }
  }

  long get_long(const std::string& key, long fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw ValidationError("config key '" + key + "': cannot parse '" + it->second + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ValidationError("config key '" + key + "': cannot parse '" + it->second + "'");
    }
  }

  // Comma-separated doubles; "lo..hi" shorthand expands to an integer range.
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end() || trim(it->second).empty()) return fallback;
    std::vector<double> values;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      const auto dots = t.find("..");
      try {
        if (dots != std::string::npos) {
          const long lo = std::stol(t.substr(0, dots));
          const long hi = std::stol(t.substr(dots + 2));
          for (long v = lo; v <= hi; ++v) values.push_back(static_cast<double>(v));
        } else {
          values.push_back(std::stod(t));
        }
      } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': cannot parse list item '" + t + "'");
      }
    }
    return values;
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t lo = 0, hi = s.size();
    while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
    while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
    return s.substr(lo, hi - lo);
  }

  std::map<std::string, std::string> entries_;
};

}  // namespace hifm
