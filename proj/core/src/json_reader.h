#pragma once

// Strict reader over one JSON object: every key must be consumed, and every
// error names the full dotted path of the offending field.

#include <cmath>
#include <cstdint>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "sdlab/errors.h"

namespace sdlab::detail {

using nlohmann::json;

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(field(key) + ": required field is missing");
    seen_.insert(key);
    return j_.at(key);
  }

  ObjectReader object(const std::string& key) { return ObjectReader(raw(key), field(key)); }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(field(key) + ": expected a finite number");
    return d;
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  long integer(const std::string& key) {
    const json& v = raw(key);
    if (v.is_number_integer()) return v.get<long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15)
        return static_cast<long>(d);
    }
    throw ConfigError(field(key) + ": expected an integer");
  }
  long integer(const std::string& key, long fallback) {
    return has(key) ? integer(key) : fallback;
  }

  std::size_t count(const std::string& key) {
    const long v = integer(key);
    if (v < 0) throw ConfigError(field(key) + ": must be >= 0");
    return static_cast<std::size_t>(v);
  }
  std::size_t count(const std::string& key, std::size_t fallback) {
    return has(key) ? count(key) : fallback;
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0)
      return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(field(key) + ": expected a non-negative integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  // Runs `parse` on the string value and prefixes any ConfigError with the path.
  template <typename Fn>
  auto parsed(const std::string& key, Fn&& parse) {
    const std::string s = string(key);
    try {
      return parse(s);
    } catch (const ConfigError& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
}

std::string read_text_file(const std::string& path);

}  // namespace sdlab::detail
