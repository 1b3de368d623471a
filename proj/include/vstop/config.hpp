// Flat key-value run configuration ("mu.kind", "numerics.dt", ...).
#pragma once

#include "json.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace vstop {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  // All known keys with their default values.
  static Config defaults();
  // Strict parse: unknown keys, wrong types and non-positive tolerances are rejected.
  static Config from_json(const nlohmann::json& j);
  static Config from_file(const std::string& path);

  double num(const std::string& key) const;
  long integer(const std::string& key) const;
  std::string str(const std::string& key) const;

  void set(const std::string& key, const nlohmann::json& value);
  const nlohmann::json& values() const { return values_; }
  static std::vector<std::string> known_keys();

 private:
  nlohmann::json values_ = nlohmann::json::object();
};

}  // namespace vstop
