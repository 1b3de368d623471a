#include "vstop/config.hpp"

#include <fstream>
#include <map>

namespace vstop {

namespace {

enum class Kind { positive, nonnegative, count, sign, text };

struct KeySpec {
  Kind kind;
  nlohmann::json def;
  std::vector<std::string> choices;
};

const std::map<std::string, KeySpec>& table() {
  static const std::map<std::string, KeySpec> t = {
      {"mu.kind", {Kind::text, "truncated_bump", {"truncated_bump", "gaussian", "none"}}},
      {"mu.radius", {Kind::positive, 2.0, {}}},
      {"mu.sigma", {Kind::positive, 1.0, {}}},
      {"e0", {Kind::sign, 1, {}}},
      {"alpha", {Kind::positive, 1.0, {}}},
      {"Phi.width", {Kind::positive, 1.0, {}}},
      {"Phi.amplitude", {Kind::nonnegative, 1.0, {}}},

      {"numerics.kappa_min", {Kind::positive, 1e-3, {}}},
      {"numerics.x_points", {Kind::count, 2001, {}}},
      {"numerics.xi_points", {Kind::count, 64, {}}},
      {"numerics.xi_min", {Kind::positive, 0.1, {}}},
      {"numerics.xi_max", {Kind::positive, 10.0, {}}},
      {"numerics.rgrid_spacing", {Kind::positive, 0.02, {}}},
      {"numerics.rgrid_extent", {Kind::positive, 400.0, {}}},
      {"numerics.green_dt", {Kind::positive, 50.0 / (63.0 * 32.0), {}}},
      {"numerics.tmax", {Kind::positive, 50.0, {}}},
      {"numerics.r_points", {Kind::count, 41, {}}},
      {"numerics.rmax", {Kind::positive, 40.0, {}}},
      {"numerics.k_nodes", {Kind::count, 48, {}}},
      {"numerics.c_nodes", {Kind::count, 48, {}}},
      {"numerics.plateau_window", {Kind::positive, 5.0, {}}},
      {"numerics.plateau_tol", {Kind::positive, 1e-3, {}}},
      {"numerics.R_max", {Kind::positive, 200.0, {}}},
      {"numerics.speed_threshold", {Kind::positive, 4.0, {}}},
      {"numerics.logbound_n", {Kind::positive, 1.0, {}}},
      {"numerics.a_table_nodes", {Kind::count, 16, {}}},
      {"numerics.ode_dt", {Kind::positive, 1.0, {}}},
      {"numerics.beta", {Kind::positive, 0.1, {}}},
      {"numerics.delta", {Kind::positive, 0.1, {}}},
      {"numerics.box_length", {Kind::positive, 16.0, {}}},
      {"numerics.grid_n", {Kind::count, 32, {}}},
      {"numerics.markers", {Kind::count, 2000000, {}}},
      {"numerics.sim_dt", {Kind::positive, 0.03, {}}},
      {"numerics.seed", {Kind::count, 7, {}}},
      {"numerics.sim_v0", {Kind::positive, 12.0, {}}},
      {"numerics.sim_tend", {Kind::positive, 50.0, {}}},
      {"numerics.snapshot_every", {Kind::count, 500, {}}},

      {"io.output_dir", {Kind::text, ".", {}}},
      {"io.precision", {Kind::count, 17, {}}},
  };
  return t;
}

void check(const std::string& key, const nlohmann::json& v) {
  auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key: " + key);
  const KeySpec& s = it->second;
  switch (s.kind) {
    case Kind::text:
      if (!v.is_string()) throw ConfigError(key + ": expected a string");
      if (!s.choices.empty()) {
        bool ok = false;
        for (auto& c : s.choices) ok = ok || v.get<std::string>() == c;
        if (!ok) throw ConfigError(key + ": unknown value '" + v.get<std::string>() + "'");
      }
      break;
    case Kind::positive:
      if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError(key + ": expected a positive number");
      break;
    case Kind::nonnegative:
      if (!v.is_number() || !(v.get<double>() >= 0.0)) throw ConfigError(key + ": expected a nonnegative number");
      break;
    case Kind::count:
      if (!v.is_number_integer() || v.get<long>() <= 0) throw ConfigError(key + ": expected a positive integer");
      break;
    case Kind::sign:
      if (!v.is_number_integer() || (v.get<long>() != 1 && v.get<long>() != -1))
        throw ConfigError(key + ": expected +1 or -1");
      break;
  }
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (auto& [k, s] : table()) c.values_[k] = s.def;
  return c;
}

Config Config::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Config c = defaults();
  for (auto& [k, v] : j.items()) c.set(k, v);
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return from_json(j);
}

void Config::set(const std::string& key, const nlohmann::json& value) {
  check(key, value);
  values_[key] = value;
}

double Config::num(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("missing config key: " + key);
  return values_.at(key).get<double>();
}

long Config::integer(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("missing config key: " + key);
  return values_.at(key).get<long>();
}

std::string Config::str(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("missing config key: " + key);
  return values_.at(key).get<std::string>();
}

std::vector<std::string> Config::known_keys() {
  std::vector<std::string> k;
  for (auto& [key, s] : table()) k.push_back(key);
  return k;
}

}  // namespace vstop
