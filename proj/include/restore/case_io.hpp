#pragma once

// Case-file reading and writing. The on-disk format is JSON with power in
// MW/MVAr and admittances already in per-unit; see docs/case_format.md.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "restore/network.hpp"

namespace restore {

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Reactive demand assumed when a case omits `q`: 0.95 lagging power factor.
[[nodiscard]] inline double default_reactive_demand(double p) {
  return p * std::tan(std::acos(0.95));
}

namespace detail {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

inline const json& array_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) throw ParseError(std::string("case: '") + key + "' must be an array");
  return *it;
}

}  // namespace detail

/// Builds a Network from parsed case JSON, converting MW/MVAr to per-unit,
/// and validates it.
[[nodiscard]] inline Network network_from_json(const nlohmann::json& j) {
  using detail::field;
  using detail::field_or;
  if (!j.is_object()) throw ParseError("case: top level must be an object");
  const double base = field<double>(j, "base_mva", "case");
  if (!(base > 0.0)) throw ValidationError("network: base_mva must be positive");

  std::vector<Bus> buses;
  for (const auto& jb : detail::array_field(j, "buses")) {
    const std::string where = "bus";
    Bus b;
    b.id = field<int>(jb, "id", where);
    const std::string w = "bus " + std::to_string(b.id);
    b.is_reference = field_or<bool>(jb, "is_reference", false, w);
    b.v_min = field_or<double>(jb, "v_min", 0.9, w);
    b.v_max = field_or<double>(jb, "v_max", 1.1, w);
    b.damaged = field_or<bool>(jb, "damaged", false, w);
    buses.push_back(b);
  }

  std::vector<Line> lines;
  for (const auto& jl : detail::array_field(j, "lines")) {
    Line l;
    l.id = field<int>(jl, "id", "line");
    const std::string w = "line " + std::to_string(l.id);
    l.from_bus = field<int>(jl, "from_bus", w);
    l.to_bus = field<int>(jl, "to_bus", w);
    l.g = field<double>(jl, "g", w);
    l.b = field<double>(jl, "b", w);
    l.g_fr = field_or<double>(jl, "g_fr", 0.0, w);
    l.b_fr = field_or<double>(jl, "b_fr", 0.0, w);
    l.g_to = field_or<double>(jl, "g_to", 0.0, w);
    l.b_to = field_or<double>(jl, "b_to", 0.0, w);
    l.tap_r = field_or<double>(jl, "tap_r", 1.0, w);
    l.tap_i = field_or<double>(jl, "tap_i", 0.0, w);
    l.thermal_limit = field<double>(jl, "thermal_limit", w) / base;
    l.angle_min = field_or<double>(jl, "angle_min", -0.52, w);
    l.angle_max = field_or<double>(jl, "angle_max", 0.52, w);
    l.damaged = field_or<bool>(jl, "damaged", false, w);
    lines.push_back(l);
  }

  std::vector<Generator> gens;
  for (const auto& jg : detail::array_field(j, "generators")) {
    Generator g;
    g.id = field<int>(jg, "id", "generator");
    const std::string w = "generator " + std::to_string(g.id);
    g.bus = field<int>(jg, "bus", w);
    g.p_min = field<double>(jg, "p_min", w) / base;
    g.p_max = field<double>(jg, "p_max", w) / base;
    g.q_min = field<double>(jg, "q_min", w) / base;
    g.q_max = field<double>(jg, "q_max", w) / base;
    g.kind = generator_kind_from_string(field_or<std::string>(jg, "kind", "substation", w));
    g.damaged = field_or<bool>(jg, "damaged", false, w);
    gens.push_back(g);
  }

  std::vector<Demand> demands;
  for (const auto& jd : detail::array_field(j, "demands")) {
    Demand d;
    d.id = field<int>(jd, "id", "demand");
    const std::string w = "demand " + std::to_string(d.id);
    d.bus = field<int>(jd, "bus", w);
    const double p = field<double>(jd, "p", w);
    d.p = p / base;
    d.q = field_or<double>(jd, "q", default_reactive_demand(p), w) / base;
    d.has_der = field_or<bool>(jd, "has_der", false, w);
    d.damaged = field_or<bool>(jd, "damaged", false, w);
    demands.push_back(d);
  }

  Network net(base, std::move(buses), std::move(lines), std::move(gens), std::move(demands));
  require_valid(net);
  return net;
}

[[nodiscard]] inline Network parse_case(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("case: malformed JSON: ") + e.what());
  }
  return network_from_json(j);
}

/// Reads and validates a case file.
[[nodiscard]] inline Network load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("case: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

/// Serializes to the case-file schema (physical units). Every field is
/// written explicitly so that reading the result reproduces `net`.
[[nodiscard]] inline nlohmann::json network_to_json(const Network& net) {
  using nlohmann::json;
  const double base = net.base_mva();
  json j;
  j["base_mva"] = base;
  j["buses"] = json::array();
  for (const auto& b : net.buses())
    j["buses"].push_back({{"id", b.id}, {"is_reference", b.is_reference}, {"v_min", b.v_min},
                          {"v_max", b.v_max}, {"damaged", b.damaged}});
  j["lines"] = json::array();
  for (const auto& l : net.lines())
    j["lines"].push_back({{"id", l.id}, {"from_bus", l.from_bus}, {"to_bus", l.to_bus},
                          {"g", l.g}, {"b", l.b}, {"g_fr", l.g_fr}, {"b_fr", l.b_fr},
                          {"g_to", l.g_to}, {"b_to", l.b_to}, {"tap_r", l.tap_r},
                          {"tap_i", l.tap_i}, {"thermal_limit", l.thermal_limit * base},
                          {"angle_min", l.angle_min}, {"angle_max", l.angle_max},
                          {"damaged", l.damaged}});
  j["generators"] = json::array();
  for (const auto& g : net.generators())
    j["generators"].push_back({{"id", g.id}, {"bus", g.bus}, {"p_min", g.p_min * base},
                               {"p_max", g.p_max * base}, {"q_min", g.q_min * base},
                               {"q_max", g.q_max * base}, {"kind", to_string(g.kind)},
                               {"damaged", g.damaged}});
  j["demands"] = json::array();
  for (const auto& d : net.demands())
    j["demands"].push_back({{"id", d.id}, {"bus", d.bus}, {"p", d.p * base}, {"q", d.q * base},
                            {"has_der", d.has_der}, {"damaged", d.damaged}});
  return j;
}

inline void save_case(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << network_to_json(net).dump(2) << '\n';
}

/// Damaged line ids from either a JSON file ({"lines": [...]}) or an inline
/// comma-separated list such as "2,10,24". An empty string means no damage.
[[nodiscard]] inline std::vector<LineId> load_damage(const std::string& source) {
  std::vector<LineId> out;
  if (source.empty()) return out;
  std::ifstream in(source);
  if (in) {
    try {
      const auto j = nlohmann::json::parse(in);
      return j.at("lines").get<std::vector<LineId>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("damage: '" + source + "': " + e.what());
    }
  }
  std::stringstream ss(source);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (item.find_first_not_of(' ', used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError("damage: '" + source + "' is neither a readable file nor a list of line ids");
    }
  }
  return out;
}

}  // namespace restore
