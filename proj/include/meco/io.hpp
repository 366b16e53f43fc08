#ifndef MECO_IO_HPP
#define MECO_IO_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "meco/error.hpp"
#include "meco/scenario.hpp"
#include "meco/subgradient.hpp"
#include "meco/units.hpp"

// Scenario files are JSON in human units:
//
//   {
//     "system":  { "cloud_capacity_mbps": 40, "compression_ratio": 0.01, "bandwidth_mhz": 10,
//                  "noise_density_dbm_hz": -174, "tx_power_dbm": 24, "pathloss_exp": 4,
//                  "cell_radius_m": 250, "min_distance_m": 10 },
//     "devices": [ { "weight": 1, "data_size_mbits": 50, "local_capacity_mbps": 1.1,
//                    "avg_rate_mbps": 120, "distance_m": 100 } ],
//     "solver":  { "step_rule": "polyak", "step_scale": 0, "step_decay": 0.6, "max_iters": 200000,
//                  "tol": 1e-6, "positivity_floor": 1e-9, "stagnation_window": 200 }
//   }
//
// Every "system" and "solver" key is optional. A device needs avg_rate_mbps
// or distance_m (the rate is then derived by quadrature).
namespace meco::io {

using json = nlohmann::json;

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ScenarioFile {
  std::vector<DeviceProfile> devices;  ///< raw (un-normalized) weights
  SystemParams params;
  SolverConfig solver;
};

namespace detail {

inline std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  const std::size_t begin = text.rfind('\n', byte == 0 ? 0 : byte - 1);
  const std::size_t start = begin == std::string::npos ? 0 : begin + 1;
  const std::size_t end = text.find('\n', start);
  std::ostringstream out;
  out << "line " << line << ", column " << col << ": "
      << text.substr(start, end == std::string::npos ? std::string::npos : end - start);
  return out.str();
}

inline double number(const json& obj, const std::string& path, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(path + "." + key + " must be a number");
  return v.get<double>();
}

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParseError(path + ": unknown key \"" + key + "\"");
  }
}

}  // namespace detail

/// Parses a scenario document. Errors name the offending JSON path; syntax
/// errors carry the line and column.
inline ScenarioFile parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON at " + detail::line_context(text, e.byte == 0 ? 0 : e.byte - 1) + " (" +
                     e.what() + ")");
  }
  if (!doc.is_object()) throw ParseError("scenario file must be a JSON object");
  detail::reject_unknown(doc, "$", {"system", "devices", "solver"});

  ScenarioFile out;
  if (doc.contains("system")) {
    const auto& sys = doc["system"];
    if (!sys.is_object()) throw ParseError("$.system must be an object");
    detail::reject_unknown(sys, "$.system",
                           {"cloud_capacity_mbps", "compression_ratio", "bandwidth_mhz", "noise_density_dbm_hz",
                            "tx_power_dbm", "pathloss_exp", "cell_radius_m", "min_distance_m"});
    auto& p = out.params;
    const std::string path = "$.system";
    if (sys.contains("cloud_capacity_mbps")) p.cloud_capacity = units::mbps(detail::number(sys, path, "cloud_capacity_mbps"));
    if (sys.contains("compression_ratio")) p.compression_ratio = detail::number(sys, path, "compression_ratio");
    if (sys.contains("bandwidth_mhz")) p.bandwidth = units::mhz(detail::number(sys, path, "bandwidth_mhz"));
    if (sys.contains("noise_density_dbm_hz"))
      p.noise_density = units::dbm_to_watts(detail::number(sys, path, "noise_density_dbm_hz"));
    if (sys.contains("tx_power_dbm")) p.tx_power = units::dbm_to_watts(detail::number(sys, path, "tx_power_dbm"));
    if (sys.contains("pathloss_exp")) p.pathloss_exp = detail::number(sys, path, "pathloss_exp");
    if (sys.contains("cell_radius_m")) p.cell_radius = detail::number(sys, path, "cell_radius_m");
    if (sys.contains("min_distance_m")) p.min_distance = detail::number(sys, path, "min_distance_m");
  }

  if (!doc.contains("devices") || !doc["devices"].is_array()) throw ParseError("$.devices must be an array");
  const auto& devs = doc["devices"];
  for (std::size_t k = 0; k < devs.size(); ++k) {
    const auto& d = devs[k];
    const std::string path = "$.devices[" + std::to_string(k) + "]";
    if (!d.is_object()) throw ParseError(path + " must be an object");
    detail::reject_unknown(d, path, {"weight", "data_size_mbits", "local_capacity_mbps", "avg_rate_mbps", "distance_m"});
    for (const char* key : {"data_size_mbits", "local_capacity_mbps"})
      if (!d.contains(key)) throw ParseError(path + "." + key + " is required");
    DeviceProfile dev;
    dev.weight = d.contains("weight") ? detail::number(d, path, "weight") : 1.0;
    dev.data_size = units::mbits(detail::number(d, path, "data_size_mbits"));
    dev.local_capacity = units::mbps(detail::number(d, path, "local_capacity_mbps"));
    if (d.contains("avg_rate_mbps")) dev.avg_rate = units::mbps(detail::number(d, path, "avg_rate_mbps"));
    if (d.contains("distance_m")) dev.distance = detail::number(d, path, "distance_m");
    if (!dev.avg_rate && !dev.distance) throw ParseError(path + " needs avg_rate_mbps or distance_m");
    out.devices.push_back(dev);
  }

  if (doc.contains("solver")) {
    const auto& sol = doc["solver"];
    const std::string path = "$.solver";
    if (!sol.is_object()) throw ParseError(path + " must be an object");
    detail::reject_unknown(sol, path,
                           {"step_rule", "step_scale", "step_decay", "max_iters", "tol", "positivity_floor",
                            "stagnation_window"});
    auto& c = out.solver;
    if (sol.contains("step_rule")) {
      const auto& r = sol["step_rule"];
      if (r == "polyak")
        c.step_rule = StepRule::polyak;
      else if (r == "diminishing")
        c.step_rule = StepRule::diminishing;
      else
        throw ParseError(path + ".step_rule must be \"polyak\" or \"diminishing\"");
    }
    if (sol.contains("step_scale")) c.step_scale = detail::number(sol, path, "step_scale");
    if (sol.contains("step_decay")) c.step_decay = detail::number(sol, path, "step_decay");
    if (sol.contains("tol")) c.tol = detail::number(sol, path, "tol");
    if (sol.contains("positivity_floor")) c.positivity_floor = detail::number(sol, path, "positivity_floor");
    for (const char* key : {"max_iters", "stagnation_window"}) {
      if (!sol.contains(key)) continue;
      if (!sol[key].is_number_unsigned()) throw ParseError(path + "." + key + " must be a non-negative integer");
      (std::string(key) == "max_iters" ? c.max_iters : c.stagnation_window) = sol[key].get<std::size_t>();
    }
  }
  return out;
}

inline ScenarioFile read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ValidationError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Validated scenario from a parsed file.
inline Scenario to_scenario(const ScenarioFile& f) { return validate_scenario(f.devices, f.params); }

inline json to_json(const SystemParams& p) {
  return {{"cloud_capacity_mbps", units::to_mbps(p.cloud_capacity)},
          {"compression_ratio", p.compression_ratio},
          {"bandwidth_mhz", units::to_mhz(p.bandwidth)},
          {"noise_density_dbm_hz", units::watts_to_dbm(p.noise_density)},
          {"tx_power_dbm", units::watts_to_dbm(p.tx_power)},
          {"pathloss_exp", p.pathloss_exp},
          {"cell_radius_m", p.cell_radius},
          {"min_distance_m", p.min_distance}};
}

inline json to_json(const SolverConfig& c) {
  return {{"step_rule", std::string(to_string(c.step_rule))},
          {"step_scale", c.step_scale},
          {"step_decay", c.step_decay},
          {"max_iters", c.max_iters},
          {"tol", c.tol},
          {"positivity_floor", c.positivity_floor},
          {"stagnation_window", c.stagnation_window}};
}

inline json to_json(const Scenario& s) {
  json devices = json::array();
  for (const auto& d : s.devices()) {
    json j = {{"weight", d.weight},
              {"data_size_mbits", units::to_mbits(d.data_size)},
              {"local_capacity_mbps", units::to_mbps(d.local_capacity)}};
    if (d.avg_rate) j["avg_rate_mbps"] = units::to_mbps(*d.avg_rate);
    if (d.distance) j["distance_m"] = *d.distance;
    devices.push_back(std::move(j));
  }
  return {{"system", to_json(s.params())}, {"devices", std::move(devices)}};
}

inline json to_json(const Scenario& s, const SolverConfig& c) {
  json j = to_json(s);
  j["solver"] = to_json(c);
  return j;
}

/// FNV-1a 64 of a byte string.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the canonical (sorted-key, compact) JSON form of the scenario.
inline std::string scenario_hash(const Scenario& s) { return hex64(fnv1a(to_json(s).dump())); }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
  if (!out) throw ValidationError("failed writing " + path);
}

}  // namespace meco::io

#endif  // MECO_IO_HPP
