#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <json.hpp>
#include <string>

namespace meshfit {

inline std::string fnv1a_hex(const std::string& data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Metric report for the eval/fit commands. The timestamp is opt-in: reports
// must be byte-identical across reruns of the same seeded pipeline, so
// wall-clock metadata only appears when explicitly requested.
struct EvalReport {
  std::map<std::string, double> metrics;
  uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;  // empty = omitted

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["metrics"] = metrics;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    if (!timestamp.empty()) j["timestamp"] = timestamp;
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace meshfit
