#pragma once

// Uniform result record for every check: the asserted inequality lhs <= rhs,
// its margin rhs - lhs, and free-form details.

#include <cstdint>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "random.hpp"

namespace loclab {

using json = nlohmann::ordered_json;

struct CheckReport {
  std::string name;
  std::string inputs;  // canonical text of the inputs; hashed into the digest
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = true;
  bool asserted = true;
  json details = json::object();

  double margin() const { return rhs - lhs; }
  std::uint64_t digest() const { return hash_string(inputs); }
  /// Fails only when the check is asserted.
  bool ok() const { return pass || !asserted; }
};

inline std::string hex_digest(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json to_json(const CheckReport& r) {
  json j;
  j["check"] = r.name;
  j["inputs_digest"] = hex_digest(r.digest());
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["margin"] = r.margin();
  j["pass"] = r.pass;
  j["asserted"] = r.asserted;
  if (!r.details.empty()) j["details"] = r.details;
  return j;
}

/// Builds a report for lhs <= rhs.
inline CheckReport make_report(std::string name, std::string inputs, double lhs, double rhs) {
  CheckReport r;
  r.name = std::move(name);
  r.inputs = std::move(inputs);
  r.lhs = lhs;
  r.rhs = rhs;
  r.pass = lhs <= rhs;
  return r;
}

}  // namespace loclab
