#pragma once

// JSON and CSV forms of measures, flow trajectories and localization traces.
// Measure payloads are written as hex-float strings so a round trip is
// bit-exact; trace arrays use plain JSON numbers (shortest round-trip form)
// with "inf" for infinite stopping times.

#include <Eigen/Dense>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "flow.hpp"
#include "localization.hpp"
#include "measure.hpp"
#include "report.hpp"

namespace loclab {

inline constexpr const char* kMeasureSchema = "loclab.measure/1";
inline constexpr const char* kTraceSchema = "loclab.trace/1";
inline constexpr const char* kTrajectorySchema = "loclab.trajectory/1";

inline std::string hex_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_float(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(end != s.c_str() && *end == '\0' && errno != ERANGE, ErrorCode::config_parse, "bad float literal: " + s);
  return v;
}

inline json hex_array(const double* data, Eigen::Index count) {
  json out = json::array();
  for (Eigen::Index i = 0; i < count; ++i) out.push_back(hex_float(data[i]));
  return out;
}

inline VectorXd parse_hex_array(const json& j) {
  require(j.is_array(), ErrorCode::config_parse, "expected an array of hex floats");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = parse_hex_float(j[i].get<std::string>());
  return v;
}

// Plain numbers, with infinities spelled out because JSON has no literal for them.
inline json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double from_number(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    return parse_hex_float(s);
  }
  return j.get<double>();
}

inline json vector_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

// Row-major flattening.
inline json matrix_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

// --- measures ---------------------------------------------------------------------

inline json measure_to_json(const MeasureHandle& h) {
  json j;
  j["schema"] = kMeasureSchema;
  j["dim"] = h.dim();
  j["family"] = to_string(h.family);
  j["seed"] = h.seed;
  if (h.is_atomic()) {
    const auto& m = h.atomic();
    j["repr"] = "atoms";
    j["count"] = m.size();
    j["atoms"] = hex_array(m.atoms.data(), m.atoms.size());  // column-major, one atom per column
    j["weights"] = hex_array(m.weights.data(), m.weights.size());
  } else {
    j["repr"] = "product";
    json axes = json::array();
    for (const auto& a : h.product().axes) {
      axes.push_back({{"lo", hex_float(a.lo)},
                      {"hi", hex_float(a.hi)},
                      {"x", hex_array(a.x.data(), a.x.size())},
                      {"weight", hex_array(a.weight.data(), a.weight.size())},
                      {"density", hex_array(a.density.data(), a.density.size())}});
    }
    j["axes"] = std::move(axes);
  }
  return j;
}

inline MeasureHandle measure_from_json(const json& j) {
  try {
    require(j.at("schema").get<std::string>() == kMeasureSchema, ErrorCode::config_parse, "unknown measure schema");
    MeasureHandle h;
    const int dim = j.at("dim").get<int>();
    const std::string repr = j.at("repr").get<std::string>();
    if (repr == "atoms") {
      const auto count = j.at("count").get<Eigen::Index>();
      const VectorXd flat = parse_hex_array(j.at("atoms"));
      require(flat.size() == dim * count, ErrorCode::config_parse, "atom array has the wrong length");
      const VectorXd w = parse_hex_array(j.at("weights"));
      AtomicMeasure m = make_atoms(Eigen::Map<const MatrixXd>(flat.data(), dim, count), w);
      // Stored weights are already normalized; dividing by their rounded sum again
      // would move them by an ulp, so keep them verbatim.
      if (std::abs(w.sum() - 1.0) < 1e-12) {
        m.weights = w;
        m.cdf = cumulative(w);
      }
      h.payload = std::move(m);
    } else if (repr == "product") {
      std::vector<QuadAxis> axes;
      for (const auto& ja : j.at("axes")) {
        QuadAxis a;
        a.lo = parse_hex_float(ja.at("lo").get<std::string>());
        a.hi = parse_hex_float(ja.at("hi").get<std::string>());
        a.x = parse_hex_array(ja.at("x"));
        a.weight = parse_hex_array(ja.at("weight"));
        a.density = parse_hex_array(ja.at("density"));
        require(a.x.size() == a.weight.size() && a.x.size() == a.density.size(), ErrorCode::config_parse,
                "axis arrays differ in length");
        a.log_weight = a.weight.array().log();
        a.cdf = cumulative(a.weight);
        axes.push_back(std::move(a));
      }
      require(static_cast<int>(axes.size()) == dim, ErrorCode::config_parse, "axis count does not match dim");
      h.payload = ProductQuadMeasure{std::move(axes)};
    } else {
      throw Error(ErrorCode::config_parse, "unknown measure repr: " + repr);
    }
    h.family = family_from_string(j.at("family").get<std::string>());
    h.seed = j.at("seed").get<std::uint64_t>();
    return h;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse, std::string("malformed measure document: ") + e.what());
  }
}

// --- trajectories and traces ---------------------------------------------------------

inline json trajectory_to_json(const FlowTrajectory& tr, std::uint64_t seed, double dt) {
  json j;
  j["schema"] = kTrajectorySchema;
  j["measure"] = tr.measure_id;
  j["seed"] = seed;
  j["dt"] = dt;
  j["time_offset"] = tr.time_offset;
  j["base_point"] = vector_json(tr.base_point);
  j["times"] = tr.times;
  json thetas = json::array();
  for (const auto& v : tr.theta) thetas.push_back(vector_json(v));
  j["theta"] = std::move(thetas);
  if (!tr.deriv.empty()) {
    json ms = json::array();
    for (const auto& m : tr.deriv) ms.push_back(matrix_json(m));
    j["deriv"] = std::move(ms);
  }
  return j;
}

/// Every `stride`-th grid point plus the last one.
inline json trace_to_json(const LocalizationTrace& tr, std::size_t stride = 1) {
  require(stride >= 1, ErrorCode::invalid_argument, "stride must be positive");
  json j;
  j["schema"] = kTraceSchema;
  j["measure"] = tr.measure_id;
  j["seed"] = tr.seed;
  j["dt"] = tr.dt;
  j["isotropic"] = tr.isotropic;
  j["validity_horizon"] = number(tr.validity_horizon);
  json times = json::array(), a = json::array(), cov = json::array(), eig = json::array();
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    if (k % stride != 0 && k + 1 != tr.times.size()) continue;
    times.push_back(tr.times[k]);
    a.push_back(vector_json(tr.a[k]));
    cov.push_back(matrix_json(tr.cov[k]));
    eig.push_back(vector_json(tr.eigvals[k]));
  }
  j["times"] = std::move(times);
  j["a"] = std::move(a);
  j["A"] = std::move(cov);
  j["eigvals"] = std::move(eig);
  json tau = json::array();
  for (double v : tr.stopping.tau_k) tau.push_back(number(v));
  j["stopping"] = {{"tau_star", number(tr.stopping.tau_star)}, {"tau_k", std::move(tau)}};
  return j;
}

/// CSV columns: path, t, lambda_1 .. lambda_n (descending).
inline std::string trace_csv_header(int n) {
  std::string s = "path,t";
  for (int i = 1; i <= n; ++i) s += ",lambda_" + std::to_string(i);
  return s;
}

inline void append_trace_csv(std::ostream& os, std::size_t path, const LocalizationTrace& tr, std::size_t stride = 1) {
  const auto old = os.precision(17);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    if (k % stride != 0 && k + 1 != tr.times.size()) continue;
    os << path << ',' << tr.times[k];
    for (Eigen::Index i = 0; i < tr.eigvals[k].size(); ++i) os << ',' << tr.eigvals[k](i);
    os << '\n';
  }
  os.precision(old);
}

// --- files -------------------------------------------------------------------------

/// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& target, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    require(static_cast<bool>(out), ErrorCode::io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  require(!ec, ErrorCode::io, "cannot rename into " + target.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace loclab
