#pragma once

// Experiment configs, the runner and its manifest.
//
// A config names a measure, default dynamics, a master seed and a list of
// checks. Each check gets its own seed derived from (master, name, index), so
// adding or reordering checks never changes another check's numbers. Reports
// are deterministic in the config; only the top-level wall_time_seconds field
// of the manifest varies between runs.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "error.hpp"
#include "report.hpp"
#include "serialize.hpp"
#include "thinshell.hpp"

namespace loclab {

inline constexpr const char* kToolVersion = "0.4.0";
inline constexpr const char* kConfigSchema = "loclab.config/1";
inline constexpr const char* kManifestSchema = "loclab.manifest/1";

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config = 2, exit_io = 3 };

struct CheckSpec {
  std::string name;
  json params = json::object();  // user-supplied only; defaults are merged at run time
};

struct OutputSpec {
  std::string dir = "loclab-out";
  std::string manifest = "manifest.json";
  bool traces = false;
  std::size_t trace_stride = 10;
};

struct ThinShellSpec {
  std::size_t samples = 200000;  // Monte Carlo draws for Var|X|^2; 0 for exact only
  double t = 1.0;
  bool chain = true;
};

struct ExperimentConfig {
  std::string kind = "verify";  // verify | simulate | thinshell | report
  std::uint64_t seed = 0;
  MeasureSpec measure;
  Dynamics dynamics;
  std::vector<CheckSpec> checks;
  OutputSpec outputs;
  ThinShellSpec thinshell;
  std::string source;  // manifest summarized by kind=report
};

inline json to_json(const ExperimentConfig& c) {
  json checks = json::array();
  for (const auto& s : c.checks) checks.push_back({{"name", s.name}, {"params", s.params}});
  return {{"schema", kConfigSchema},
          {"kind", c.kind},
          {"seed", c.seed},
          {"measure", to_json(c.measure)},
          {"dynamics", {{"t_max", c.dynamics.t_max}, {"dt", c.dynamics.dt}, {"n_paths", c.dynamics.n_paths}}},
          {"checks", checks},
          {"outputs",
           {{"dir", c.outputs.dir},
            {"manifest", c.outputs.manifest},
            {"traces", c.outputs.traces},
            {"trace_stride", c.outputs.trace_stride}}},
          {"thinshell", {{"samples", c.thinshell.samples}, {"t", c.thinshell.t}, {"chain", c.thinshell.chain}}},
          {"source", c.source}};
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::get_or;
  check_keys(j, {"schema", "kind", "seed", "measure", "dynamics", "checks", "outputs", "thinshell", "source"},
             "config");
  require(get_or<std::string>(j, "schema", kConfigSchema) == kConfigSchema, ErrorCode::config_parse,
          "unsupported config schema");
  ExperimentConfig c;
  c.kind = get_or(j, "kind", c.kind);
  require(c.kind == "verify" || c.kind == "simulate" || c.kind == "thinshell" || c.kind == "report",
          ErrorCode::config_parse, "kind must be verify, simulate, thinshell or report");
  c.seed = get_or(j, "seed", c.seed);
  if (j.contains("measure")) c.measure = measure_spec_from_json(j["measure"]);
  if (j.contains("dynamics")) {
    const json& d = j["dynamics"];
    check_keys(d, {"t_max", "dt", "n_paths"}, "dynamics");
    c.dynamics.t_max = get_or(d, "t_max", c.dynamics.t_max);
    c.dynamics.dt = get_or(d, "dt", c.dynamics.dt);
    c.dynamics.n_paths = get_or(d, "n_paths", c.dynamics.n_paths);
    require(c.dynamics.t_max > 0.0 && c.dynamics.dt > 0.0 && c.dynamics.dt <= c.dynamics.t_max &&
                c.dynamics.n_paths >= 2,
            ErrorCode::config_parse, "dynamics need 0 < dt <= t_max and at least two paths");
  }
  if (j.contains("checks")) {
    require(j["checks"].is_array(), ErrorCode::config_parse, "checks must be an array");
    for (const auto& e : j["checks"]) {
      CheckSpec s;
      if (e.is_string()) {
        s.name = e.get<std::string>();
      } else {
        check_keys(e, {"name", "params"}, "check entry");
        s.name = get_or<std::string>(e, "name", "");
        if (e.contains("params")) s.params = e["params"];
      }
      merged_params(s.name, s.params);  // unknown check or parameter -> config_parse
      c.checks.push_back(std::move(s));
    }
  }
  if (j.contains("outputs")) {
    const json& o = j["outputs"];
    check_keys(o, {"dir", "manifest", "traces", "trace_stride"}, "outputs");
    c.outputs.dir = get_or(o, "dir", c.outputs.dir);
    c.outputs.manifest = get_or(o, "manifest", c.outputs.manifest);
    c.outputs.traces = get_or(o, "traces", c.outputs.traces);
    c.outputs.trace_stride = get_or(o, "trace_stride", c.outputs.trace_stride);
    require(c.outputs.trace_stride >= 1, ErrorCode::config_parse, "trace_stride must be positive");
  }
  if (j.contains("thinshell")) {
    const json& t = j["thinshell"];
    check_keys(t, {"samples", "t", "chain"}, "thinshell");
    c.thinshell.samples = get_or(t, "samples", c.thinshell.samples);
    c.thinshell.t = get_or(t, "t", c.thinshell.t);
    c.thinshell.chain = get_or(t, "chain", c.thinshell.chain);
    require(c.thinshell.t > 0.0, ErrorCode::config_parse, "thinshell t must be positive");
  }
  c.source = get_or(j, "source", c.source);
  require(c.kind != "report" || !c.source.empty(), ErrorCode::config_parse, "kind=report needs a source manifest");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
  const std::string text = read_file(p);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse, p.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// LOCLAB_SEED, when set, replaces the master seed.
inline void apply_seed_override(ExperimentConfig& c) {
  if (const char* s = std::getenv("LOCLAB_SEED"); s != nullptr && *s != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 0);
    require(*end == '\0', ErrorCode::config_parse, std::string("LOCLAB_SEED is not an integer: ") + s);
    c.seed = v;
  }
}

inline std::uint64_t config_digest(const ExperimentConfig& c) { return hash_string(to_json(c).dump()); }

inline std::uint64_t check_seed(std::uint64_t master, const std::string& name, std::size_t index) {
  return derive_seed(master, "experiment", name, index);
}

struct RunResult {
  json manifest;
  int exit_code = exit_ok;
};

namespace detail {

inline json file_entry(const std::filesystem::path& dir, const std::string& rel, const std::string& content) {
  write_file_atomic(dir / rel, content);
  return {{"path", rel}, {"bytes", content.size()}, {"digest", hex_digest(hash_string(content))}};
}

// Localization traces for every path: one JSON document per path and a
// combined eigenvalue CSV.
inline json write_traces(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const MeasureHandle h = build_measure(c.measure);
  const std::size_t paths = c.dynamics.n_paths;
  std::vector<LocalizationTrace> traces(paths);
  const std::uint64_t seed = check_seed(c.seed, "simulate", 0);
  parallel_for(paths, [&](std::size_t p) {
    traces[p] = run_localization(h, c.dynamics.t_max, c.dynamics.dt, path_seed(seed, p));
  });
  json files = json::array();
  std::ostringstream csv;
  csv << trace_csv_header(h.dim()) << '\n';
  for (std::size_t p = 0; p < paths; ++p) {
    files.push_back(file_entry(dir, "traces/path_" + std::to_string(p) + ".json",
                               trace_to_json(traces[p], c.outputs.trace_stride).dump(1) + "\n"));
    append_trace_csv(csv, p, traces[p], c.outputs.trace_stride);
  }
  files.push_back(file_entry(dir, "traces/eigenvalues.csv", csv.str()));
  return files;
}

}  // namespace detail

/// Structural validation of a manifest: schema, digest of the embedded config,
/// and each configured check reported exactly once in order.
inline void verify_manifest(const json& m) {
  try {
    require(m.at("schema").get<std::string>() == kManifestSchema, ErrorCode::config_parse, "not a manifest");
    const ExperimentConfig c = config_from_json(m.at("config"));
    require(m.at("config_digest").get<std::string>() == hex_digest(config_digest(c)), ErrorCode::config_parse,
            "config digest mismatch");
    const json& checks = m.at("checks");
    require(checks.size() == c.checks.size(), ErrorCode::config_parse, "check count mismatch");
    bool all = true;
    for (std::size_t i = 0; i < checks.size(); ++i) {
      require(checks[i].at("check").get<std::string>() == c.checks[i].name &&
                  checks[i].at("index").get<std::size_t>() == i,
              ErrorCode::config_parse, "check " + std::to_string(i) + " out of place");
      all = all && (!checks[i].at("asserted").get<bool>() || checks[i].at("pass").get<bool>());
    }
    require(all || !m.at("all_pass").get<bool>(), ErrorCode::config_parse, "all_pass disagrees with the checks");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse, std::string("malformed manifest: ") + e.what());
  }
}

// --- thin-shell report -----------------------------------------------------------

struct ThinShellOptions {
  MeasureSpec measure;
  std::size_t samples = 200000;  // Monte Carlo draws; 0 for the exact variance only
  bool chain = true;
  double t = 1.0;
  std::size_t n_paths = 64;
  double dt = 1e-3;
  std::uint64_t seed = 0;
};

inline constexpr const char* kThinShellReportSchema = "loclab.thinshell/1";
inline constexpr const char* kThinShellCsvColumns =
    "family,n,samples,var_norm_sq,var_norm_sq_se,var_norm_sq_over_n,t,n_paths,chain_middle,chain_right,"
    "chain_right_se,chain_right_over_n,pass";

/// Var|X|^2 (Monte Carlo when samples > 0, exact on product measures) and,
/// optionally, the chain Var|X|^2 <= 4 sum |x_i|^2_{H^-1} <= (4/t^2) E sum exp(2 int lambda_i).
/// var_norm_sq is the Monte Carlo value when sampled, else the exact one.
inline json thinshell_report(const ThinShellOptions& o, std::string* csv_line = nullptr) {
  const MeasureHandle h = build_measure(o.measure);
  const int n = h.dim();
  json j;
  j["schema"] = kThinShellReportSchema;
  j["family"] = to_string(h.family);
  j["measure"] = h.id();
  j["n"] = n;
  j["seed"] = o.seed;
  std::optional<double> exact;
  if (h.is_product()) exact = variance_of_norm_sq_exact(h).value;
  double var = exact.value_or(0.0), se = 0.0;
  if (o.samples > 0) {
    const VarianceEstimate mc = variance_of_norm_sq_mc(h, o.samples, derive_seed(o.seed, "thinshell", "variance", 0));
    var = mc.value;
    se = mc.se;
  }
  require(exact || o.samples > 0, ErrorCode::invalid_argument, "atom measures need samples > 0");
  j["samples"] = o.samples;
  j["var_norm_sq"] = var;
  j["var_norm_sq_se"] = se;
  j["var_norm_sq_over_n"] = var / n;
  if (exact) j["var_norm_sq_exact"] = *exact;
  std::ostringstream row;
  row.precision(17);
  row << to_string(h.family) << ',' << n << ',' << o.samples << ',' << var << ',' << se << ',' << var / n << ',';
  if (o.chain) {
    ChainOptions co;
    co.dt = o.dt;
    const ThinShellReport r = full_chain_report(h, o.t, o.n_paths, derive_seed(o.seed, "thinshell", "chain", 0), co);
    j["chain"] = to_json(r);
    j["check"] = to_json(r.report);
    row << o.t << ',' << o.n_paths << ',' << r.chain_middle << ',' << r.chain_right << ',' << r.chain_right_se << ','
        << r.chain_right / n << ',' << (r.report.pass ? 1 : 0);
  } else {
    j["check"] = nullptr;
    row << ",,,,,,";
  }
  if (csv_line) *csv_line = row.str();
  return j;
}

namespace detail {

inline json run_thinshell_kind(const ExperimentConfig& c, const std::filesystem::path& dir, json& outputs) {
  ThinShellOptions o;
  o.measure = c.measure;
  o.samples = c.thinshell.samples;
  o.chain = c.thinshell.chain;
  o.t = c.thinshell.t;
  o.n_paths = c.dynamics.n_paths;
  o.dt = c.dynamics.dt;
  o.seed = c.seed;
  std::string row;
  json j = thinshell_report(o, &row);
  outputs.push_back(file_entry(dir, "thinshell.json", j.dump(2) + "\n"));
  outputs.push_back(file_entry(dir, "thinshell.csv", std::string(kThinShellCsvColumns) + "\n" + row + "\n"));
  return j;
}

// Re-validates a previous manifest and tabulates its checks as CSV.
inline json summarize_manifest(const ExperimentConfig& c, const std::filesystem::path& dir, json& outputs) {
  json src;
  try {
    src = json::parse(read_file(c.source));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse, c.source + ": " + e.what());
  }
  verify_manifest(src);
  std::ostringstream csv;
  csv.precision(17);
  csv << "index,check,asserted,pass,lhs,rhs,margin\n";
  std::size_t failed = 0;
  for (const auto& e : src["checks"]) {
    const bool ok = !e["asserted"].get<bool>() || e["pass"].get<bool>();
    if (!ok) ++failed;
    csv << e["index"].get<std::size_t>() << ',' << e["check"].get<std::string>() << ','
        << (e["asserted"].get<bool>() ? 1 : 0) << ',' << (e["pass"].get<bool>() ? 1 : 0) << ',';
    if (e.contains("lhs")) csv << e["lhs"].dump() << ',' << e["rhs"].dump() << ',' << e["margin"].dump();
    else csv << ",,";
    csv << '\n';
  }
  outputs.push_back(file_entry(dir, "summary.csv", csv.str()));
  return {{"source", c.source},
          {"source_config_digest", src["config_digest"]},
          {"source_all_pass", src["all_pass"]},
          {"checks", src["checks"].size()},
          {"failed", failed}};
}

}  // namespace detail

/// Runs every check in order and writes the manifest (plus traces when asked).
/// A check that throws a non-config error is recorded as a failure; config
/// errors propagate so the caller can exit with the config code.
inline RunResult run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path dir = c.outputs.dir;
  json reports = json::array();
  bool all_pass = true;
  for (std::size_t i = 0; i < c.checks.size(); ++i) {
    const CheckSpec& s = c.checks[i];
    CheckContext ctx{merged_params(s.name, s.params), c.measure, c.dynamics, check_seed(c.seed, s.name, i)};
    json entry;
    try {
      entry = to_json(run_check(s.name, ctx));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::config_parse) throw;
      entry = {{"check", s.name}, {"pass", false}, {"asserted", true}, {"error", {{"code", to_string(e.code())},
                                                                                  {"message", e.what()}}}};
    }
    entry["index"] = i;
    entry["seed"] = ctx.seed;
    entry["params"] = ctx.params;
    const bool ok = !entry["asserted"].get<bool>() || entry["pass"].get<bool>();
    all_pass = all_pass && ok;
    if (log) *log << (ok ? "PASS " : "FAIL ") << s.name << '\n';
    reports.push_back(std::move(entry));
  }
  json outputs = json::array();
  if (c.kind == "simulate" || c.outputs.traces) outputs = detail::write_traces(c, dir);
  json extra;
  if (c.kind == "thinshell") {
    extra = detail::run_thinshell_kind(c, dir, outputs);
    const json& chk = extra["check"];
    if (!chk.is_null()) all_pass = all_pass && (!chk["asserted"].get<bool>() || chk["pass"].get<bool>());
    if (log) *log << "thinshell var_norm_sq/n = " << extra["var_norm_sq_over_n"].get<double>() << '\n';
  } else if (c.kind == "report") {
    extra = detail::summarize_manifest(c, dir, outputs);
    all_pass = all_pass && extra["source_all_pass"].get<bool>();
  }

  RunResult r;
  r.exit_code = all_pass ? exit_ok : exit_check_failed;
  json m;
  m["schema"] = kManifestSchema;
  m["tool_version"] = kToolVersion;
  m["config_digest"] = hex_digest(config_digest(c));
  m["config"] = to_json(c);
  m["checks"] = std::move(reports);
  if (c.kind == "thinshell") m["thinshell"] = std::move(extra);
  if (c.kind == "report") m["summary"] = std::move(extra);
  m["outputs"] = std::move(outputs);
  m["all_pass"] = all_pass;
  m["exit_code"] = r.exit_code;
  m["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file_atomic(dir / c.outputs.manifest, m.dump(2) + "\n");
  r.manifest = std::move(m);
  return r;
}

/// Strips fields that legitimately differ between identical runs.
inline json deterministic_view(json manifest) {
  manifest.erase("wall_time_seconds");
  return manifest;
}

}  // namespace loclab
