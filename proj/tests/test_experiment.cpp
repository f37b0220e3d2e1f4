#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "loclab/loclab.hpp"

using namespace loclab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(LOCLAB_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(LOCLAB_CLI_PATH) + "' " + args +
                          " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

json small_config(const fs::path& dir) {
  json j = json::parse(R"({
    "schema": "loclab.config/1", "kind": "verify", "seed": 11,
    "measure": {"family": "cube", "dim": 2, "resolution": 64},
    "dynamics": {"t_max": 0.5, "dt": 0.01, "n_paths": 16},
    "checks": [
      {"name": "product-integral-bound", "params": {"cases": 20, "n_max": 3}},
      {"name": "covariance-bound"},
      "stopping-tails"
    ]})");
  j["outputs"] = {{"dir", dir.string()}, {"traces", true}, {"trace_stride", 5}};
  return j;
}

}  // namespace

// --- serialization ------------------------------------------------------------------

TEST(Serialize, HexFloatsRoundTripBitExact) {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-310, 6.02214076e23, -2.5e-17}) {
    const double back = parse_hex_float(hex_float(v));
    EXPECT_EQ(std::memcmp(&v, &back, sizeof v), 0) << v;
  }
  EXPECT_THROW(parse_hex_float("0x1.8p"), Error);
  EXPECT_THROW(parse_hex_float("twelve"), Error);
  EXPECT_EQ(from_number(number(kInf)), kInf);
  EXPECT_EQ(from_number(number(-kInf)), -kInf);
}

TEST(Serialize, ProductMeasureRoundTrip) {
  const MeasureHandle h = make_asymmetric_product(2, 64);
  const MeasureHandle back = measure_from_json(json::parse(measure_to_json(h).dump()));
  ASSERT_TRUE(back.is_product());
  EXPECT_EQ(back.id(), h.id());
  for (int i = 0; i < 2; ++i) {
    const auto& a = h.product().axes[i];
    const auto& b = back.product().axes[i];
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.weight, b.weight);
    EXPECT_EQ(a.density, b.density);
    EXPECT_EQ(a.cdf, b.cdf);
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
  }
  const Tilt tilt{0.7, VectorXd::Constant(2, 0.3)};
  EXPECT_EQ(tilt_summary(h, tilt).mean, tilt_summary(back, tilt).mean);
}

TEST(Serialize, AtomMeasureRoundTrip) {
  const MeasureHandle h = make_atom_cloud(Family::cube, 3, 50, 9);
  const MeasureHandle back = measure_from_json(measure_to_json(h));
  ASSERT_TRUE(back.is_atomic());
  EXPECT_EQ(back.atomic().atoms, h.atomic().atoms);
  EXPECT_EQ(back.atomic().weights, h.atomic().weights);
  EXPECT_EQ(back.seed, 9u);
}

TEST(Serialize, MalformedMeasureIsConfigError) {
  json j = measure_to_json(make_two_atom());
  j["count"] = 3;
  try {
    measure_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config_parse);
  }
  EXPECT_THROW(measure_from_json(json{{"schema", "loclab.measure/1"}}), Error);
  EXPECT_THROW(measure_from_json(json{{"schema", "other/9"}}), Error);
}

TEST(Serialize, TraceJsonAndCsv) {
  const MeasureHandle h = make_cube_measure(2, 64);
  const LocalizationTrace tr = run_localization(h, 0.2, 0.01, 5);
  const json j = trace_to_json(tr, 4);
  EXPECT_EQ(j["schema"], kTraceSchema);
  const std::size_t kept = j["times"].size();
  EXPECT_EQ(kept, (tr.times.size() - 1) / 4 + 1 + ((tr.times.size() - 1) % 4 != 0));
  EXPECT_DOUBLE_EQ(j["times"].back().get<double>(), tr.times.back());
  EXPECT_EQ(j["A"][0].size(), 4u);
  EXPECT_EQ(j["eigvals"][0].size(), 2u);
  // Cube eigenvalues never reach 2 by t = 0.2, so stopping times are infinite.
  EXPECT_EQ(j["stopping"]["tau_star"], "inf");

  std::ostringstream csv;
  csv << trace_csv_header(2) << '\n';
  append_trace_csv(csv, 3, tr, 4);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "path,t,lambda_1,lambda_2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.rfind("3,", 0), 0u);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
  }
  EXPECT_EQ(rows, kept);
}

TEST(Serialize, AtomicWriteLeavesNoTemporary) {
  const fs::path dir = scratch("atomic");
  write_file_atomic(dir / "sub" / "a.txt", "first");
  write_file_atomic(dir / "sub" / "a.txt", "second");
  EXPECT_EQ(read_file(dir / "sub" / "a.txt"), "second");
  EXPECT_FALSE(fs::exists(dir / "sub" / "a.txt.tmp"));
  write_text(dir / "blocker", "x");
  try {
    write_file_atomic(dir / "blocker" / "b.txt", "y");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
  EXPECT_THROW(read_file(dir / "missing.json"), Error);
}

// --- configs ---------------------------------------------------------------------

TEST(Config, RoundTripIsLossless) {
  const ExperimentConfig c = config_from_json(small_config("/tmp/x"));
  const json once = to_json(c);
  const json twice = to_json(config_from_json(json::parse(once.dump())));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(config_digest(c), config_digest(config_from_json(twice)));
  EXPECT_EQ(c.checks.size(), 3u);
  EXPECT_EQ(c.checks[2].name, "stopping-tails");
  EXPECT_EQ(c.measure.resolution, 64);
}

TEST(Config, StrictValidation) {
  auto code_of = [](const json& j) {
    try {
      config_from_json(j);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::invalid_argument;  // sentinel: accepted
  };
  json base = small_config("/tmp/x");
  auto with = [&](const json& patch) {
    json j = base;
    j.merge_patch(patch);
    return j;
  };
  EXPECT_EQ(code_of(with({{"checks", {"no-such-check"}}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"checks", {{{"name", "von-neumann"}, {"params", {{"casez", 3}}}}}}})),
            ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"dynamics", {{"dt", -1.0}}}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"dynamics", {{"n_paths", 0}}}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"dynamics", {{"t_max", "long"}}}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"kind", "plot"}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"extra", 1}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"measure", {{"family", "sphere"}}}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"schema", "loclab.config/9"}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(with({{"kind", "report"}})), ErrorCode::config_parse);
  EXPECT_EQ(code_of(base), ErrorCode::invalid_argument);
}

TEST(Config, SeedOverrideFromEnvironment) {
  ExperimentConfig c = config_from_json(small_config("/tmp/x"));
  ::setenv("LOCLAB_SEED", "123", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 123u);
  ::setenv("LOCLAB_SEED", "12x", 1);
  EXPECT_THROW(apply_seed_override(c), Error);
  ::unsetenv("LOCLAB_SEED");
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 123u);
}

TEST(Config, CheckSeedsIgnoreOtherChecks) {
  // Appending a check leaves the streams of existing ones alone.
  EXPECT_EQ(check_seed(5, "von-neumann", 0), check_seed(5, "von-neumann", 0));
  EXPECT_NE(check_seed(5, "von-neumann", 0), check_seed(5, "von-neumann", 1));
  EXPECT_NE(check_seed(5, "von-neumann", 0), check_seed(5, "coupling-law", 0));
  EXPECT_NE(check_seed(5, "von-neumann", 0), check_seed(6, "von-neumann", 0));
}

// --- registry ---------------------------------------------------------------------

TEST(Registry, EveryCheckIsDescribed) {
  EXPECT_GE(check_registry().size(), 17u);
  for (const auto& [name, info] : check_registry()) {
    const std::string text = describe_check(name);
    EXPECT_NE(text.find(info.statement), std::string::npos);
    EXPECT_FALSE(info.statement.empty());
    for (auto p = info.defaults.begin(); p != info.defaults.end(); ++p)
      EXPECT_NE(text.find(p.key() + " = "), std::string::npos) << name;
  }
  EXPECT_THROW(describe_check("nope"), Error);
}

TEST(Registry, ParametersMergeOverDefaults) {
  const json p = merged_params("von-neumann", {{"cases", 7}});
  EXPECT_EQ(p["cases"], 7);
  EXPECT_EQ(p["n_max"], 6);
  EXPECT_THROW(merged_params("von-neumann", {{"bogus", 1}}), Error);
  EXPECT_THROW(merged_params("von-neumann", json::array()), Error);
}

TEST(Registry, ChecksAreDeterministicInSeed) {
  CheckContext c{merged_params("daleckii-krein", {{"cases", 10}}), {}, {}, 3};
  const CheckReport a = run_check("daleckii-krein", c);
  const CheckReport b = run_check("daleckii-krein", c);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_TRUE(a.pass);
  c.seed = 4;
  EXPECT_NE(run_check("daleckii-krein", c).lhs, a.lhs);
}

// --- runs ---------------------------------------------------------------------------

TEST(Run, EmptyCheckListPasses) {
  const fs::path dir = scratch("empty");
  ExperimentConfig c;
  c.outputs.dir = dir.string();
  const RunResult r = run_experiment(c);
  EXPECT_EQ(r.exit_code, exit_ok);
  EXPECT_TRUE(r.manifest["checks"].empty());
  EXPECT_TRUE(r.manifest["outputs"].empty());
  EXPECT_TRUE(r.manifest["all_pass"].get<bool>());
  EXPECT_NO_THROW(verify_manifest(json::parse(read_file(dir / "manifest.json"))));
}

TEST(Run, ManifestIsDeterministicAndVerifiable) {
  const fs::path dir = scratch("determinism");
  const ExperimentConfig c = config_from_json(small_config(dir));
  const RunResult first = run_experiment(c);
  const std::string manifest1 = read_file(dir / "manifest.json");
  const std::string csv1 = read_file(dir / "traces" / "eigenvalues.csv");
  const RunResult second = run_experiment(c);
  EXPECT_EQ(first.exit_code, exit_ok);
  EXPECT_EQ(deterministic_view(first.manifest).dump(), deterministic_view(second.manifest).dump());
  EXPECT_EQ(deterministic_view(json::parse(manifest1)).dump(),
            deterministic_view(json::parse(read_file(dir / "manifest.json"))).dump());
  EXPECT_EQ(csv1, read_file(dir / "traces" / "eigenvalues.csv"));

  const json& m = first.manifest;
  EXPECT_EQ(m["schema"], kManifestSchema);
  EXPECT_EQ(m["tool_version"], kToolVersion);
  ASSERT_EQ(m["checks"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(m["checks"][i]["check"], c.checks[i].name);
    EXPECT_TRUE(m["checks"][i].contains("margin"));
  }
  // 16 per-path traces plus the combined CSV, each with a digest of its bytes.
  ASSERT_EQ(m["outputs"].size(), 17u);
  for (const auto& f : m["outputs"]) {
    const std::string body = read_file(dir / f["path"].get<std::string>());
    EXPECT_EQ(f["bytes"].get<std::size_t>(), body.size());
    EXPECT_EQ(f["digest"], hex_digest(hash_string(body)));
  }
  EXPECT_NO_THROW(verify_manifest(m));

  json tampered = m;
  tampered["config"]["seed"] = 12;
  EXPECT_THROW(verify_manifest(tampered), Error);
  tampered = m;
  tampered["checks"].erase(1);
  EXPECT_THROW(verify_manifest(tampered), Error);
  tampered = m;
  tampered["checks"][0]["pass"] = false;
  EXPECT_THROW(verify_manifest(tampered), Error);
}

TEST(Run, SeedChangesResults) {
  const fs::path dir = scratch("seeds");
  ExperimentConfig c = config_from_json(small_config(dir));
  const json a = run_experiment(c).manifest;
  c.seed = 12;
  const json b = run_experiment(c).manifest;
  EXPECT_NE(a["checks"][1]["lhs"], b["checks"][1]["lhs"]);
  EXPECT_NE(a["config_digest"], b["config_digest"]);
}

TEST(Run, FailuresAndThrowingChecks) {
  const fs::path dir = scratch("failures");
  ExperimentConfig c;
  c.outputs.dir = dir.string();
  // Cube variance per coordinate is 4/5, outside [0, 0.1].
  c.checks.push_back({"thinshell-variance", {{"band", {0.0, 0.1}}}});
  // A 2D measure for a one-dimensional check: the runner records the error.
  c.checks.push_back({"wasserstein-coupling", {{"measure", {{"dim", 2}}}, {"n_paths", 4}}});
  c.checks.push_back({"von-neumann", {{"cases", 50}}});
  const RunResult r = run_experiment(c);
  EXPECT_EQ(r.exit_code, exit_check_failed);
  EXPECT_FALSE(r.manifest["checks"][0]["pass"].get<bool>());
  EXPECT_EQ(r.manifest["checks"][1]["error"]["code"], "invalid-argument");
  EXPECT_TRUE(r.manifest["checks"][2]["pass"].get<bool>());
  EXPECT_FALSE(r.manifest["all_pass"].get<bool>());
  EXPECT_NO_THROW(verify_manifest(r.manifest));
}

TEST(Run, ThinShellKindOnCube) {
  const fs::path dir = scratch("thinshell");
  ExperimentConfig c;
  c.kind = "thinshell";
  c.seed = 42;
  c.measure.family = "cube";
  c.measure.dim = 16;
  c.thinshell.samples = 200000;
  c.thinshell.chain = false;
  c.outputs.dir = dir.string();
  const RunResult r = run_experiment(c);
  EXPECT_EQ(r.exit_code, exit_ok);
  const double v = r.manifest["thinshell"]["var_norm_sq_over_n"].get<double>();
  EXPECT_GE(v, 0.75);
  EXPECT_LE(v, 0.85);
  // Monte Carlo agrees with the exact 4/5 within 4 SE.
  const double se = r.manifest["thinshell"]["var_norm_sq_se"].get<double>() / 16.0;
  EXPECT_NEAR(v, 0.8, 4.0 * se);
  const std::string csv = read_file(dir / "thinshell.csv");
  EXPECT_EQ(csv.rfind(kThinShellCsvColumns, 0), 0u);
}

TEST(Run, ReportKindSummarizesManifest) {
  const fs::path src = scratch("report-src");
  ExperimentConfig a;
  a.outputs.dir = src.string();
  a.checks.push_back({"von-neumann", {{"cases", 20}}});
  a.checks.push_back({"thinshell-variance", {{"band", {0.0, 0.1}}}});
  run_experiment(a);

  const fs::path dir = scratch("report");
  ExperimentConfig c;
  c.kind = "report";
  c.source = (src / "manifest.json").string();
  c.outputs.dir = dir.string();
  const RunResult r = run_experiment(c);
  EXPECT_EQ(r.exit_code, exit_check_failed);
  EXPECT_EQ(r.manifest["summary"]["failed"], 1);
  const std::string csv = read_file(dir / "summary.csv");
  EXPECT_NE(csv.find("0,von-neumann,1,1,"), std::string::npos);
  EXPECT_NE(csv.find("1,thinshell-variance,1,0,"), std::string::npos);
}

// --- the command line ------------------------------------------------------------

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  write_text(dir / "good.json", small_config(dir / "good-out").dump());
  EXPECT_EQ(cli("run '" + (dir / "good.json").string() + "'"), 0);
  EXPECT_TRUE(fs::exists(dir / "good-out" / "manifest.json"));

  write_text(dir / "broken.json", "{\"checks\": [");
  EXPECT_EQ(cli("run '" + (dir / "broken.json").string() + "'"), 2);
  write_text(dir / "unknown.json", R"({"checks": ["no-such-check"]})");
  EXPECT_EQ(cli("run '" + (dir / "unknown.json").string() + "'"), 2);
  EXPECT_EQ(cli("run '" + (dir / "absent.json").string() + "'"), 3);

  json failing = {{"checks", {{{"name", "thinshell-variance"}, {"params", {{"band", {0.0, 0.1}}}}}}},
                  {"outputs", {{"dir", (dir / "fail-out").string()}}}};
  write_text(dir / "failing.json", failing.dump());
  EXPECT_EQ(cli("run '" + (dir / "failing.json").string() + "'"), 1);

  write_text(dir / "blocker", "x");
  json unwritable = {{"checks", json::array()}, {"outputs", {{"dir", (dir / "blocker" / "out").string()}}}};
  write_text(dir / "unwritable.json", unwritable.dump());
  EXPECT_EQ(cli("run '" + (dir / "unwritable.json").string() + "'"), 3);

  EXPECT_EQ(cli("describe coupling-law"), 0);
  EXPECT_EQ(cli("describe no-such-check"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("thinshell --family sphere --samples 10 --no-chain"), 2);
}

TEST(Cli, SeedEnvironmentOverride) {
  const fs::path dir = scratch("cli-seed");
  write_text(dir / "c.json", small_config(dir / "out").dump());
  ASSERT_EQ(cli("run '" + (dir / "c.json").string() + "'", "LOCLAB_SEED=987"), 0);
  const json m = json::parse(read_file(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["config"]["seed"], 987);
}

TEST(Cli, ThinShellWritesReportAndCsv) {
  const fs::path dir = scratch("cli-thinshell");
  const std::string args = "thinshell --family cube --dim 4 --samples 20000 --seed 42 --paths 8 --dt 0.01 --out '" +
                           (dir / "report.json").string() + "' --csv '" + (dir / "rows.csv").string() + "'";
  ASSERT_EQ(cli(args), 0);
  ASSERT_EQ(cli(args), 0);
  const json r = json::parse(read_file(dir / "report.json"));
  EXPECT_EQ(r["schema"], kThinShellReportSchema);
  EXPECT_EQ(r["n"], 4);
  EXPECT_NEAR(r["var_norm_sq_exact"].get<double>() / 4.0, 0.8, 1e-6);
  EXPECT_TRUE(r["check"]["pass"].get<bool>());
  std::istringstream rows(read_file(dir / "rows.csv"));
  std::string line;
  int n = 0;
  while (std::getline(rows, line)) ++n;
  EXPECT_EQ(n, 3);  // header once, then one row per run
}
