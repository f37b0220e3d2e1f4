// loclab: run experiment configs, describe checks, produce thin-shell reports.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "loclab/loclab.hpp"

namespace {

constexpr const char* kFooter = R"(Exit codes:
  0  every asserted check passed
  1  an asserted check failed
  2  config parse error or unknown check
  3  I/O error

Environment:
  LOCLAB_SEED  overrides the master seed of a run config

CSV outputs:
  thinshell --csv FILE appends one row (header written when FILE is new):
    family, n, samples, var_norm_sq, var_norm_sq_se, var_norm_sq_over_n,
    t, n_paths, chain_middle, chain_right, chain_right_se, chain_right_over_n, pass
  (chain columns are empty with --no-chain; var_norm_sq_se is 0 for exact values)
  traces/eigenvalues.csv (run with outputs.traces or kind=simulate):
    path, t, lambda_1, ..., lambda_n   (eigenvalues of A_t, descending)
  summary.csv (kind=report):
    index, check, asserted, pass, lhs, rhs, margin)";

int fail(loclab::ErrorCode code, const std::string& what) {
  std::cerr << "loclab: " << what << '\n';
  switch (code) {
    case loclab::ErrorCode::config_parse: return loclab::exit_config;
    case loclab::ErrorCode::io: return loclab::exit_io;
    default: return loclab::exit_check_failed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for stochastic localization"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.set_version_flag("--version", loclab::kToolVersion);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment config and write its manifest");
  run->add_option("config", config_path, "JSON config (schema loclab.config/1)")->required();

  std::string check_name;
  auto* describe = app.add_subcommand("describe", "Print what a check verifies and its parameters");
  describe->add_option("check", check_name, "Check name ('list' for all)")->required();

  loclab::ThinShellOptions ts;
  std::string out_path, csv_path;
  bool no_chain = false;
  auto* thin = app.add_subcommand("thinshell", "Var|X|^2 and the spectral chain for one measure");
  thin->add_option("--family", ts.measure.family, "cube | gaussian | asymmetric | two-atom")->capture_default_str();
  thin->add_option("--dim", ts.measure.dim, "Dimension")->capture_default_str();
  thin->add_option("--resolution", ts.measure.resolution, "Quadrature nodes per axis")->capture_default_str();
  thin->add_option("--samples", ts.samples, "Monte Carlo samples for Var|X|^2 (0: exact only)")->capture_default_str();
  thin->add_option("--seed", ts.seed, "Master seed")->capture_default_str();
  thin->add_option("--t", ts.t, "Localization time for the chain")->capture_default_str();
  thin->add_option("--paths", ts.n_paths, "Localization paths for the chain")->capture_default_str();
  thin->add_option("--dt", ts.dt, "Time step")->capture_default_str();
  thin->add_flag("--no-chain", no_chain, "Skip the spectral chain");
  thin->add_option("--out", out_path, "JSON report path (default: stdout)");
  thin->add_option("--csv", csv_path, "Append a CSV row to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : loclab::exit_config;
  }

  try {
    if (*run) {
      loclab::ExperimentConfig cfg = loclab::load_config(config_path);
      loclab::apply_seed_override(cfg);
      const auto result = loclab::run_experiment(cfg, &std::cout);
      std::cout << (result.exit_code == 0 ? "all asserted checks passed" : "asserted check failed") << "; manifest "
                << (std::filesystem::path(cfg.outputs.dir) / cfg.outputs.manifest).string() << '\n';
      return result.exit_code;
    }
    if (*describe) {
      if (check_name == "list") {
        for (const auto& [name, info] : loclab::check_registry()) std::cout << name << '\n';
        return 0;
      }
      std::cout << loclab::describe_check(check_name);
      return 0;
    }
    if (*thin) {
      ts.chain = !no_chain;
      try {
        loclab::family_from_string(ts.measure.family);
      } catch (const loclab::Error& e) {
        return fail(loclab::ErrorCode::config_parse, e.what());
      }
      std::string row;
      const loclab::json report = loclab::thinshell_report(ts, &row);
      const std::string text = report.dump(2) + "\n";
      if (out_path.empty()) {
        std::cout << text;
      } else {
        loclab::write_file_atomic(out_path, text);
        std::cout << "var_norm_sq/n = " << report["var_norm_sq_over_n"].get<double>() << "; report " << out_path
                  << '\n';
      }
      if (!csv_path.empty()) {
        const bool fresh = !std::filesystem::exists(csv_path);
        std::ofstream csv(csv_path, std::ios::app);
        if (!csv) return fail(loclab::ErrorCode::io, "cannot open " + csv_path);
        if (fresh) csv << loclab::kThinShellCsvColumns << '\n';
        csv << row << '\n';
        if (!csv) return fail(loclab::ErrorCode::io, "write failed for " + csv_path);
      }
      const auto& chk = report["check"];
      return chk.is_null() || !chk["asserted"].get<bool>() || chk["pass"].get<bool>() ? 0 : loclab::exit_check_failed;
    }
  } catch (const loclab::Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail(loclab::ErrorCode::io, e.what());
  }
  return 0;
}
