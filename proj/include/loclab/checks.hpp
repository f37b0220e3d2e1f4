#pragma once

// Named checks with JSON parameters. Each runner turns its parameters, a
// measure description and a seed into one CheckReport; the experiment runner
// and the acceptance suite both go through this table.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "flow.hpp"
#include "localization.hpp"
#include "log_laplace.hpp"
#include "measure.hpp"
#include "random.hpp"
#include "report.hpp"
#include "serialize.hpp"
#include "spectral.hpp"
#include "thinshell.hpp"

namespace loclab {

struct MeasureSpec {
  std::string family = "cube";
  std::string repr = "product";  // product | atoms | file
  int dim = 2;
  int resolution = 256;
  Eigen::Index atoms = 1000;
  std::uint64_t seed = 0;
  std::string file;  // measure JSON when repr == "file"
};

inline json to_json(const MeasureSpec& m) {
  json j = {{"family", m.family}, {"repr", m.repr}, {"dim", m.dim}, {"resolution", m.resolution},
            {"atoms", m.atoms},   {"seed", m.seed}};
  if (!m.file.empty()) j["file"] = m.file;
  return j;
}

namespace detail {

// Rejects keys outside `allowed` so misspelled parameters do not pass silently.
inline void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::config_parse, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end(), ErrorCode::config_parse,
            "unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline MeasureSpec measure_spec_from_json(const json& j, MeasureSpec base = {}) {
  detail::check_keys(j, {"family", "repr", "dim", "resolution", "atoms", "seed", "file"}, "measure");
  base.family = detail::get_or(j, "family", base.family);
  base.repr = detail::get_or(j, "repr", base.repr);
  base.dim = detail::get_or(j, "dim", base.dim);
  base.resolution = detail::get_or(j, "resolution", base.resolution);
  base.atoms = detail::get_or(j, "atoms", base.atoms);
  base.seed = detail::get_or(j, "seed", base.seed);
  base.file = detail::get_or(j, "file", base.file);
  require(base.repr == "product" || base.repr == "atoms" || base.repr == "file", ErrorCode::config_parse,
          "measure repr must be product, atoms or file");
  require(base.dim >= 1 && base.resolution >= kMinResolution && base.atoms >= 1, ErrorCode::config_parse,
          "measure dim, resolution and atom count must be positive");
  try {
    family_from_string(base.family);
  } catch (const Error& e) {
    throw Error(ErrorCode::config_parse, e.what());
  }
  return base;
}

inline MeasureHandle build_measure(const MeasureSpec& m) {
  if (m.repr == "file") return measure_from_json(json::parse(read_file(m.file)));
  const Family f = family_from_string(m.family);
  if (f == Family::two_atom) {
    require(m.dim == 1, ErrorCode::invalid_argument, "two-atom family is one-dimensional");
    return make_two_atom();
  }
  if (f == Family::single_atom) return make_single_atom(VectorXd::Zero(m.dim));
  if (m.repr == "atoms") return make_atom_cloud(f, m.dim, m.atoms, m.seed);
  return make_product_family(f, m.dim, m.resolution);
}

struct Dynamics {
  double t_max = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 256;
};

struct CheckContext {
  json params;
  MeasureSpec measure;
  Dynamics dynamics;
  std::uint64_t seed = 0;

  double num(const char* key) const { return params.at(key).get<double>(); }
  std::size_t count(const char* key) const { return params.at(key).get<std::size_t>(); }
  /// Path count: the check parameter when set, else the experiment dynamics.
  std::size_t paths() const {
    return params.contains("n_paths") && !params["n_paths"].is_null() ? count("n_paths") : dynamics.n_paths;
  }
  double dt() const { return params.contains("dt") && !params["dt"].is_null() ? num("dt") : dynamics.dt; }
  double t_max() const {
    return params.contains("t_max") && !params["t_max"].is_null() ? num("t_max") : dynamics.t_max;
  }
  MeasureHandle measure_handle() const {
    const bool own = params.contains("measure") && !params["measure"].is_null();
    return build_measure(own ? measure_spec_from_json(params["measure"], measure) : measure);
  }
};

struct CheckInfo {
  std::string statement;  // the inequality or identity, in words and symbols
  json defaults;          // every accepted parameter with its default
  std::function<CheckReport(const CheckContext&)> run;
};

namespace detail {

inline std::vector<double> doubles(const json& j) { return j.get<std::vector<double>>(); }

inline VectorXd vector_param(const json& j, int n) {
  if (j.is_number()) return VectorXd::Constant(n, j.get<double>());
  const auto v = j.get<std::vector<double>>();
  require(static_cast<int>(v.size()) == n, ErrorCode::invalid_argument, "vector parameter has the wrong length");
  return Eigen::Map<const VectorXd>(v.data(), n);
}

inline MatrixXd random_matrix(int n, CounterRng& rng) {
  MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  return g;
}

inline CheckReport count_report(const std::string& name, const std::string& inputs, std::size_t violations,
                                json details) {
  CheckReport r = make_report(name, inputs, static_cast<double>(violations), 0.0);
  r.details = std::move(details);
  r.details["violations"] = violations;
  return r;
}

inline CheckReport run_product_integral_bound(const CheckContext& c) {
  const std::size_t cases = c.count("cases");
  const int n_max = c.params.at("n_max").get<int>();
  require(n_max >= 2, ErrorCode::invalid_argument, "n_max must be at least 2");
  std::vector<CheckReport> reports(cases);
  parallel_for(cases, [&](std::size_t s) {
    const int n = 2 + static_cast<int>(s % static_cast<std::size_t>(n_max - 1));
    reports[s] = check_product_integral_bound(random_rotating_path(n, c.t_max(), c.dt(), hash_combine(c.seed, s)));
  });
  std::size_t violations = 0;
  double worst = kInf;
  json failing = json::array();
  for (const auto& r : reports) {
    worst = std::min(worst, r.margin());
    if (!r.pass) {
      ++violations;
      failing.push_back(hex_digest(r.digest()));
    }
  }
  return count_report("product-integral-bound", "cases=" + std::to_string(cases) + "|seed=" + std::to_string(c.seed),
                      violations, {{"worst_margin", worst}, {"failing_inputs", failing}});
}

inline CheckReport run_eigen_recursion(const CheckContext& c) {
  const std::size_t cases = c.count("cases");
  const int n = c.params.at("n").get<int>();
  std::vector<CheckReport> reports(cases);
  parallel_for(cases, [&](std::size_t s) {
    const auto p = random_rotating_path(n, c.t_max(), c.dt(), hash_combine(c.seed, s));
    std::vector<std::vector<double>> mu, lambda;
    harvest_recursion_data(p, mu, lambda);
    reports[s] = check_eigen_recursion(mu, lambda, p.times);
  });
  std::size_t violations = 0;
  double worst = -kInf;
  for (const auto& r : reports) {
    violations += r.details["violations"].get<std::size_t>();
    worst = std::max(worst, r.details["worst_excess"].get<double>());
  }
  return count_report("eigen-recursion", "cases=" + std::to_string(cases) + "|seed=" + std::to_string(c.seed),
                      violations, {{"worst_excess", worst}});
}

inline CheckReport run_von_neumann(const CheckContext& c) {
  const std::size_t cases = c.count("cases");
  const int n_max = c.params.at("n_max").get<int>();
  std::vector<double> gaps(cases);
  parallel_for(cases, [&](std::size_t s) {
    CounterRng rng(hash_combine(c.seed, s));
    const int n = 1 + static_cast<int>(s % static_cast<std::size_t>(n_max));
    const MatrixXd a = random_matrix(n, rng), b = random_matrix(n, rng);
    gaps[s] = von_neumann_gap(0.5 * (a + a.transpose()), 0.5 * (b + b.transpose()));
  });
  const double worst = *std::min_element(gaps.begin(), gaps.end());
  CheckReport r = make_report("von-neumann", "cases=" + std::to_string(cases) + "|seed=" + std::to_string(c.seed),
                              -worst, 1e-10);
  r.details = {{"min_gap", worst}};
  return r;
}

// Central second difference with one Richardson step, O(eps^4).
inline double second_difference(const MatrixXd& a, const MatrixXd& h, const SpectralFunction& f, double eps) {
  auto d2 = [&](double e) {
    return (trace_function(a + e * h, f) - 2.0 * trace_function(a, f) + trace_function(a - e * h, f)) / (e * e);
  };
  return (4.0 * d2(0.5 * eps) - d2(eps)) / 3.0;
}

inline CheckReport run_daleckii_krein(const CheckContext& c) {
  const std::size_t cases = c.count("cases");
  const int n = c.params.at("n").get<int>();
  const double eps = c.num("eps");
  const double tol = c.num("rel_tol");
  std::vector<double> errs(cases);
  std::vector<int> redraws(cases, 0);
  parallel_for(cases, [&](std::size_t s) {
    CounterRng rng(hash_combine(c.seed, s));
    SpectralFunction f;
    std::vector<double> joints;
    if (s % 2 == 0) {
      std::vector<double> coeffs(5);
      for (double& v : coeffs) v = rng.normal();
      f = polynomial(coeffs);
    } else {
      const double ds[] = {1.5, 2.0, 4.0, 8.0};
      const double rs[] = {2.0, 2.5, 3.0};
      const double d = ds[(s / 2) % 4], r = rs[(s / 6) % 3];
      f = make_bump(d, r);
      joints = {r - 1.0 / d, r};
    }
    // The bump is only C^2 at its joints; keep the spectrum of A away from them
    // so the difference quotient is not straddling a jump in f'''.
    MatrixXd a;
    for (;;) {
      const MatrixXd g = random_matrix(n, rng);
      a = 4.0 * g * g.transpose() / n;
      const VectorXd l = sorted_eigen(a).values;
      bool clear = true;
      for (double x : joints)
        for (Eigen::Index i = 0; i < l.size(); ++i) clear = clear && std::abs(l(i) - x) > 0.02;
      if (clear) break;
      ++redraws[s];
    }
    MatrixXd h = random_matrix(n, rng);
    h = (0.5 * (h + h.transpose())).eval();
    h /= h.norm();
    const double dk = dk_quadratic_form(a, h, f);
    const double fd = second_difference(a, h, f, eps);
    errs[s] = std::abs(dk - fd) / std::max(std::abs(dk), 1e-12);
  });
  const double worst = *std::max_element(errs.begin(), errs.end());
  int total_redraws = 0;
  for (int r : redraws) total_redraws += r;
  CheckReport r = make_report("daleckii-krein", "cases=" + std::to_string(cases) + "|n=" + std::to_string(n) +
                                                    "|eps=" + std::to_string(eps) + "|seed=" + std::to_string(c.seed),
                              worst, tol);
  r.details = {{"worst_relative_error", worst}, {"joint_redraws", total_redraws}};
  return r;
}

inline CheckReport run_bump_contract(const CheckContext& c) {
  std::size_t violations = 0;
  double worst = 0.0;
  json rows = json::array();
  for (double d : doubles(c.params.at("D"))) {
    for (double r : doubles(c.params.at("r"))) {
      BumpProbe p;
      try {
        p = probe_bump(Bump(d, r));
      } catch (const Error&) {
        p.positive = false;
      }
      worst = std::max(worst, p.worst_curvature_ratio);
      if (!p.ok()) ++violations;
      rows.push_back({{"D", d},
                      {"r", r},
                      {"positive", p.positive},
                      {"increasing", p.increasing},
                      {"shape", p.shape},
                      {"curvature_ratio", p.worst_curvature_ratio}});
    }
  }
  return count_report("bump-contract", c.params.dump(), violations, {{"worst_curvature_ratio", worst}, {"grid", rows}});
}

inline CheckReport run_third_moment_bound(const CheckContext& c) {
  const MeasureHandle h = c.measure_handle();
  const int n = h.dim();
  std::size_t violations = 0, cases = 0;
  double worst = -kInf;
  CounterRng rng(c.seed);
  std::vector<VectorXd> thetas{VectorXd::Zero(n)};
  for (std::size_t s = 0; s < c.count("random_tilts"); ++s) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    thetas.push_back(v);
  }
  for (double t : doubles(c.params.at("t"))) {
    for (const auto& theta : thetas) {
      const VectorXd l = sorted_eigenvalues(h, tilt_summary(h, Tilt{t, theta}).cov);
      // Thresholds below, between and above the spectrum.
      std::vector<double> us{0.5 * l(n - 1), l(n - 1), l(n / 2), l(0), 2.0 * l(0)};
      for (double u : us) {
        for (int k = 1; k <= n; ++k) {
          const CheckReport r = third_moment_check(h, t, theta, u, k);
          ++cases;
          worst = std::max(worst, r.lhs - r.rhs);
          if (!r.pass) ++violations;
        }
      }
    }
  }
  return count_report("third-moment-bound", h.id() + "|" + c.params.dump() + "|seed=" + std::to_string(c.seed),
                      violations, {{"cases", cases}, {"worst_excess", worst}});
}

inline CheckReport run_coupling_law(const CheckContext& c) {
  const MeasureHandle h = c.measure_handle();
  EnsembleOptions o;
  o.dt = c.dt();
  return verify_coupling_law(h, vector_param(c.params.at("x"), h.dim()), doubles(c.params.at("checkpoints")), c.paths(),
                             c.seed, o);
}

inline std::vector<std::pair<double, double>> time_pairs(const json& j) {
  std::vector<std::pair<double, double>> out;
  for (const auto& p : j) {
    require(p.is_array() && p.size() == 2, ErrorCode::config_parse, "time pairs are [s, t] arrays");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

inline CheckReport run_martingale(const CheckContext& c, MartingaleQuantity q) {
  const MeasureHandle h = c.measure_handle();
  EnsembleOptions o;
  o.dt = c.dt();
  std::optional<VectorXd> xi;
  if (q == MartingaleQuantity::s_map) xi = vector_param(c.params.at("xi"), h.dim());
  return martingale_residuals(h, q, xi, time_pairs(c.params.at("t_pairs")), c.paths(), c.seed, o);
}

inline CheckReport run_flow_structure(const CheckContext& c) {
  const MeasureHandle h = c.measure_handle();
  const int n = h.dim();
  const std::size_t pairs = c.count("pairs");
  const auto grid = doubles(c.params.at("t_grid"));
  const double t_max = *std::max_element(grid.begin(), grid.end());
  FlowStructureOptions o;
  o.semigroup_tol = c.num("semigroup_tol");
  std::vector<FlowStructureReport> reps(pairs);
  parallel_for(pairs, [&](std::size_t s) {
    CounterRng rng(hash_combine(c.seed, s));
    std::vector<VectorXd> pts(2, VectorXd(n));
    for (auto& p : pts)
      for (int i = 0; i < n; ++i) p(i) = rng.normal();
    const auto path = sample_brownian_path(n, t_max, c.dt(), path_seed(c.seed, s));
    reps[s] = check_flow_structure(h, path, pts, grid, o);
  });
  json props = json::object();
  std::size_t violations = 0;
  for (const char* name : {"expansion", "lipschitz", "ratio-monotone", "semigroup"}) {
    std::size_t v = 0;
    double worst = -kInf;
    bool asserted = true;
    for (const auto& r : reps) {
      const auto& p = r.property(name);
      v += p.violations;
      worst = std::max(worst, p.worst);
      asserted = p.asserted;
    }
    if (asserted) violations += v;
    props[name] = {{"violations", v}, {"worst", worst}, {"asserted", asserted}};
  }
  return count_report("flow-structure", h.id() + "|" + c.params.dump() + "|seed=" + std::to_string(c.seed),
                      violations, {{"properties", props}});
}

inline CheckReport run_covariance_bound(const CheckContext& c) {
  return check_covariance_bound(c.measure_handle(), c.t_max(), c.dt(), c.paths(), c.seed, c.num("t_min"),
                                c.num("rel_tol"));
}

/// The SDE residual at dt and at dt/2 (same path, bridge-refined); both must
/// pass and the mean-square residual ratio must shrink by a factor in `halving`.
inline CheckReport run_cov_sde(const CheckContext& c) {
  const MeasureHandle h = c.measure_handle();
  const double t0 = c.num("t0"), t1 = c.num("t1");
  const std::size_t paths = c.paths();
  const auto band = doubles(c.params.at("halving"));
  std::vector<CheckReport> coarse(paths), fine(paths);
  parallel_for(paths, [&](std::size_t p) {
    const auto path = sample_brownian_path(h.dim(), t1, c.dt(), path_seed(c.seed, p));
    const auto refined = bisect_brownian_path(path, hash_combine(path_seed(c.seed, p), 2));
    coarse[p] = verify_cov_sde(h, run_localization(h, path), path, t0, t1);
    fine[p] = verify_cov_sde(h, run_localization(h, refined), refined, t0, t1);
  });
  double res_c = 0.0, sto_c = 0.0, res_f = 0.0, sto_f = 0.0, worst = -kInf;
  bool asserted = true;
  for (std::size_t p = 0; p < paths; ++p) {
    res_c += std::pow(coarse[p].details["residual_l2"].get<double>(), 2);
    sto_c += std::pow(coarse[p].details["stochastic_l2"].get<double>(), 2);
    res_f += std::pow(fine[p].details["residual_l2"].get<double>(), 2);
    sto_f += std::pow(fine[p].details["stochastic_l2"].get<double>(), 2);
    worst = std::max({worst, coarse[p].lhs / coarse[p].rhs, fine[p].lhs / fine[p].rhs});
    asserted = asserted && coarse[p].asserted;
  }
  const double ratio_c = sto_c > 0.0 ? res_c / sto_c : 0.0;
  const double ratio_f = sto_f > 0.0 ? res_f / sto_f : 0.0;
  const double factor = ratio_c > 0.0 ? ratio_f / ratio_c : 0.0;
  const bool halves = ratio_c == 0.0 || (factor >= band[0] && factor <= band[1]);
  std::ostringstream in;
  in << h.id() << "|t0=" << t0 << "|t1=" << t1 << "|dt=" << c.dt() << "|paths=" << paths << "|seed=" << c.seed;
  // lhs <= 1 iff every residual is under its threshold; the halving band is folded in.
  CheckReport r = make_report("cov-sde", in.str(), halves ? worst : std::max(worst, 2.0), 1.0);
  r.asserted = asserted;
  r.details = {{"worst_threshold_fraction", worst}, {"ratio_dt", ratio_c}, {"ratio_dt_half", ratio_f},
               {"halving_factor", factor},         {"halving_band", band},  {"halves", halves}};
  return r;
}

inline CheckReport run_stopping_tails(const CheckContext& c) {
  const MeasureHandle h = c.measure_handle();
  const auto ks = c.params.at("k").get<std::vector<int>>();
  auto tails = estimate_stopping_tails(h, ks, doubles(c.params.at("t")), c.paths(), c.seed, c.dt());
  return tails.report;
}

inline CheckReport run_wasserstein_coupling(const CheckContext& c) {
  CouplingOptions o;
  o.dt = c.dt();
  o.p = c.params.at("p").get<int>();
  return verify_coupling_wasserstein_bound(c.measure_handle(), c.num("x"), c.num("y"), c.num("t"), c.paths(), c.seed,
                                           o);
}

inline CheckReport run_infinitesimal(const CheckContext& c) {
  InfinitesimalOptions o;
  o.dt = c.dt();
  o.slack = c.num("slack");
  return infinitesimal_ratio(c.measure_handle(), c.num("t"), doubles(c.params.at("eps")), c.paths(), c.seed, o);
}

inline CheckReport run_thinshell_chain(const CheckContext& c) {
  ChainOptions o;
  o.dt = c.dt();
  o.bootstrap = c.count("bootstrap");
  const ThinShellReport tr = full_chain_report(c.measure_handle(), c.num("t"), c.paths(), c.seed, o);
  CheckReport r = tr.report;
  r.details["thinshell"] = to_json(tr);
  return r;
}

/// Var|X|^2 / n against a target interval; exact for product measures, Monte
/// Carlo otherwise (or when asked).
inline CheckReport run_thinshell_variance(const CheckContext& c) {
  const MeasureHandle h = c.measure_handle();
  const std::string method = c.params.at("method").get<std::string>();
  require(method == "exact" || method == "monte-carlo", ErrorCode::config_parse,
          "method must be exact or monte-carlo");
  const VarianceEstimate v = method == "exact" ? variance_of_norm_sq_exact(h)
                                               : variance_of_norm_sq_mc(h, c.count("samples"), c.seed);
  const double per_n = v.value / h.dim();
  const auto band = doubles(c.params.at("band"));
  std::ostringstream in;
  in << h.id() << "|method=" << method << "|samples=" << v.samples << "|seed=" << c.seed;
  // Two-sided band folded into one inequality: distance outside the band <= 0.
  const double outside = std::max(band[0] - per_n, per_n - band[1]);
  CheckReport r = make_report("thinshell-variance", in.str(), outside, 0.0);
  r.details = {{"var_norm_sq", v.value}, {"var_norm_sq_over_n", per_n}, {"se", v.se},
               {"samples", v.samples},   {"band", band}};
  return r;
}

}  // namespace detail

inline const std::map<std::string, CheckInfo>& check_registry() {
  using namespace detail;
  static const std::map<std::string, CheckInfo> registry = [] {
    std::map<std::string, CheckInfo> m;
    m["product-integral-bound"] = {
        "For M' = A(t) M, M_0 = Id, with A(t) symmetric PSD: |M_t|_HS^2 <= sum_i exp(2 int_0^t lambda_i(A_s) ds), "
        "on random non-commuting rotating paths.",
        {{"cases", 1000}, {"n_max", 8}, {"t_max", 1.0}, {"dt", 1e-3}},
        run_product_integral_bound};
    m["eigen-recursion"] = {
        "If sum_{i<=k} mu_i(t) <= sum_{i<=k} [1 + 2 int_0^t mu_i lambda_i] for all k, t, then "
        "sum_{i<=k} mu_i(t) <= sum_{i<=k} exp(2 int_0^t lambda_i); data harvested from product integrals.",
        {{"cases", 20}, {"n", 3}, {"t_max", 1.0}, {"dt", 1e-4}},
        run_eigen_recursion};
    m["von-neumann"] = {"Tr[AB] <= sum_i a_i b_i for symmetric A, B with spectra sorted descending.",
                        {{"cases", 10000}, {"n_max", 6}},
                        run_von_neumann};
    m["daleckii-krein"] = {
        "d^2/de^2 Tr f(A + eH) at e = 0 equals sum_ij f'[l_i, l_j] <H u_i, u_j>^2 (divided differences of f'), "
        "for polynomial and bump f; compared with a Richardson central difference.",
        {{"cases", 200}, {"n", 4}, {"eps", 1e-3}, {"rel_tol", 1e-4}},
        run_daleckii_krein};
    m["bump-contract"] = {
        "The bump f_{D,r} is positive, increasing, C^2, equals e^{D(x-r)} left of r - 1/D and x^2 right of r, "
        "and satisfies f'' <= (12 D)^2 f.",
        {{"D", {1.5, 2.0, 4.0, 8.0}}, {"r", {2.0, 2.5, 3.0}}},
        run_bump_contract};
    m["third-moment-bound"] = {
        "For X ~ mu_{t,theta} with covariance eigenbasis (l_i, v_i): sum_{ij} E[X_i X_j X_k]^2 1{max(l_i, l_j) <= u} "
        "<= 4 t^{-1/2} u^{3/2} l_k.",
        {{"measure", {{"family", "asymmetric"}, {"dim", 4}, {"resolution", 512}}},
         {"t", {0.5, 1.0, 2.0}},
         {"random_tilts", 3}},
        run_third_moment_bound};
    m["coupling-law"] = {
        "Parallel coupling: theta_t = G_{t,B}(x) has the law of x + B_t + t X with X ~ mu_x independent of B; "
        "means and covariances within 4 SE, projected KS below 4/sqrt(paths).",
        {{"x", 0.0}, {"checkpoints", {0.5, 1.0, 2.0}}, {"n_paths", nullptr}, {"dt", nullptr}, {"measure", nullptr}},
        run_coupling_law};
    m["martingale-a"] = {"The barycenter a_t = a(t, theta_t) is a martingale: increments have zero mean and are "
                         "uncorrelated with the past, within 4 SE.",
                         {{"t_pairs", {{0.25, 0.5}, {0.5, 1.0}}}, {"n_paths", nullptr}, {"dt", nullptr},
                          {"measure", nullptr}},
                         [](const CheckContext& c) { return run_martingale(c, MartingaleQuantity::barycenter); }};
    m["martingale-S"] = {"The transported barycenter S_t(xi) is a martingale in t for fixed xi, within 4 SE.",
                         {{"t_pairs", {{0.25, 0.5}, {0.5, 1.0}}},
                          {"xi", 0.1},
                          {"n_paths", nullptr},
                          {"dt", nullptr},
                          {"measure", nullptr}},
                         [](const CheckContext& c) { return run_martingale(c, MartingaleQuantity::s_map); }};
    m["flow-structure"] = {
        "Along a shared path: |theta^x - theta^y| >= |x - y|, <= e^{R^2 t}|x - y|, |theta^x - theta^y|/t "
        "non-increasing (log-concave measures), and the flow composes as a semigroup.",
        {{"pairs", 50}, {"t_grid", {0.25, 0.5, 1.0}}, {"semigroup_tol", 1e-5}, {"dt", nullptr}, {"measure", nullptr}},
        run_flow_structure};
    m["covariance-bound"] = {"For log-concave mu the localized covariance satisfies A_t <= Id / t: lambda_1(t) <= "
                             "(1 + tol)/t for t >= t_min on every path.",
                             {{"t_min", 0.05}, {"rel_tol", 1e-3}, {"t_max", nullptr}, {"n_paths", nullptr},
                              {"dt", nullptr}, {"measure", nullptr}},
                             run_covariance_bound};
    m["cov-sde"] = {
        "dA_t = sum_k H_k dB_k - A_t^2 dt with H_k the third-moment fibers: finite-difference residual small "
        "against the stochastic term, and its mean-square ratio halves when dt halves.",
        {{"t0", 0.1}, {"t1", 0.2}, {"dt", 1e-4}, {"n_paths", 4}, {"halving", {0.35, 0.65}},
         {"measure", {{"family", "two-atom"}, {"dim", 1}, {"repr", "atoms"}}}},
        run_cov_sde};
    m["stopping-tails"] = {
        "Frequencies of tau_k = inf{t : lambda_k(t) >= 2}: monotone in t, ordered in k, and P(tau_1 <= t) <= 0.01 "
        "for t <= 0.2 on product measures.",
        {{"k", {1, 2}}, {"t", {0.05, 0.1, 0.2}}, {"n_paths", nullptr}, {"dt", nullptr}, {"measure", nullptr}},
        run_stopping_tails};
    m["wasserstein-coupling"] = {
        "W_p(mu_x, mu_y) <= (E|theta_t^x - theta_t^y|^p)^{1/p} / t for a 1D measure, exact W_p against the "
        "Monte Carlo right side plus 3 SE.",
        {{"x", 0.0}, {"y", 0.5}, {"t", 1.0}, {"p", 2}, {"n_paths", nullptr}, {"dt", 1e-2},
         {"measure", {{"family", "truncated-gaussian"}, {"dim", 1}, {"resolution", 512}}}},
        run_wasserstein_coupling};
    m["infinitesimal-sandwich"] = {
        "|x|_{H^-1(mu)} <= lim W_2(mu, mu_eps)/eps <= (E M_t^2)^{1/2}/t for a centered 1D measure, with M_t "
        "the derivative of the flow; 5% slack and 3 SE.",
        {{"t", 1.0}, {"eps", {1e-1, 1e-2, 1e-3}}, {"slack", 0.05}, {"n_paths", nullptr}, {"dt", 1e-2},
         {"measure", {{"family", "truncated-gaussian"}, {"dim", 1}, {"resolution", 512}}}},
        run_infinitesimal};
    m["thinshell-chain"] = {
        "Var|X|^2 <= 4 sum_i |x_i|^2_{H^-1} and 4 sum_i |x_i|^2_{H^-1} <= 4 (1/t^2) E sum_i exp(2 int_0^t "
        "lambda_i) (+4 SE) for isotropic product measures.",
        {{"t", 1.0}, {"bootstrap", 1000}, {"n_paths", nullptr}, {"dt", nullptr}, {"measure", nullptr}},
        run_thinshell_chain};
    m["thinshell-variance"] = {"Var|X|^2 / n lies in a target band (4/5 for the cube, 2 for the Gaussian).",
                               {{"method", "exact"}, {"samples", 200000}, {"band", {0.0, 1e300}}, {"measure", nullptr}},
                               run_thinshell_variance};
    return m;
  }();
  return registry;
}

inline bool check_exists(const std::string& name) { return check_registry().count(name) > 0; }

inline std::string describe_check(const std::string& name) {
  const auto& reg = check_registry();
  const auto it = reg.find(name);
  require(it != reg.end(), ErrorCode::config_parse, "unknown check '" + name + "'");
  std::string out = name + "\n  " + it->second.statement + "\n  parameters (null = taken from the experiment):\n";
  for (auto p = it->second.defaults.begin(); p != it->second.defaults.end(); ++p) {
    out += "    " + p.key() + " = " + p.value().dump() + "\n";
  }
  return out;
}

/// Merges user parameters over the defaults; unknown keys are a config error.
inline json merged_params(const std::string& name, const json& user) {
  const auto& reg = check_registry();
  const auto it = reg.find(name);
  require(it != reg.end(), ErrorCode::config_parse, "unknown check '" + name + "'");
  json out = it->second.defaults;
  if (user.is_null()) return out;
  require(user.is_object(), ErrorCode::config_parse, "check parameters must be an object");
  for (auto p = user.begin(); p != user.end(); ++p) {
    require(out.contains(p.key()), ErrorCode::config_parse, "unknown parameter '" + p.key() + "' for " + name);
    out[p.key()] = p.value();
  }
  return out;
}

inline CheckReport run_check(const std::string& name, const CheckContext& ctx) {
  const auto& reg = check_registry();
  const auto it = reg.find(name);
  require(it != reg.end(), ErrorCode::config_parse, "unknown check '" + name + "'");
  try {
    return it->second.run(ctx);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_parse, "bad parameters for " + name + ": " + e.what());
  }
}

}  // namespace loclab
