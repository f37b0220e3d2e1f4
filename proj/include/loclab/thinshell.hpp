#pragma once

// Thin-shell quantities: Var|X|^2, one-dimensional H^-1 norms and W_p
// distances, the parallel-coupling Wasserstein bound, its infinitesimal
// version, and the chain Var|X|^2 <= 4 sum_i |x_i|^2_{H^-1} <= (1/t^2) E sum_i exp(2 int lambda_i).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "flow.hpp"
#include "localization.hpp"
#include "log_laplace.hpp"
#include "measure.hpp"
#include "report.hpp"
#include "stats.hpp"

namespace loclab {

// --- Var |X|^2 ----------------------------------------------------------------

struct VarianceEstimate {
  double value = 0.0;
  double se = 0.0;
  std::size_t samples = 0;  // 0 for the exact method
};

/// Product measures only: sum_i (E x_i^4 - (E x_i^2)^2).
inline VarianceEstimate variance_of_norm_sq_exact(const MeasureHandle& h) {
  require(h.is_product(), ErrorCode::invalid_argument, "exact Var|X|^2 needs a product measure");
  CompensatedSum s;
  for (const auto& a : h.product().axes) {
    const double m2 = axis_moment(a, 2);
    s.add(axis_moment(a, 4) - m2 * m2);
  }
  return {s.value(), 0.0, 0};
}

/// Sample variance of |X|^2 over `samples` draws. The SE is the delta-method
/// value sqrt((m4 - s^4) / N) with m4 the central fourth moment.
inline VarianceEstimate variance_of_norm_sq_mc(const MeasureHandle& h, std::size_t samples, std::uint64_t seed) {
  require(samples >= 2, ErrorCode::invalid_argument, "need at least two samples");
  std::vector<double> r2(samples);
  parallel_for(samples, [&](std::size_t i) {
    CounterRng rng(hash_combine(seed, i));
    r2[i] = sample_point(h, rng).squaredNorm();
  });
  const MeanSe m = mean_se(r2);
  CompensatedSum s2, s4;
  for (double v : r2) {
    const double d = (v - m.mean) * (v - m.mean);
    s2.add(d);
    s4.add(d * d);
  }
  const double n = static_cast<double>(samples);
  const double var = s2.value() / (n - 1.0);
  const double m4 = s4.value() / n;
  return {var, std::sqrt(std::max(0.0, m4 - var * var) / n), samples};
}

// --- one-dimensional H^-1 -----------------------------------------------------

inline constexpr double kDensityFloor = 1e-12;

/// int h^2 / rho over the axis interval, where h(x) = int_{-inf}^x f dnu is the
/// cumulative trapezoid of f rho on the grid; this h is the exact 1D dual
/// optimizer, so for f(x) = x the result is |x|^2_{H^-1(nu)}. Requires
/// int f dnu = 0. A density below 1e-12 is rejected wherever h is not itself
/// negligible there (Gaussian tails, where both vanish together, are fine).
inline double h1neg_norm_1d(const QuadAxis& axis, const std::function<double(double)>& f) {
  const Eigen::Index m = axis.size();
  VectorXd fx(m);
  for (Eigen::Index k = 0; k < m; ++k) fx(k) = f(axis.x(k));
  const double integral = axis.weight.dot(fx);
  require(std::abs(integral) <= 1e-10, ErrorCode::invalid_argument, "test function must integrate to zero");
  const double dx = axis.spacing();
  VectorXd h(m);
  h(0) = 0.0;
  for (Eigen::Index k = 1; k < m; ++k) {
    h(k) = h(k - 1) + 0.5 * dx * (fx(k - 1) * axis.density(k - 1) + fx(k) * axis.density(k));
  }
  const VectorXd quad = extended_simpson_weights(m, dx);
  CompensatedSum s;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (axis.density(k) < kDensityFloor) {
      require(std::abs(h(k)) <= kDensityFloor, ErrorCode::density_vanishing,
              "density vanishes inside the interval at x=" + std::to_string(axis.x(k)));
      continue;
    }
    s.add(quad(k) * h(k) * h(k) / axis.density(k));
  }
  return s.value();
}

/// |x - E x|^2_{H^-1} of one axis.
inline double coordinate_h1neg(const QuadAxis& axis) {
  const double mean = axis_moment(axis, 1);
  return h1neg_norm_1d(axis, [mean](double x) { return x - mean; });
}

// --- one-dimensional laws and W_p ---------------------------------------------

/// A law on the line with a piecewise-linear quantile function. Atoms give a
/// step quantile; a quadrature axis gives the piecewise-linear CDF of its node
/// densities, whose inverse is again piecewise linear.
struct Law1D {
  std::vector<double> u;   // cumulative probabilities, increasing, u[0] = 0, back = 1
  std::vector<double> q0;  // quantile just right of u[k]
  std::vector<double> q1;  // quantile just left of u[k+1]
};

inline Law1D law_from_atoms(std::vector<double> values, std::vector<double> weights) {
  require(values.size() == weights.size() && !values.empty(), ErrorCode::invalid_argument, "atoms and weights differ");
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0, ErrorCode::invalid_argument, "weights must be non-negative");
    total += w;
  }
  require(total > 0.0, ErrorCode::invalid_argument, "weights must not all vanish");
  Law1D law;
  double acc = 0.0;
  law.u.push_back(0.0);
  for (std::size_t i : order) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i] / total;
    law.u.push_back(acc);
    law.q0.push_back(values[i]);
    law.q1.push_back(values[i]);
  }
  law.u.back() = 1.0;
  return law;
}

inline Law1D law_from_axis(const QuadAxis& axis) {
  const Eigen::Index m = axis.size();
  const double dx = axis.spacing();
  std::vector<double> cdf(m, 0.0);
  for (Eigen::Index k = 1; k < m; ++k) cdf[k] = cdf[k - 1] + 0.5 * dx * (axis.density(k - 1) + axis.density(k));
  const double total = cdf.back();
  Law1D law;
  law.u.push_back(0.0);
  for (Eigen::Index k = 1; k < m; ++k) {
    const double next = k + 1 == m ? 1.0 : cdf[k] / total;
    if (next <= law.u.back()) continue;
    law.q0.push_back(axis.x(k - 1));
    law.q1.push_back(axis.x(k));
    law.u.push_back(next);
  }
  return law;
}

inline Law1D law_from_measure(const MeasureHandle& h) {
  require(h.dim() == 1, ErrorCode::invalid_argument, "one-dimensional measure expected");
  if (h.is_product()) return law_from_axis(h.product().axes[0]);
  const auto& m = h.atomic();
  return law_from_atoms(std::vector<double>(m.atoms.data(), m.atoms.data() + m.size()),
                        std::vector<double>(m.weights.data(), m.weights.data() + m.size()));
}

namespace detail {

// Quantile of piece k at u, linear between its endpoints.
inline double piece_value(const Law1D& l, std::size_t k, double u) {
  const double lo = l.u[k], hi = l.u[k + 1];
  const double s = hi > lo ? (u - lo) / (hi - lo) : 0.0;
  return l.q0[k] + s * (l.q1[k] - l.q0[k]);
}

// int_0^1 |d0 + (d1 - d0) s|^p ds times width, exact for p in {1, 2}.
inline double linear_pow_integral(double d0, double d1, double width, int p) {
  if (p == 2) return width * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
  if (d0 * d1 >= 0.0) return width * 0.5 * std::abs(d0 + d1);
  return width * 0.5 * (d0 * d0 + d1 * d1) / std::abs(d0 - d1);
}

}  // namespace detail

/// Exact integral of |Q_a - Q_b|^p over [0, 1].
inline double wasserstein_pow(const Law1D& a, const Law1D& b, int p) {
  require(p == 1 || p == 2, ErrorCode::invalid_argument, "W_p is implemented for p in {1, 2}");
  std::size_t i = 0, j = 0;
  double u = 0.0;
  CompensatedSum acc;
  while (i + 1 < a.u.size() && j + 1 < b.u.size()) {
    const double next = std::min(a.u[i + 1], b.u[j + 1]);
    if (next > u) {
      const double d0 = detail::piece_value(a, i, u) - detail::piece_value(b, j, u);
      const double d1 = detail::piece_value(a, i, next) - detail::piece_value(b, j, next);
      acc.add(detail::linear_pow_integral(d0, d1, next - u, p));
      u = next;
    }
    if (a.u[i + 1] <= next) ++i;
    if (b.u[j + 1] <= next) ++j;
  }
  return std::max(0.0, acc.value());
}

inline double wasserstein_1d(const Law1D& a, const Law1D& b, int p) {
  const double v = wasserstein_pow(a, b, p);
  return p == 2 ? std::sqrt(v) : v;
}

/// mu tilted by exp(x * value), one-dimensional.
inline Law1D exp_tilted_law(const MeasureHandle& h, double x) {
  return law_from_measure(tilted_measure(h, Tilt{0.0, VectorXd::Constant(1, x)}));
}

// --- parallel-coupling Wasserstein bound --------------------------------------

struct CouplingOptions {
  double dt = 1e-2;
  int p = 2;
};

/// W_p(mu_x, mu_y) <= (E |theta_t^x - theta_t^y|^p)^{1/p} / t for a 1D measure,
/// with the expectation over shared Brownian paths. Passes when the exact
/// left side is at most the estimate plus 3 SE.
inline CheckReport verify_coupling_wasserstein_bound(const MeasureHandle& h, double x, double y, double t,
                                                     std::size_t n_paths, std::uint64_t seed,
                                                     const CouplingOptions& opts = {}) {
  require(h.dim() == 1, ErrorCode::invalid_argument, "coupling bound is checked in one dimension");
  require(t > 0.0 && n_paths >= 2, ErrorCode::invalid_argument, "need t > 0 and at least two paths");
  const double w = wasserstein_1d(exp_tilted_law(h, x), exp_tilted_law(h, y), opts.p);
  std::vector<double> gaps(n_paths);
  parallel_for(n_paths, [&](std::size_t k) {
    const auto path = sample_brownian_path(1, t, std::min(opts.dt, t), path_seed(seed, k));
    const double a = flow_endpoint(h, VectorXd::Constant(1, x), path, path.steps())(0);
    const double b = flow_endpoint(h, VectorXd::Constant(1, y), path, path.steps())(0);
    gaps[k] = std::pow(std::abs(a - b), opts.p);
  });
  const MeanSe m = mean_se(gaps);
  const double est = std::pow(m.mean, 1.0 / opts.p) / t;
  // Delta method for the p-th root of the mean.
  const double se = m.mean > 0.0 ? std::pow(m.mean, 1.0 / opts.p - 1.0) * m.se / (opts.p * t) : 0.0;
  std::ostringstream in;
  in << h.id() << "|x=" << x << "|y=" << y << "|t=" << t << "|paths=" << n_paths << "|seed=" << seed
     << "|dt=" << opts.dt << "|p=" << opts.p;
  CheckReport r = make_report("wasserstein-coupling", in.str(), w, est + 3.0 * se);
  r.details = {{"wasserstein", w}, {"estimate", est}, {"se", se}, {"paths", n_paths}};
  return r;
}

// --- infinitesimal version ----------------------------------------------------

struct InfinitesimalOptions {
  double dt = 1e-2;
  double slack = 0.05;
};

/// Sandwich at the smallest epsilon:
///   |x|_{H^-1} <= W2(mu, mu_eps)/eps (1 + slack) <= (E M_t^2)^{1/2}/t (1 + slack) + 3 SE.
/// The W2 ratio for every epsilon is recorded; its monotonicity in epsilon is
/// data, not an assertion.
inline CheckReport infinitesimal_ratio(const MeasureHandle& h, double t, std::vector<double> eps_list,
                                       std::size_t n_paths, std::uint64_t seed, const InfinitesimalOptions& opts = {}) {
  require(h.dim() == 1 && h.is_product(), ErrorCode::invalid_argument, "infinitesimal ratio needs a 1D quadrature measure");
  require(!eps_list.empty() && t > 0.0 && n_paths >= 2, ErrorCode::invalid_argument, "bad infinitesimal inputs");
  const QuadAxis& axis = h.product().axes[0];
  require(std::abs(axis_moment(axis, 1)) <= 1e-8, ErrorCode::invalid_argument, "measure must be centered");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());

  const Law1D base = law_from_axis(axis);
  json ratios = json::array();
  double smallest_ratio = 0.0;
  bool monotone = true;
  double prev = kInf;
  for (double eps : eps_list) {
    require(eps > 0.0, ErrorCode::invalid_argument, "epsilon must be positive");
    const double ratio = wasserstein_1d(base, exp_tilted_law(h, eps), 2) / eps;
    ratios.push_back({{"eps", eps}, {"ratio", ratio}});
    monotone = monotone && ratio <= prev;
    prev = ratio;
    smallest_ratio = ratio;
  }

  std::vector<double> m2(n_paths);
  parallel_for(n_paths, [&](std::size_t k) {
    const auto path = sample_brownian_path(1, t, std::min(opts.dt, t), path_seed(seed, k));
    const auto traj = solve_flow(h, VectorXd::Zero(1), path, true);
    m2[k] = traj.deriv.back().squaredNorm();
  });
  const MeanSe m = mean_se(m2);
  const double est = std::sqrt(m.mean) / t;
  const double se = m.mean > 0.0 ? m.se / (2.0 * std::sqrt(m.mean) * t) : 0.0;
  const double h1 = std::sqrt(coordinate_h1neg(axis));

  const double mid = smallest_ratio * (1.0 + opts.slack);
  const double top = est * (1.0 + opts.slack) + 3.0 * se;
  std::ostringstream in;
  in << h.id() << "|t=" << t << "|eps=" << grid_text(eps_list) << "|paths=" << n_paths << "|seed=" << seed
     << "|dt=" << opts.dt;
  // Normalized so that both inequalities hold iff lhs <= 1.
  CheckReport r = make_report("infinitesimal-sandwich", in.str(), std::max(h1 / mid, mid / top), 1.0);
  r.details = {{"h1neg_norm", h1},  {"w2_ratio", smallest_ratio}, {"deriv_estimate", est}, {"deriv_se", se},
               {"ratios", ratios},   {"ratio_monotone_in_eps", monotone}};
  return r;
}

// --- the full chain -----------------------------------------------------------

struct ThinShellReport {
  int n = 0;
  std::string family;
  double var_norm_sq = 0.0;
  double var_se = 0.0;
  std::vector<double> per_coordinate_h1neg;
  double chain_middle = 0.0;
  double chain_right = 0.0;
  double chain_right_se = 0.0;
  double t_used = 1.0;
  std::size_t n_paths = 0;
  CheckReport report;
};

struct ChainOptions {
  double dt = 1e-3;
  std::size_t bootstrap = 1000;
  double var_tol = 1e-6;
};

/// chain_right = (1/t^2) times the path average of sum_i exp(2 int_0^t lambda_i).
inline MeanSe chain_right_estimate(const MeasureHandle& h, double t, std::size_t n_paths, std::uint64_t seed,
                                   const ChainOptions& opts, std::vector<double>* per_path = nullptr) {
  std::vector<double> g(n_paths);
  parallel_for(n_paths, [&](std::size_t k) {
    const auto tr = run_localization(h, t, opts.dt, path_seed(seed, k));
    g[k] = spectral_growth(tr, tr.times.size() - 1) / (t * t);
  });
  MeanSe m = mean_se(g);
  m.se = bootstrap_se(g, opts.bootstrap, hash_combine(seed, 0xb007));
  if (per_path) *per_path = std::move(g);
  return m;
}

/// Var|X|^2 <= 4 sum_i |x_i|^2_{H^-1} <= 4 (chain_right + 4 SE) on an isotropic
/// product quadrature measure.
inline ThinShellReport full_chain_report(const MeasureHandle& h, double t, std::size_t n_paths, std::uint64_t seed,
                                         const ChainOptions& opts = {}) {
  require(h.is_product(), ErrorCode::invalid_argument, "the chain is assembled for product measures");
  require(t > 0.0 && n_paths >= 2, ErrorCode::invalid_argument, "need t > 0 and at least two paths");
  ThinShellReport out;
  out.n = h.dim();
  out.family = to_string(h.family);
  out.t_used = t;
  out.n_paths = n_paths;
  out.var_norm_sq = variance_of_norm_sq_exact(h).value;
  double sum = 0.0;
  for (const auto& a : h.product().axes) {
    out.per_coordinate_h1neg.push_back(coordinate_h1neg(a));
    sum += out.per_coordinate_h1neg.back();
  }
  out.chain_middle = 4.0 * sum;
  const MeanSe right = chain_right_estimate(h, t, n_paths, seed, opts);
  out.chain_right = right.mean;
  out.chain_right_se = right.se;

  const double first = out.var_norm_sq / (out.chain_middle * (1.0 + opts.var_tol));
  const double second = out.chain_middle / (4.0 * (out.chain_right + kSeThreshold * out.chain_right_se));
  std::ostringstream in;
  in << h.id() << "|t=" << t << "|paths=" << n_paths << "|seed=" << seed << "|dt=" << opts.dt;
  out.report = make_report("thinshell-chain", in.str(), std::max(first, second), 1.0);
  out.report.details = {{"var_over_middle", first}, {"middle_over_right", second}, {"chain_right_over_n", out.chain_right / out.n}};
  return out;
}

inline json to_json(const ThinShellReport& r) {
  json j;
  j["schema"] = "loclab.thinshell/1";
  j["family"] = r.family;
  j["n"] = r.n;
  j["var_norm_sq"] = r.var_norm_sq;
  j["var_norm_sq_over_n"] = r.var_norm_sq / r.n;
  if (r.var_se > 0.0) j["var_norm_sq_se"] = r.var_se;
  j["per_coordinate_h1neg"] = r.per_coordinate_h1neg;
  j["chain_middle"] = r.chain_middle;
  j["chain_right"] = r.chain_right;
  j["chain_right_se"] = r.chain_right_se;
  j["chain_right_over_n"] = r.chain_right / r.n;
  j["t_used"] = r.t_used;
  j["n_paths"] = r.n_paths;
  j["check"] = to_json(r.report);
  return j;
}

inline const char* kThinShellCsvHeader =
    "family,n,t,n_paths,var_norm_sq,var_norm_sq_over_n,chain_middle,chain_right,chain_right_se,chain_right_over_n,pass";

inline std::string csv_row(const ThinShellReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.family << ',' << r.n << ',' << r.t_used << ',' << r.n_paths << ',' << r.var_norm_sq << ','
     << r.var_norm_sq / r.n << ',' << r.chain_middle << ',' << r.chain_right << ',' << r.chain_right_se << ','
     << r.chain_right / r.n << ',' << (r.report.pass ? 1 : 0);
  return os.str();
}

}  // namespace loclab
