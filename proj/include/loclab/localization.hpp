#pragma once

// The stochastic localization process started from the origin: barycenter
// a_t = a(t, theta_t), covariance A_t = A(t, theta_t) and its spectrum, plus
// the ensemble checks built on it (coupling law, martingales, covariance SDE,
// stopping-time tails).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "flow.hpp"
#include "log_laplace.hpp"
#include "measure.hpp"
#include "random.hpp"
#include "report.hpp"
#include "stats.hpp"

namespace loclab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
/// Statistical checks pass when every standardized deviation is within this many SE.
inline constexpr double kSeThreshold = 4.0;

struct SortedEigen {
  VectorXd values;   // descending
  MatrixXd vectors;  // columns, largest-magnitude entry positive
};

inline SortedEigen sorted_eigen(const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  SortedEigen out{es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
  for (int j = 0; j < n; ++j) {
    Eigen::Index arg = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, j) < 0.0) out.vectors.col(j) *= -1.0;
  }
  return out;
}

/// Descending eigenvalues only; product measures have diagonal covariance.
inline VectorXd sorted_eigenvalues(const MeasureHandle& h, const MatrixXd& a) {
  VectorXd v;
  if (h.is_product()) {
    v = a.diagonal();
  } else {
    v = Eigen::SelfAdjointEigenSolver<MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues();
  }
  std::sort(v.data(), v.data() + v.size(), std::greater<>());
  return v;
}

struct StoppingRecord {
  double tau_star = kInf;     // first grid time with lambda_1 >= 2
  std::vector<double> tau_k;  // tau_k[k-1]: first grid time with lambda_k >= 3
};

/// Threshold crossings on the grid, no interpolation.
class StoppingDetector {
 public:
  explicit StoppingDetector(int n) { rec_.tau_k.assign(n, kInf); }

  void observe(double t, const VectorXd& eig_desc) {
    if (rec_.tau_star == kInf && eig_desc(0) >= 2.0) rec_.tau_star = t;
    for (Eigen::Index k = 0; k < eig_desc.size(); ++k) {
      if (eig_desc(k) < 3.0) break;  // sorted: later k cannot cross either
      if (rec_.tau_k[k] == kInf) rec_.tau_k[k] = t;
    }
  }
  const StoppingRecord& record() const { return rec_; }

 private:
  StoppingRecord rec_;
};

struct LocalizationTrace {
  std::vector<double> times;
  std::vector<VectorXd> theta;
  std::vector<VectorXd> a;
  std::vector<MatrixXd> cov;
  std::vector<VectorXd> eigvals;
  std::vector<MatrixXd> eigvecs;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::string measure_id;
  bool isotropic = false;  // theory-level assertions require it
  double validity_horizon = kInf;
  StoppingRecord stopping;
};

/// Runs theta_t = G_{t,w}(0) along the given path and records the process.
inline LocalizationTrace run_localization(const MeasureHandle& h, const BrownianPath& path) {
  const int n = h.dim();
  LocalizationTrace tr;
  tr.seed = path.seed;
  tr.dt = path.times.size() > 1 ? path.times[1] - path.times[0] : 0.0;
  tr.measure_id = h.id();
  tr.isotropic = is_isotropic(h, 1e-6);
  StoppingDetector stop(n);
  bool valid = true;
  integrate_flow(h, VectorXd::Zero(n), path, false, 0.0, path.steps(), [&](const FlowState& s) {
    SortedEigen se = sorted_eigen(s.summary.cov);
    stop.observe(s.t, se.values);
    if (h.is_atomic() && valid) {
      if (s.summary.ess < kMinEss) {
        valid = false;
        tr.validity_horizon = tr.times.empty() ? 0.0 : tr.times.back();
      }
    }
    tr.times.push_back(s.t);
    tr.theta.push_back(s.theta);
    tr.a.push_back(s.summary.mean);
    tr.cov.push_back(s.summary.cov);
    tr.eigvals.push_back(std::move(se.values));
    tr.eigvecs.push_back(std::move(se.vectors));
  });
  if (h.is_atomic() && valid) tr.validity_horizon = tr.times.back();
  tr.stopping = stop.record();
  return tr;
}

inline LocalizationTrace run_localization(const MeasureHandle& h, double t_max, double dt, std::uint64_t seed) {
  return run_localization(h, sample_brownian_path(h.dim(), t_max, dt, seed));
}

/// Sum_i exp(2 int_0^t lambda_i), trapezoid on the sorted eigenvalues, accumulated online.
class SpectralGrowth {
 public:
  void observe(double t, const VectorXd& eig_desc) {
    if (integral_.size() == 0) {
      integral_ = VectorXd::Zero(eig_desc.size());
    } else {
      integral_ += 0.5 * (t - last_t_) * (last_ + eig_desc);
    }
    last_t_ = t;
    last_ = eig_desc;
  }
  const VectorXd& integrals() const { return integral_; }
  double value() const { return (2.0 * integral_.array()).exp().sum(); }

 private:
  VectorXd integral_;
  VectorXd last_;
  double last_t_ = 0.0;
};

inline double spectral_growth(const LocalizationTrace& tr, std::size_t upto) {
  SpectralGrowth g;
  for (std::size_t k = 0; k <= upto; ++k) g.observe(tr.times[k], tr.eigvals[k]);
  return g.value();
}

// --- S maps --------------------------------------------------------------------

/// S_{t,w}(xi) = a(t, G_{t,w}(theta)) with a(0, theta) = xi.
inline VectorXd eval_S(const MeasureHandle& h, const VectorXd& xi, double t, const BrownianPath& path) {
  const VectorXd x = invert_grad_laplace(h, 0.0, xi);
  const std::size_t k = path.index_of(t);
  VectorXd out;
  integrate_flow(h, x, path, false, 0.0, k, [&](const FlowState& s) {
    if (s.step == k) out = s.summary.mean;
  });
  return out;
}

// --- ensemble statistics ----------------------------------------------------------

/// Tracks the worst standardized deviation over a family of comparisons.
struct ZTracker {
  double worst = 0.0;
  std::size_t count = 0;
  json entries = json::array();

  void add(const std::string& label, double diff, double se) {
    const double z = se > 0.0 ? std::abs(diff) / se : (diff == 0.0 ? 0.0 : kInf);
    worst = std::max(worst, z);
    ++count;
    entries.push_back({{"what", label}, {"diff", diff}, {"se", se}, {"z", z}});
  }
};

inline std::string vec_text(const VectorXd& v) {
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v(i);
  return os.str();
}

inline std::string grid_text(const std::vector<double>& ts) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < ts.size(); ++i) os << (i ? "," : "") << ts[i];
  return os.str();
}

struct EnsembleOptions {
  double dt = 1e-3;
  double threshold_se = kSeThreshold;
};

inline std::uint64_t path_seed(std::uint64_t seed, std::size_t p) { return hash_combine(seed, p); }

/// Compares theta_t = G_{t,B}(x) with x + B_t + t X, X ~ mu_x, at each
/// checkpoint. Both ensembles share the Brownian path (common random
/// numbers), so the single-atom case agrees pathwise. Means and covariance
/// entries must agree within threshold_se standard errors; at the largest
/// checkpoint the laws of theta_t / t on 10 random directions must have
/// two-sample KS distance below 4 / sqrt(n_paths).
inline CheckReport verify_coupling_law(const MeasureHandle& h, const VectorXd& x, std::vector<double> checkpoints,
                                       std::size_t n_paths, std::uint64_t seed, const EnsembleOptions& opts = {}) {
  require(n_paths >= 2, ErrorCode::invalid_argument, "need at least two paths");
  require(!checkpoints.empty(), ErrorCode::invalid_argument, "need at least one checkpoint");
  std::sort(checkpoints.begin(), checkpoints.end());
  const int n = h.dim();
  const double t_max = checkpoints.back();
  const MeasureHandle mu_x = tilted_measure(h, Tilt{0.0, x});
  const std::size_t nc = checkpoints.size();

  std::vector<std::vector<VectorXd>> flow(nc, std::vector<VectorXd>(n_paths));
  std::vector<std::vector<VectorXd>> coupled(nc, std::vector<VectorXd>(n_paths));
  std::vector<VectorXd> limit_sample(n_paths);
  const std::uint64_t x_seed = hash_combine(seed, hash_string("tilted-draw"));
  parallel_for(n_paths, [&](std::size_t p) {
    const BrownianPath path = sample_brownian_path(n, t_max, opts.dt, path_seed(seed, p));
    std::vector<std::size_t> idx(nc);
    for (std::size_t c = 0; c < nc; ++c) idx[c] = path.index_of(checkpoints[c]);
    std::size_t next = 0;
    integrate_flow(h, x, path, false, 0.0, idx.back(), [&](const FlowState& s) {
      while (next < nc && idx[next] == s.step) flow[next++][p] = s.theta;
    });
    CounterRng rng(path_seed(x_seed, p));
    const VectorXd draw = sample_point(mu_x, rng);
    for (std::size_t c = 0; c < nc; ++c) {
      coupled[c][p] = x + path.values[idx[c]] + path.times[idx[c]] * draw;
    }
    limit_sample[p] = sample_point(mu_x, rng);
  });

  ZTracker z;
  const double np = static_cast<double>(n_paths);
  for (std::size_t c = 0; c < nc; ++c) {
    auto column = [&](const std::vector<VectorXd>& s, auto&& f) {
      std::vector<double> out(n_paths);
      for (std::size_t p = 0; p < n_paths; ++p) out[p] = f(s[p]);
      return out;
    };
    VectorXd ma(n), mb(n);
    for (int i = 0; i < n; ++i) {
      const MeanSe a = mean_se(column(flow[c], [&](const VectorXd& v) { return v(i); }));
      const MeanSe b = mean_se(column(coupled[c], [&](const VectorXd& v) { return v(i); }));
      ma(i) = a.mean;
      mb(i) = b.mean;
      z.add("mean t=" + std::to_string(checkpoints[c]) + " i=" + std::to_string(i), a.mean - b.mean,
            std::hypot(a.se, b.se));
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const MeanSe a = mean_se(column(flow[c], [&](const VectorXd& v) { return (v(i) - ma(i)) * (v(j) - ma(j)); }));
        const MeanSe b =
            mean_se(column(coupled[c], [&](const VectorXd& v) { return (v(i) - mb(i)) * (v(j) - mb(j)); }));
        const double bessel = np / (np - 1.0);
        z.add("cov t=" + std::to_string(checkpoints[c]) + " ij=" + std::to_string(i) + std::to_string(j),
              bessel * (a.mean - b.mean), bessel * std::hypot(a.se, b.se));
      }
    }
  }

  const double ks_limit = 4.0 / std::sqrt(np);
  double ks_worst = 0.0, limit_worst = 0.0;
  CounterRng dir_rng(hash_combine(seed, hash_string("projections")));
  for (int d = 0; d < 10; ++d) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = dir_rng.normal();
    v.normalize();
    std::vector<double> pa(n_paths), pb(n_paths), pl(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
      pa[p] = v.dot(flow.back()[p]) / t_max;
      pb[p] = v.dot(coupled.back()[p]) / t_max;
      pl[p] = v.dot(limit_sample[p]);
    }
    ks_worst = std::max(ks_worst, ks_two_sample(pa, pb));
    limit_worst = std::max(limit_worst, ks_two_sample(pa, pl));
  }

  CheckReport r = make_report("coupling-law",
                              h.id() + "|x=" + vec_text(x) + "|t=" + grid_text(checkpoints) +
                                  "|paths=" + std::to_string(n_paths) + "|seed=" + std::to_string(seed),
                              std::max(z.worst / opts.threshold_se, ks_worst / ks_limit), 1.0);
  r.details = {{"worst_z", z.worst},         {"comparisons", z.count}, {"ks_distance", ks_worst},
               {"ks_threshold", ks_limit},   {"limit_ks_distance", limit_worst},
               {"entries", std::move(z.entries)}};
  return r;
}

enum class MartingaleQuantity { barycenter, s_map };

/// For each pair s < t: E[q_t - q_s] = 0 and E[(q_t - q_s) phi(q_s)] = 0 for
/// phi = 1 and each coordinate, all within threshold_se standard errors.
inline CheckReport martingale_residuals(const MeasureHandle& h, MartingaleQuantity quantity,
                                        const std::optional<VectorXd>& xi,
                                        const std::vector<std::pair<double, double>>& t_pairs, std::size_t n_paths,
                                        std::uint64_t seed, const EnsembleOptions& opts = {}) {
  require(!t_pairs.empty(), ErrorCode::invalid_argument, "need at least one time pair");
  const int n = h.dim();
  VectorXd start = VectorXd::Zero(n);
  if (quantity == MartingaleQuantity::s_map) {
    require(xi.has_value(), ErrorCode::invalid_argument, "S-process needs a base point xi");
    start = invert_grad_laplace(h, 0.0, *xi);
  }
  std::vector<double> times;
  for (const auto& [s, t] : t_pairs) {
    require(s < t, ErrorCode::invalid_argument, "time pairs must have s < t");
    times.push_back(s);
    times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const double t_max = times.back();

  std::vector<std::vector<VectorXd>> q(times.size(), std::vector<VectorXd>(n_paths));
  parallel_for(n_paths, [&](std::size_t p) {
    const BrownianPath path = sample_brownian_path(n, t_max, opts.dt, path_seed(seed, p));
    std::vector<std::size_t> idx(times.size());
    for (std::size_t c = 0; c < times.size(); ++c) idx[c] = path.index_of(times[c]);
    std::size_t next = 0;
    integrate_flow(h, start, path, false, 0.0, idx.back(), [&](const FlowState& s) {
      while (next < idx.size() && idx[next] == s.step) q[next++][p] = s.summary.mean;
    });
  });
  auto slot = [&](double t) {
    return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
  };

  ZTracker z;
  std::vector<double> col(n_paths);
  for (const auto& [s, t] : t_pairs) {
    const auto& qs = q[slot(s)];
    const auto& qt = q[slot(t)];
    const std::string tag = "(" + std::to_string(s) + "," + std::to_string(t) + ")";
    for (int j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < n_paths; ++p) col[p] = qt[p](j) - qs[p](j);
      const MeanSe m = mean_se(col);
      z.add("increment " + tag + " j=" + std::to_string(j), m.mean, m.se);
      for (int i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < n_paths; ++p) col[p] = (qt[p](j) - qs[p](j)) * qs[p](i);
        const MeanSe mi = mean_se(col);
        z.add("regression " + tag + " j=" + std::to_string(j) + " phi=" + std::to_string(i), mi.mean, mi.se);
      }
    }
  }
  const std::string name = quantity == MartingaleQuantity::barycenter ? "martingale-a" : "martingale-S";
  std::string inputs = h.id() + "|" + name + "|paths=" + std::to_string(n_paths) + "|seed=" + std::to_string(seed);
  if (xi) inputs += "|xi=" + vec_text(*xi);
  CheckReport r = make_report(name, inputs, z.worst, opts.threshold_se);
  r.details = {{"worst_z", z.worst}, {"comparisons", z.count}, {"entries", std::move(z.entries)}};
  return r;
}

// --- covariance SDE -------------------------------------------------------------

/// H_a = T(e_a, ., .) where T is the third central moment tensor, obtained from
/// its components in the eigenbasis u_i and rotated back.
inline std::vector<MatrixXd> sde_coefficients(const MeasureHandle& h, double t, const VectorXd& theta,
                                              const MatrixXd& eigvecs) {
  const int n = h.dim();
  const SymTensor3 xi = tilt_third_tensor(h, Tilt{t, theta}, eigvecs);
  std::vector<MatrixXd> out(n, MatrixXd::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const double v = xi(i, j, k);
        if (v == 0.0) continue;
        for (int a = 0; a < n; ++a) {
          const double va = v * eigvecs(a, i);
          for (int b = 0; b < n; ++b) out[a].row(b) += (va * eigvecs(b, j)) * eigvecs.col(k).transpose();
        }
      }
    }
  }
  return out;
}

/// Per step k in [t0, t1]: realized A_{k+1} - A_k against the prediction
/// sum_a H_a dB_a - A^2 dt. Aggregation is in l2 over steps:
///   sqrt(sum |res|^2) <= 0.1 sqrt(sum |stoch|^2) + 10 dt R^4 sqrt(steps),
/// and `ratio` = sum |res|^2 / sum |stoch|^2 is O(dt).
inline CheckReport verify_cov_sde(const MeasureHandle& h, const LocalizationTrace& tr, const BrownianPath& path,
                                  double t0, double t1) {
  require(tr.times.size() == path.times.size(), ErrorCode::invalid_argument, "trace and path grids differ");
  const std::size_t k0 = path.index_of(t0), k1 = path.index_of(t1);
  require(k1 > k0, ErrorCode::invalid_argument, "empty window");
  CompensatedSum res2, stoch2;
  double dt_max = 0.0;
  for (std::size_t k = k0; k < k1; ++k) {
    const double dt = path.times[k + 1] - path.times[k];
    dt_max = std::max(dt_max, dt);
    const VectorXd db = path.values[k + 1] - path.values[k];
    const auto hs = sde_coefficients(h, tr.times[k], tr.theta[k], tr.eigvecs[k]);
    MatrixXd stoch = MatrixXd::Zero(h.dim(), h.dim());
    for (int a = 0; a < h.dim(); ++a) stoch += hs[a] * db(a);
    const MatrixXd predicted = stoch - tr.cov[k] * tr.cov[k] * dt;
    res2.add((tr.cov[k + 1] - tr.cov[k] - predicted).squaredNorm());
    stoch2.add(stoch.squaredNorm());
  }
  const double steps = static_cast<double>(k1 - k0);
  const double r4 = std::pow(h.support_radius(), 4);
  CheckReport r = make_report("cov-sde",
                              h.id() + "|seed=" + std::to_string(path.seed) + "|window=" + std::to_string(t0) + "," +
                                  std::to_string(t1) + "|dt=" + std::to_string(dt_max),
                              std::sqrt(res2.value()), 0.1 * std::sqrt(stoch2.value()) + 10.0 * dt_max * r4 * std::sqrt(steps));
  r.asserted = h.is_product() || h.dim() == 1;
  r.details = {{"steps", k1 - k0}, {"ratio", stoch2.value() > 0.0 ? res2.value() / stoch2.value() : 0.0},
               {"residual_l2", std::sqrt(res2.value())}, {"stochastic_l2", std::sqrt(stoch2.value())}};
  return r;
}

// --- stopping-time tails -----------------------------------------------------------

struct StoppingTails {
  std::vector<int> ks;
  std::vector<double> ts;
  std::vector<std::vector<std::size_t>> hits;  // hits[k index][t index]
  std::size_t n_paths = 0;
  CheckReport report;

  double freq(std::size_t ki, std::size_t ti) const {
    return static_cast<double>(hits[ki][ti]) / static_cast<double>(n_paths);
  }
  WilsonInterval ci(std::size_t ki, std::size_t ti) const { return wilson_interval(hits[ki][ti], n_paths); }
};

/// Empirical P(tau_k <= t). Asserted: monotone in t, non-increasing in k up to
/// overlapping Wilson intervals, and P(tau_1 <= t) <= 0.01 for t <= 0.2 on
/// product measures.
inline StoppingTails estimate_stopping_tails(const MeasureHandle& h, std::vector<int> ks, std::vector<double> ts,
                                             std::size_t n_paths, std::uint64_t seed, double dt = 1e-3) {
  const int n = h.dim();
  for (int k : ks) require(k >= 1 && k <= n, ErrorCode::invalid_argument, "k must lie in 1..n");
  require(!ts.empty(), ErrorCode::invalid_argument, "need at least one time");
  std::sort(ks.begin(), ks.end());
  std::sort(ts.begin(), ts.end());
  const double t_max = ts.back();
  std::vector<StoppingRecord> records(n_paths);
  parallel_for(n_paths, [&](std::size_t p) {
    const BrownianPath path = sample_brownian_path(n, t_max, dt, path_seed(seed, p));
    StoppingDetector stop(n);
    integrate_flow(h, VectorXd::Zero(n), path, false, 0.0, path.steps(),
                   [&](const FlowState& s) { stop.observe(s.t, sorted_eigenvalues(h, s.summary.cov)); });
    records[p] = stop.record();
  });

  StoppingTails out;
  out.ks = ks;
  out.ts = ts;
  out.n_paths = n_paths;
  out.hits.assign(ks.size(), std::vector<std::size_t>(ts.size(), 0));
  for (const auto& rec : records) {
    for (std::size_t a = 0; a < ks.size(); ++a) {
      for (std::size_t b = 0; b < ts.size(); ++b) {
        if (rec.tau_k[ks[a] - 1] <= ts[b] + 1e-12) ++out.hits[a][b];
      }
    }
  }
  std::size_t violations = 0;
  json table = json::array();
  for (std::size_t a = 0; a < ks.size(); ++a) {
    for (std::size_t b = 0; b < ts.size(); ++b) {
      const WilsonInterval w = out.ci(a, b);
      table.push_back({{"k", ks[a]}, {"t", ts[b]}, {"freq", w.estimate}, {"ci_lo", w.lo}, {"ci_hi", w.hi}});
      if (b > 0 && out.hits[a][b] < out.hits[a][b - 1]) ++violations;
      if (a > 0 && out.ci(a, b).lo > out.ci(a - 1, b).hi) ++violations;
      if (h.is_product() && ks[a] == 1 && ts[b] <= 0.2 && w.estimate > 0.01) ++violations;
    }
  }
  out.report = make_report("stopping-tails",
                           h.id() + "|t=" + grid_text(ts) + "|paths=" + std::to_string(n_paths) +
                               "|seed=" + std::to_string(seed),
                           static_cast<double>(violations), 0.0);
  out.report.details = {{"table", std::move(table)}, {"violations", violations}};
  return out;
}

// --- covariance bound along paths ----------------------------------------------------

/// lambda_1(t) <= (1 + rel_tol) / t for every grid t >= t_min on each path.
/// Asserted for product (log-concave quadrature) measures only.
inline CheckReport check_covariance_bound(const MeasureHandle& h, double t_max, double dt, std::size_t n_paths,
                                          std::uint64_t seed, double t_min = 0.05, double rel_tol = 1e-3) {
  require(t_max > t_min && t_min > 0.0, ErrorCode::invalid_argument, "need 0 < t_min < t_max");
  std::vector<double> worst(n_paths, 0.0);
  std::vector<std::size_t> bad(n_paths, 0);
  parallel_for(n_paths, [&](std::size_t p) {
    const BrownianPath path = sample_brownian_path(h.dim(), t_max, dt, path_seed(seed, p));
    integrate_flow(h, VectorXd::Zero(h.dim()), path, false, 0.0, path.steps(), [&](const FlowState& s) {
      if (s.t < t_min - 1e-12) return;
      const double scaled = sorted_eigenvalues(h, s.summary.cov)(0) * s.t;
      worst[p] = std::max(worst[p], scaled);
      if (scaled > 1.0 + rel_tol) ++bad[p];
    });
  });
  double top = 0.0;
  std::size_t violations = 0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    top = std::max(top, worst[p]);
    violations += bad[p];
  }
  std::ostringstream in;
  in << h.id() << "|t_max=" << t_max << "|dt=" << dt << "|paths=" << n_paths << "|seed=" << seed << "|t_min=" << t_min;
  CheckReport r = make_report("covariance-bound", in.str(), top, 1.0 + rel_tol);
  r.asserted = h.is_product();
  r.details = {{"max_t_lambda1", top}, {"violations", violations}};
  return r;
}

}  // namespace loclab
