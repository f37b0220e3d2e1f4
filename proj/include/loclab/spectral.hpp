#pragma once

// Matrix calculus on paths of symmetric PSD matrices: product integrals
// M' = A M, the eigenvalue growth bound, the eigenvalue recursion, trace
// inequalities, second derivatives of spectral traces, the bump family and
// the 3-tensor bound for tilted product measures.

#include <Eigen/Dense>

#include <cmath>
#include <algorithm>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "localization.hpp"
#include "log_laplace.hpp"
#include "measure.hpp"
#include "random.hpp"
#include "report.hpp"

namespace loclab {

struct PSDPath {
  std::vector<double> times;
  std::vector<MatrixXd> mats;
  json descriptor = json::object();

  int dim() const { return static_cast<int>(mats.front().rows()); }
};

inline void validate_psd_path(const PSDPath& p) {
  require(p.times.size() >= 2 && p.times.size() == p.mats.size(), ErrorCode::invalid_argument,
          "PSD path needs matching times and matrices");
  for (std::size_t k = 0; k < p.mats.size(); ++k) {
    const MatrixXd& a = p.mats[k];
    require(a.rows() == a.cols() && a.rows() == p.mats[0].rows(), ErrorCode::dimension_mismatch,
            "PSD path matrices must be square and of one size");
    require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12, ErrorCode::invalid_argument,
            "PSD path matrix is not symmetric");
    if (k > 0) require(p.times[k] > p.times[k - 1], ErrorCode::invalid_argument, "times must increase");
  }
  for (const auto& a : p.mats) {
    require(Eigen::SelfAdjointEigenSolver<MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() >= -1e-10,
            ErrorCode::invalid_argument, "PSD path matrix has a negative eigenvalue");
  }
}

inline PSDPath constant_path(const MatrixXd& a, double t_max, double dt) {
  PSDPath p;
  p.times = uniform_grid(t_max, dt);
  p.mats.assign(p.times.size(), a);
  p.descriptor = {{"kind", "constant"}};
  return p;
}

inline MatrixXd planar_rotation(double angle) {
  MatrixXd r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

/// A(t) = Q(t) diag(d) Q(t)^T with Q(t) the rotation by omega t (n = 2).
inline PSDPath rotating_path(const VectorXd& d, double omega, double t_max, double dt) {
  require(d.size() == 2, ErrorCode::invalid_argument, "rotating path is planar");
  PSDPath p;
  p.times = uniform_grid(t_max, dt);
  for (double t : p.times) {
    const MatrixXd q = planar_rotation(omega * t);
    MatrixXd a = q * d.asDiagonal() * q.transpose();
    p.mats.push_back(0.5 * (a + a.transpose()));
  }
  p.descriptor = {{"kind", "rotating"}, {"d", {d(0), d(1)}}, {"omega", omega}};
  return p;
}

/// Random non-commuting path A(t) = Q(t) diag(d(t)) Q(t)^T with
/// Q(t) = V blockdiag(R(omega_i t)) for a random orthogonal V and
/// d_i(t) = base_i (1 + amp_i sin(nu_i t)) >= 0. Parameters are logged in
/// the descriptor.
inline PSDPath random_rotating_path(int n, double t_max, double dt, std::uint64_t seed) {
  require(n >= 1, ErrorCode::invalid_argument, "dimension must be positive");
  CounterRng rng(seed);
  MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
  const MatrixXd v = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
  VectorXd base(n), amp(n), nu(n);
  for (int i = 0; i < n; ++i) {
    base(i) = 2.0 * rng.uniform();
    amp(i) = 0.9 * rng.uniform();
    nu(i) = 6.0 * rng.uniform();
  }
  std::vector<double> omega;
  for (int i = 0; i + 1 < n; i += 2) omega.push_back(10.0 * rng.uniform() - 5.0);

  PSDPath p;
  p.times = uniform_grid(t_max, dt);
  for (double t : p.times) {
    MatrixXd q = MatrixXd::Identity(n, n);
    for (std::size_t b = 0; b < omega.size(); ++b) q.block(2 * b, 2 * b, 2, 2) = planar_rotation(omega[b] * t);
    q = v * q;
    const VectorXd d = base.array() * (1.0 + amp.array() * (nu.array() * t).sin());
    MatrixXd a = q * d.asDiagonal() * q.transpose();
    p.mats.push_back(0.5 * (a + a.transpose()));
  }
  auto list = [](const VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  p.descriptor = {{"kind", "random-rotating"}, {"seed", seed}, {"base", list(base)},
                  {"amp", list(amp)},          {"nu", list(nu)},   {"omega", omega}};
  return p;
}

/// M at every grid time for M' = A M, M_0 = Id, with the same update as the
/// flow: M <- (Id + dt A_mid (Id + dt/2 A_start)) M, A_mid the average of the
/// endpoint matrices.
inline std::vector<MatrixXd> solve_product_integral(const PSDPath& p) {
  validate_psd_path(p);
  const int n = p.dim();
  const MatrixXd eye = MatrixXd::Identity(n, n);
  std::vector<MatrixXd> out;
  out.reserve(p.times.size());
  out.push_back(eye);
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    const double dt = p.times[k + 1] - p.times[k];
    const MatrixXd mid = 0.5 * (p.mats[k] + p.mats[k + 1]);
    const double norm = std::max(Eigen::SelfAdjointEigenSolver<MatrixXd>(p.mats[k], Eigen::EigenvaluesOnly)
                                     .eigenvalues()
                                     .cwiseAbs()
                                     .maxCoeff(),
                                 Eigen::SelfAdjointEigenSolver<MatrixXd>(mid, Eigen::EigenvaluesOnly)
                                     .eigenvalues()
                                     .cwiseAbs()
                                     .maxCoeff());
    require(dt * norm < 0.5, ErrorCode::step_size, "step too large: dt |A| must stay below 1/2");
    out.push_back((eye + dt * mid * (eye + 0.5 * dt * p.mats[k])) * out.back());
  }
  return out;
}

/// Trapezoid integrals of the sorted eigenvalues, one column per grid time.
inline MatrixXd integrated_eigenvalues(const PSDPath& p) {
  const int n = p.dim();
  MatrixXd out = MatrixXd::Zero(n, p.times.size());
  VectorXd prev = sorted_eigen(p.mats[0]).values;
  for (std::size_t k = 1; k < p.times.size(); ++k) {
    const VectorXd cur = sorted_eigen(p.mats[k]).values;
    out.col(k) = out.col(k - 1) + 0.5 * (p.times[k] - p.times[k - 1]) * (prev + cur);
    prev = cur;
  }
  return out;
}

inline std::string descriptor_text(const PSDPath& p) { return p.descriptor.dump(); }

/// |M_t|^2 (Hilbert-Schmidt) against sum_i exp(2 int lambda_i) at the final time.
inline CheckReport check_product_integral_bound(const PSDPath& p) {
  const auto ms = solve_product_integral(p);
  const MatrixXd ints = integrated_eigenvalues(p);
  const double lhs = ms.back().squaredNorm();
  const double rhs = (2.0 * ints.col(ints.cols() - 1).array()).exp().sum();
  CheckReport r = make_report("product-integral-bound", descriptor_text(p) + "|K=" + std::to_string(p.times.size()), lhs,
                              rhs * (1.0 + 1e-4) + 1e-8);
  r.details = {{"hs_norm_sq", lhs}, {"eigen_bound", rhs}};
  return r;
}

struct RecursionOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-6;
};

/// Eigenvalue recursion: mu[i] and lambda[i] are sequences on `grid` (lambda
/// sorted descending at each time). Checks the hypothesis
///   sum_{i<=k} mu_i(t) <= sum_{i<=k} [1 + 2 int_0^t mu_i lambda_i]
/// (rejecting the input if it fails) and reports the conclusion
///   sum_{i<=k} mu_i(t) <= sum_{i<=k} exp(2 int_0^t lambda_i)
/// for every k and grid time. Integrals are trapezoidal.
inline CheckReport check_eigen_recursion(const std::vector<std::vector<double>>& mu,
                                         const std::vector<std::vector<double>>& lambda,
                                         const std::vector<double>& grid, const RecursionOptions& opts = {}) {
  const std::size_t n = mu.size();
  require(n >= 1 && lambda.size() == n, ErrorCode::invalid_argument, "mu and lambda need the same count");
  const std::size_t m = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    require(mu[i].size() == m && lambda[i].size() == m, ErrorCode::invalid_argument, "sequences must match the grid");
  }
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      require(lambda[i][k] >= lambda[i + 1][k], ErrorCode::invalid_argument, "lambda must be sorted descending");
    }
  }
  std::vector<double> nu(n, 1.0), lam_int(n, 0.0);
  double worst = -kInf;
  std::size_t violations = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (k > 0) {
      const double dt = grid[k] - grid[k - 1];
      for (std::size_t i = 0; i < n; ++i) {
        nu[i] += dt * (mu[i][k - 1] * lambda[i][k - 1] + mu[i][k] * lambda[i][k]);
        lam_int[i] += 0.5 * dt * (lambda[i][k - 1] + lambda[i][k]);
      }
    }
    double sum_mu = 0.0, sum_nu = 0.0, sum_exp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_mu += mu[i][k];
      sum_nu += nu[i];
      sum_exp += std::exp(2.0 * lam_int[i]);
      require(sum_mu <= sum_nu * (1.0 + opts.rel_tol) + opts.abs_tol, ErrorCode::hypothesis_violated,
              "recursion hypothesis fails at t=" + std::to_string(grid[k]) + " k=" + std::to_string(i + 1));
      const double excess = sum_mu - (sum_exp * (1.0 + opts.rel_tol) + opts.abs_tol);
      worst = std::max(worst, excess);
      if (excess > 0.0) ++violations;
    }
  }
  CheckReport r = make_report("eigen-recursion", "n=" + std::to_string(n) + "|m=" + std::to_string(m),
                              static_cast<double>(violations), 0.0);
  r.details = {{"worst_excess", worst}, {"violations", violations}};
  return r;
}

/// Eigen-data of a product integral in the form the recursion expects:
/// mu_i = eigenvalues of M^T M and lambda_i = eigenvalues of A, both descending.
inline void harvest_recursion_data(const PSDPath& p, std::vector<std::vector<double>>& mu,
                                   std::vector<std::vector<double>>& lambda) {
  const auto ms = solve_product_integral(p);
  const int n = p.dim();
  mu.assign(n, {});
  lambda.assign(n, {});
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    const VectorXd s = sorted_eigen(ms[k].transpose() * ms[k]).values;
    const VectorXd l = sorted_eigen(p.mats[k]).values;
    for (int i = 0; i < n; ++i) {
      mu[i].push_back(s(i));
      lambda[i].push_back(l(i));
    }
  }
}

/// sum a_i b_i - Tr[AB] with both spectra sorted descending; >= 0 for symmetric inputs.
inline double von_neumann_gap(const MatrixXd& a, const MatrixXd& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::dimension_mismatch, "sizes differ");
  const VectorXd ea = sorted_eigen(a).values, eb = sorted_eigen(b).values;
  return ea.dot(eb) - (a * b).trace();
}

// --- spectral functions -------------------------------------------------------------

struct SpectralFunction {
  std::function<double(double)> f, df, d2f;
  json descriptor;
};

/// f(x) = sum_j c_j x^j.
inline SpectralFunction polynomial(std::vector<double> coeffs) {
  auto eval = [](const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
    return acc;
  };
  auto derivative = [](const std::vector<double>& c) {
    std::vector<double> d;
    for (std::size_t j = 1; j < c.size(); ++j) d.push_back(static_cast<double>(j) * c[j]);
    return d;
  };
  const auto c1 = derivative(coeffs);
  const auto c2 = derivative(c1);
  SpectralFunction s;
  s.f = [coeffs, eval](double x) { return eval(coeffs, x); };
  s.df = [c1, eval](double x) { return eval(c1, x); };
  s.d2f = [c2, eval](double x) { return eval(c2, x); };
  s.descriptor = {{"kind", "polynomial"}, {"coeffs", coeffs}};
  return s;
}

inline double trace_function(const MatrixXd& a, const SpectralFunction& f) {
  const VectorXd l = sorted_eigen(a).values;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i) acc += f.f(l(i));
  return acc;
}

/// d^2/de^2 Tr f(A + e H) at e = 0:
///   sum_{ij} f'[l_i, l_j] <H u_i, u_j>^2,
/// with the divided difference of f' replaced by f''(l_i) when
/// |l_i - l_j| < 1e-8 (1 + |l_i|).
inline double dk_quadratic_form(const MatrixXd& a, const MatrixXd& h, const SpectralFunction& f) {
  require(a.rows() == h.rows() && a.cols() == h.cols(), ErrorCode::dimension_mismatch, "sizes differ");
  const SortedEigen se = sorted_eigen(a);
  const MatrixXd g = se.vectors.transpose() * h * se.vectors;
  const VectorXd& l = se.values;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    for (Eigen::Index j = 0; j < l.size(); ++j) {
      const double q = std::abs(l(i) - l(j)) < 1e-8 * (1.0 + std::abs(l(i))) ? f.d2f(l(i))
                                                                          : (f.df(l(i)) - f.df(l(j))) / (l(i) - l(j));
      acc += q * g(i, j) * g(i, j);
    }
  }
  return acc;
}

/// The bump family f_{D,r}: e^{D(x-r)} left of r - 1/D, x^2 right of r, and
/// on the bridge f(x) = 1/e + D int_0^{x - r + 1/D} h(Ds) ds with h a quintic.
class Bump {
 public:
  Bump(double d, double r) : d_(d), r_(r), r0_(r - 1.0 / d) {
    require(d > 1.0, ErrorCode::invalid_argument, "bump needs D > 1");
    require(r >= 2.0 && r <= 3.0, ErrorCode::invalid_argument, "bump needs r in [2, 3]");
    solve_bridge();
  }

  double f(double x) const {
    if (x <= r0_) return std::exp(d_ * (x - r_));
    if (x >= r_) return x * x;
    return std::exp(-1.0) + h_integral(d_ * (x - r0_));
  }
  double df(double x) const {
    if (x <= r0_) return d_ * std::exp(d_ * (x - r_));
    if (x >= r_) return 2.0 * x;
    return d_ * h(d_ * (x - r0_));
  }
  double d2f(double x) const {
    if (x <= r0_) return d_ * d_ * std::exp(d_ * (x - r_));
    if (x >= r_) return 2.0;
    return d_ * d_ * dh(d_ * (x - r0_));
  }
  const Eigen::Matrix<double, 6, 1>& coefficients() const { return c_; }
  double d() const { return d_; }
  double r() const { return r_; }

 private:
  double h(double u) const {
    double acc = 0.0;
    for (int j = 5; j >= 0; --j) acc = acc * u + c_(j);
    return acc;
  }
  double dh(double u) const {
    double acc = 0.0;
    for (int j = 5; j >= 1; --j) acc = acc * u + j * c_(j);
    return acc;
  }
  double h_integral(double u) const {
    double acc = 0.0;
    for (int j = 5; j >= 0; --j) acc = acc * u + c_(j) / (j + 1);
    return acc * u;
  }

  // Endpoint values and slopes match the two outer pieces to second order,
  // the integral fixes f(r) = r^2; the remaining freedom minimizes int h''^2.
  void solve_bridge() {
    const double e1 = std::exp(-1.0);
    Eigen::Matrix<double, 5, 6> b = Eigen::Matrix<double, 5, 6>::Zero();
    Eigen::Matrix<double, 5, 1> rhs;
    b(0, 0) = 1.0;
    rhs(0) = e1;
    b(1, 1) = 1.0;
    rhs(1) = e1;
    for (int j = 0; j < 6; ++j) {
      b(2, j) = 1.0;
      b(3, j) = j;
      b(4, j) = 1.0 / (j + 1);
    }
    rhs(2) = 2.0 * r_ / d_;
    rhs(3) = 2.0 / (d_ * d_);
    rhs(4) = r_ * r_ - e1;
    Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
    for (int i = 2; i < 6; ++i)
      for (int j = 2; j < 6; ++j) q(i, j) = static_cast<double>(i * (i - 1) * j * (j - 1)) / (i + j - 3);
    Eigen::Matrix<double, 11, 11> kkt = Eigen::Matrix<double, 11, 11>::Zero();
    kkt.topLeftCorner<6, 6>() = 2.0 * q;
    kkt.topRightCorner<6, 5>() = b.transpose();
    kkt.bottomLeftCorner<5, 6>() = b;
    Eigen::Matrix<double, 11, 1> v = Eigen::Matrix<double, 11, 1>::Zero();
    v.tail<5>() = rhs;
    c_ = kkt.fullPivLu().solve(v).head<6>();
  }

  double d_, r_, r0_;
  Eigen::Matrix<double, 6, 1> c_;
};

struct BumpProbe {
  bool positive = true;
  bool increasing = true;
  bool curvature = true;  // f'' <= (12 D)^2 f
  bool shape = true;      // f(r) = r^2, f(r - 1/D) = 1/e
  double worst_curvature_ratio = 0.0;
  bool ok() const { return positive && increasing && curvature && shape; }
};

/// Contract probes on a 10^4-point grid over [0, r + 1].
inline BumpProbe probe_bump(const Bump& b, int points = 10000) {
  BumpProbe p;
  const double hi = b.r() + 1.0;
  const double cap = 144.0 * b.d() * b.d();
  double prev = -kInf;
  for (int k = 0; k < points; ++k) {
    const double x = hi * k / (points - 1);
    const double fx = b.f(x);
    p.positive = p.positive && fx > 0.0;
    p.increasing = p.increasing && b.df(x) > 0.0 && fx >= prev;
    prev = fx;
    const double ratio = b.d2f(x) / (cap * fx);
    p.worst_curvature_ratio = std::max(p.worst_curvature_ratio, ratio);
  }
  p.curvature = p.worst_curvature_ratio <= 1.0;
  const double r0 = b.r() - 1.0 / b.d();
  p.shape = std::abs(b.f(b.r()) - b.r() * b.r()) <= 1e-10 * b.r() * b.r() &&
            std::abs(b.f(r0) - std::exp(-1.0)) <= 1e-12;
  return p;
}

inline SpectralFunction make_bump(double d, double r) {
  const auto bump = std::make_shared<Bump>(d, r);
  const BumpProbe probe = probe_bump(*bump);
  require(probe.ok(), ErrorCode::construction_failed,
          "bump contract failed for D=" + std::to_string(d) + " r=" + std::to_string(r));
  SpectralFunction s;
  s.f = [bump](double x) { return bump->f(x); };
  s.df = [bump](double x) { return bump->df(x); };
  s.d2f = [bump](double x) { return bump->d2f(x); };
  const auto& c = bump->coefficients();
  s.descriptor = {{"kind", "bump"}, {"D", d}, {"r", r}, {"bridge", std::vector<double>(c.data(), c.data() + 6)}};
  return s;
}

// --- 3-tensor bound -------------------------------------------------------------

/// sum_{ij} xi_{ijk}^2 1{max(l_i, l_j) <= u} <= 4 t^{-1/2} u^{3/2} l_k (1 + 1e-3)
/// in the eigenbasis of A(t, theta). `k` is 1-based.
inline CheckReport third_moment_check(const MeasureHandle& h, double t, const VectorXd& theta, double u, int k) {
  require(t > 0.0, ErrorCode::invalid_argument, "3-tensor bound needs t > 0");
  require(k >= 1 && k <= h.dim(), ErrorCode::invalid_argument, "k must lie in 1..n");
  const TiltSummary s = tilt_summary(h, Tilt{t, theta});
  SortedEigen se = sorted_eigen(s.cov);
  if (h.is_product()) {
    // Diagonal covariance: use coordinate axes so ties are not mixed.
    std::vector<int> order(h.dim());
    for (int i = 0; i < h.dim(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.cov(a, a) > s.cov(b, b); });
    se.vectors.setZero();
    for (int i = 0; i < h.dim(); ++i) {
      se.values(i) = s.cov(order[i], order[i]);
      se.vectors(order[i], i) = 1.0;
    }
  }
  const SymTensor3 xi = tilt_third_tensor(h, Tilt{t, theta}, se.vectors);
  double lhs = 0.0;
  for (int i = 0; i < h.dim(); ++i) {
    for (int j = 0; j < h.dim(); ++j) {
      if (std::max(se.values(i), se.values(j)) <= u) lhs += xi(i, j, k - 1) * xi(i, j, k - 1);
    }
  }
  const double bound = 4.0 / std::sqrt(t) * std::pow(u, 1.5) * se.values(k - 1);
  CheckReport r = make_report("third-moment-bound",
                              h.id() + "|t=" + std::to_string(t) + "|theta=" + vec_text(theta) +
                                  "|u=" + std::to_string(u) + "|k=" + std::to_string(k),
                              lhs, bound * (1.0 + 1e-3));
  r.asserted = h.is_product();
  r.details = {{"lambda_k", se.values(k - 1)}};
  return r;
}

}  // namespace loclab
