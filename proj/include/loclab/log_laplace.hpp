#pragma once

// Tilted measures mu_{t,theta}(dx) ∝ exp(<theta,x> - t|x|^2/2) mu(dx): log-mass,
// barycenter, covariance, third central moments, and inversion of the
// barycenter map theta -> a(t, theta).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "error.hpp"
#include "measure.hpp"

namespace loclab {

struct Tilt {
  double t = 0.0;
  VectorXd theta;
};

struct TiltSummary {
  double log_mass = 0.0;
  VectorXd mean;
  MatrixXd cov;
  double ess = std::numeric_limits<double>::infinity();
  bool degenerate = false;  // effective sample size below kMinEss (atom clouds)
};

inline constexpr double kMinEss = 50.0;

/// Fully symmetric 3-tensor stored densely.
class SymTensor3 {
 public:
  explicit SymTensor3(int n = 0) : n_(n), v_(static_cast<std::size_t>(n) * n * n, 0.0) {}

  int dim() const { return n_; }
  double& operator()(int i, int j, int k) { return v_[index(i, j, k)]; }
  double operator()(int i, int j, int k) const { return v_[index(i, j, k)]; }

  /// xi_{ij} as a vector with components xi_{ijk}.
  VectorXd fiber(int i, int j) const {
    VectorXd out(n_);
    for (int k = 0; k < n_; ++k) out(k) = (*this)(i, j, k);
    return out;
  }

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  int n_;
  std::vector<double> v_;
};

// --- per-axis kernel for product measures ----------------------------------

struct AxisTilt {
  double log_mass = 0.0;
  double mean = 0.0;
  double var = 0.0;
  double third = 0.0;  // third central moment
};

/// Normalized tilted weights of one axis; returns the log-mass.
inline double tilted_axis_weights(const QuadAxis& a, double t, double theta, Eigen::ArrayXd& w) {
  const auto x = a.x.array();
  w = a.log_weight.array() + theta * x - 0.5 * t * x.square();
  const double shift = w.maxCoeff();
  w = (w - shift).exp();
  const double mass = w.sum();
  w /= mass;
  return shift + std::log(mass);
}

inline AxisTilt tilt_axis(const QuadAxis& a, double t, double theta, bool want_third = false) {
  thread_local Eigen::ArrayXd w;
  AxisTilt out;
  out.log_mass = tilted_axis_weights(a, t, theta, w);
  const auto x = a.x.array();
  out.mean = (w * x).sum();
  const Eigen::ArrayXd d = x - out.mean;
  out.var = (w * d.square()).sum();
  if (want_third) out.third = (w * d.cube()).sum();
  return out;
}

// --- atom clouds -------------------------------------------------------------

/// Normalized tilted atom weights; returns the log-mass.
inline double tilted_atom_weights(const AtomicMeasure& m, const Tilt& tilt, VectorXd& p) {
  p = m.atoms.transpose() * tilt.theta - 0.5 * tilt.t * m.sq_norms;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    p(j) = m.weights(j) > 0.0 ? p(j) + std::log(m.weights(j)) : -std::numeric_limits<double>::infinity();
  }
  const double shift = p.maxCoeff();
  p = (p.array() - shift).exp().matrix();
  const double mass = p.sum();
  p /= mass;
  return shift + std::log(mass);
}

inline void check_tilt(int dim, const Tilt& tilt) {
  require(tilt.t >= 0.0, ErrorCode::invalid_argument, "tilt time must be non-negative");
  require(tilt.theta.size() == dim, ErrorCode::dimension_mismatch, "tilt dimension does not match measure");
  require(tilt.theta.allFinite(), ErrorCode::non_finite_state, "tilt must be finite");
}

inline double log_laplace(const MeasureHandle& h, const Tilt& tilt) {
  check_tilt(h.dim(), tilt);
  if (h.is_atomic()) {
    VectorXd p;
    return tilted_atom_weights(h.atomic(), tilt, p);
  }
  thread_local Eigen::ArrayXd w;
  double total = 0.0;
  const auto& axes = h.product().axes;
  for (std::size_t i = 0; i < axes.size(); ++i) total += tilted_axis_weights(axes[i], tilt.t, tilt.theta(i), w);
  return total;
}

inline TiltSummary tilt_summary(const MeasureHandle& h, const Tilt& tilt) {
  check_tilt(h.dim(), tilt);
  const int n = h.dim();
  TiltSummary s;
  if (h.is_atomic()) {
    const auto& m = h.atomic();
    VectorXd p;
    s.log_mass = tilted_atom_weights(m, tilt, p);
    s.mean = m.atoms * p;
    const MatrixXd centered = m.atoms.colwise() - s.mean;
    s.cov = centered * p.asDiagonal() * centered.transpose();
    s.cov = (0.5 * (s.cov + s.cov.transpose())).eval();
    s.ess = 1.0 / p.squaredNorm();
    s.degenerate = s.ess < kMinEss;
    return s;
  }
  const auto& axes = h.product().axes;
  s.mean.resize(n);
  s.cov = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const AxisTilt at = tilt_axis(axes[i], tilt.t, tilt.theta(i));
    s.log_mass += at.log_mass;
    s.mean(i) = at.mean;
    s.cov(i, i) = at.var;
  }
  return s;
}

/// xi_{ijk} = E[<x-a,u_i><x-a,u_j><x-a,u_k>] under the tilted measure, in the
/// orthonormal basis given by the columns of `basis`.
inline SymTensor3 tilt_third_tensor(const MeasureHandle& h, const Tilt& tilt, const MatrixXd& basis) {
  check_tilt(h.dim(), tilt);
  const int n = h.dim();
  require(basis.rows() == n && basis.cols() == n, ErrorCode::dimension_mismatch, "basis must be n x n");
  require((basis.transpose() * basis - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10,
          ErrorCode::invalid_argument, "basis must be orthonormal");
  SymTensor3 xi(n);
  if (h.is_atomic()) {
    const auto& m = h.atomic();
    VectorXd p;
    tilted_atom_weights(m, tilt, p);
    const VectorXd mean = m.atoms * p;
    const MatrixXd y = basis.transpose() * (m.atoms.colwise() - mean);  // n x N
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const Eigen::ArrayXd wij = p.array() * y.row(i).transpose().array() * y.row(j).transpose().array();
        for (int k = j; k < n; ++k) {
          const double v = (wij * y.row(k).transpose().array()).sum();
          xi(i, j, k) = xi(i, k, j) = xi(j, i, k) = xi(j, k, i) = xi(k, i, j) = xi(k, j, i) = v;
        }
      }
    }
    return xi;
  }
  // Independent centered coordinates: only diagonal third moments survive in
  // the standard basis, so xi_{abc} = sum_i kappa_i U_ia U_ib U_ic.
  const auto& axes = h.product().axes;
  VectorXd kappa(n);
  for (int i = 0; i < n; ++i) kappa(i) = tilt_axis(axes[i], tilt.t, tilt.theta(i), true).third;
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      for (int c = b; c < n; ++c) {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += kappa(i) * basis(i, a) * basis(i, b) * basis(i, c);
        xi(a, b, c) = xi(a, c, b) = xi(b, a, c) = xi(b, c, a) = xi(c, a, b) = xi(c, b, a) = v;
      }
    }
  }
  return xi;
}

/// The tilted measure mu_{t,theta} itself, in the same representation.
inline MeasureHandle tilted_measure(const MeasureHandle& h, const Tilt& tilt) {
  check_tilt(h.dim(), tilt);
  MeasureHandle out = h;
  out.family = Family::custom;
  if (h.is_atomic()) {
    VectorXd p;
    tilted_atom_weights(h.atomic(), tilt, p);
    out.payload = make_atoms(h.atomic().atoms, p);
    return out;
  }
  ProductQuadMeasure m = h.product();
  Eigen::ArrayXd w;
  for (int i = 0; i < m.dim(); ++i) {
    QuadAxis& a = m.axes[i];
    tilted_axis_weights(a, tilt.t, tilt.theta(i), w);
    // Same reweighting applied to the density keeps density and weights consistent.
    const Eigen::ArrayXd ratio = w / a.weight.array();
    a.density = (a.density.array() * ratio).matrix();
    a.weight = w.matrix();
    a.log_weight = w.log().matrix();
    a.cdf = cumulative(a.weight);
  }
  out.payload = std::move(m);
  return out;
}

struct InversionOptions {
  double tol = 1e-10;
  int max_iter = 200;
};

/// Solves a(t, theta) = target by damped Newton on the strictly convex
/// Lambda_t(theta) - <theta, target>, with the exact Hessian A(t, theta).
inline VectorXd invert_grad_laplace(const MeasureHandle& h, double t, const VectorXd& target,
                                    const InversionOptions& opts = {}) {
  const int n = h.dim();
  require(target.size() == n, ErrorCode::dimension_mismatch, "target dimension does not match measure");
  require(target.allFinite(), ErrorCode::invalid_argument, "target must be finite");
  // Hulls we can describe exactly: grid boxes and intervals on the line.
  constexpr double kMargin = 1e-8;
  if (h.is_product()) {
    const auto& axes = h.product().axes;
    for (int i = 0; i < n; ++i) {
      require(target(i) > axes[i].lo + kMargin && target(i) < axes[i].hi - kMargin, ErrorCode::not_interior,
              "target is not interior to the support hull");
    }
  } else if (n == 1) {
    const auto& atoms = h.atomic().atoms;
    require(target(0) > atoms.minCoeff() + kMargin && target(0) < atoms.maxCoeff() - kMargin,
            ErrorCode::not_interior, "target is not interior to the support hull");
  }

  VectorXd theta = VectorXd::Zero(n);
  auto objective = [&](const VectorXd& th) { return log_laplace(h, Tilt{t, th}) - th.dot(target); };
  double value = objective(theta);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const TiltSummary s = tilt_summary(h, Tilt{t, theta});
    const VectorXd grad = s.mean - target;
    if (grad.norm() < opts.tol) return theta;
    Eigen::LDLT<MatrixXd> ldlt(s.cov);
    VectorXd step = -ldlt.solve(grad);
    if (!step.allFinite() || ldlt.info() != Eigen::Success) step = -grad;
    const double slope = grad.dot(step);
    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const VectorXd trial = theta + scale * step;
      const double trial_value = objective(trial);
      const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value));
      if (std::isfinite(trial_value) && trial_value <= value + 1e-4 * scale * slope + noise) {
        theta = trial;
        value = trial_value;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
  }
  const VectorXd residual = tilt_summary(h, Tilt{t, theta}).mean - target;
  require(residual.norm() < opts.tol * 10.0, ErrorCode::no_convergence,
          "barycenter inversion did not converge; target may be too close to the hull boundary");
  return theta;
}

}  // namespace loclab
