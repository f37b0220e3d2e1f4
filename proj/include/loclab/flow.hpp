#pragma once

// Pathwise integration of the tilt flow
//   theta_t = x + w_t + int_0^t a(s, theta_s) ds
// and of its spatial derivative M_t, which solves M' = A(t, theta_t) M, M_0 = Id.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "log_laplace.hpp"
#include "measure.hpp"
#include "random.hpp"

namespace loclab {

/// Tolerance of the fixed-step integrator used by the structural checks.
inline constexpr double kIntegrationTol = 1e-6;

/// A driving path sampled on a grid. Brownian paths have value 0 at time 0,
/// but any continuous path fits in the same container.
struct BrownianPath {
  std::vector<double> times;
  std::vector<VectorXd> values;
  std::uint64_t seed = 0;
  int dim = 0;

  std::size_t steps() const { return times.size() - 1; }
  double t_max() const { return times.back(); }

  /// Grid index of time t; throws when t is not a grid time.
  std::size_t index_of(double t) const {
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
    }
    throw Error(ErrorCode::invalid_argument, "time " + std::to_string(t) + " is not on the path grid");
  }
};

inline std::vector<double> uniform_grid(double t_max, double dt) {
  require(dt > 0.0 && dt <= t_max, ErrorCode::invalid_argument, "need 0 < dt <= t_max");
  const auto steps = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
  std::vector<double> times(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) times[k] = std::min(static_cast<double>(k) * dt, t_max);
  times.back() = t_max;
  return times;
}

/// Exact N(0, dt Id) increments; draw (step, coordinate) is keyed by the seed
/// alone, so paths are reproducible independent of threading.
inline BrownianPath sample_brownian_path(int n, double t_max, double dt, std::uint64_t seed) {
  require(n >= 1, ErrorCode::invalid_argument, "path dimension must be positive");
  BrownianPath p;
  p.times = uniform_grid(t_max, dt);
  p.seed = seed;
  p.dim = n;
  p.values.assign(p.times.size(), VectorXd::Zero(n));
  for (std::size_t k = 1; k < p.times.size(); ++k) {
    const double h = std::sqrt(p.times[k] - p.times[k - 1]);
    for (int i = 0; i < n; ++i) {
      const std::uint64_t counter = static_cast<std::uint64_t>(k - 1) * static_cast<std::uint64_t>(n) + i;
      p.values[k](i) = p.values[k - 1](i) + h * counter_normal(seed, counter);
    }
  }
  return p;
}

/// Arbitrary continuous path given by its grid values.
inline BrownianPath make_path(std::vector<double> times, std::vector<VectorXd> values) {
  require(times.size() >= 2 && times.size() == values.size(), ErrorCode::invalid_argument,
          "path needs matching times and values");
  for (std::size_t k = 1; k < times.size(); ++k) {
    require(times[k] > times[k - 1], ErrorCode::invalid_argument, "path times must be strictly increasing");
    require(values[k].size() == values[0].size(), ErrorCode::dimension_mismatch, "path values differ in size");
  }
  BrownianPath p;
  p.dim = static_cast<int>(values[0].size());
  p.times = std::move(times);
  p.values = std::move(values);
  return p;
}

/// The shift sigma_{t1}: (sigma w)_s = w_{t1 + s} - w_{t1}, with t1 = times[k1].
inline BrownianPath shift_path(const BrownianPath& p, std::size_t k1) {
  require(k1 < p.steps(), ErrorCode::invalid_argument, "shift index must leave at least one step");
  BrownianPath q;
  q.dim = p.dim;
  q.seed = p.seed;
  for (std::size_t k = k1; k < p.times.size(); ++k) {
    q.times.push_back(p.times[k] - p.times[k1]);
    q.values.push_back(p.values[k] - p.values[k1]);
  }
  q.times.front() = 0.0;
  return q;
}

/// Inserts `factor - 1` linearly interpolated points into every step. The
/// refined path is the same continuous (piecewise linear) path, so flows on
/// the two grids differ only by discretization error.
inline BrownianPath refine_path(const BrownianPath& p, int factor) {
  require(factor >= 1, ErrorCode::invalid_argument, "refinement factor must be positive");
  BrownianPath q;
  q.dim = p.dim;
  q.seed = p.seed;
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    for (int j = 0; j < factor; ++j) {
      const double s = static_cast<double>(j) / factor;
      q.times.push_back((1.0 - s) * p.times[k] + s * p.times[k + 1]);
      q.values.push_back((1.0 - s) * p.values[k] + s * p.values[k + 1]);
    }
  }
  q.times.push_back(p.times.back());
  q.values.push_back(p.values.back());
  return q;
}

/// Brownian refinement: each step gets its midpoint drawn from the Brownian
/// bridge, so the result is an exact Brownian path on the halved grid that
/// agrees with `p` on the original grid.
inline BrownianPath bisect_brownian_path(const BrownianPath& p, std::uint64_t seed) {
  BrownianPath q;
  q.dim = p.dim;
  q.seed = seed;
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    const double dt = p.times[k + 1] - p.times[k];
    VectorXd mid = 0.5 * (p.values[k] + p.values[k + 1]);
    for (int i = 0; i < p.dim; ++i) {
      mid(i) += 0.5 * std::sqrt(dt) * counter_normal(seed, static_cast<std::uint64_t>(k) * p.dim + i);
    }
    q.times.push_back(p.times[k]);
    q.values.push_back(p.values[k]);
    q.times.push_back(p.times[k] + 0.5 * dt);
    q.values.push_back(std::move(mid));
  }
  q.times.push_back(p.times.back());
  q.values.push_back(p.values.back());
  return q;
}

struct FlowTrajectory {
  std::vector<double> times;
  std::vector<VectorXd> theta;
  std::vector<MatrixXd> deriv;  // empty unless requested
  VectorXd base_point;
  std::string measure_id;
  double time_offset = 0.0;

  const VectorXd& theta_at(double t) const {
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return theta[k];
    }
    throw Error(ErrorCode::invalid_argument, "time is not on the trajectory grid");
  }
};

/// State handed to integrate_flow visitors at every grid time.
struct FlowState {
  std::size_t step;
  double t;  // path time, excluding the drift offset
  const VectorXd& theta;
  const TiltSummary& summary;  // tilt summary at (offset + t, theta)
  const MatrixXd* deriv;       // null unless derivatives are integrated
};

/// One midpoint step: the half path increment enters the midpoint state, the
/// drift is sampled at the start and the midpoint.
///   theta_mid = theta + dw/2 + (dt/2) a(t, theta)
///   theta'    = theta + dw + dt a(t + dt/2, theta_mid)
///   M'        = (Id + dt A_mid (Id + (dt/2) A_start)) M
template <class Visitor>
void integrate_flow(const MeasureHandle& h, const VectorXd& x, const BrownianPath& path, bool want_deriv,
                    double time_offset, std::size_t last_step, Visitor&& visit) {
  const int n = h.dim();
  require(path.dim == n, ErrorCode::dimension_mismatch, "path dimension does not match measure");
  require(x.size() == n, ErrorCode::dimension_mismatch, "start point dimension does not match measure");
  require(last_step <= path.steps(), ErrorCode::invalid_argument, "last step beyond path grid");
  VectorXd theta = x + path.values[0];
  MatrixXd m;
  if (want_deriv) m = MatrixXd::Identity(n, n);
  const MatrixXd eye = MatrixXd::Identity(n, n);
  TiltSummary start = tilt_summary(h, Tilt{time_offset + path.times[0], theta});
  for (std::size_t k = 0; k < last_step; ++k) {
    visit(FlowState{k, path.times[k], theta, start, want_deriv ? &m : nullptr});
    const double t = path.times[k];
    const double dt = path.times[k + 1] - t;
    const VectorXd dw = path.values[k + 1] - path.values[k];
    const VectorXd mid_theta = theta + 0.5 * dw + 0.5 * dt * start.mean;
    const TiltSummary mid = tilt_summary(h, Tilt{time_offset + t + 0.5 * dt, mid_theta});
    theta += dw + dt * mid.mean;
    if (want_deriv) m = (eye + dt * mid.cov * (eye + 0.5 * dt * start.cov)) * m;
    require(theta.allFinite() && (!want_deriv || m.allFinite()), ErrorCode::non_finite_state,
            "flow state became non-finite; reduce dt");
    start = tilt_summary(h, Tilt{time_offset + path.times[k + 1], theta});
  }
  visit(FlowState{last_step, path.times[last_step], theta, start, want_deriv ? &m : nullptr});
}

inline FlowTrajectory solve_flow(const MeasureHandle& h, const VectorXd& x, const BrownianPath& path,
                                 bool want_deriv = false, double time_offset = 0.0) {
  FlowTrajectory traj;
  traj.base_point = x;
  traj.measure_id = h.id();
  traj.time_offset = time_offset;
  traj.times = path.times;
  traj.theta.reserve(path.times.size());
  if (want_deriv) traj.deriv.reserve(path.times.size());
  integrate_flow(h, x, path, want_deriv, time_offset, path.steps(), [&](const FlowState& s) {
    traj.theta.push_back(s.theta);
    if (s.deriv) traj.deriv.push_back(*s.deriv);
  });
  return traj;
}

/// theta at grid index `step` only.
inline VectorXd flow_endpoint(const MeasureHandle& h, const VectorXd& x, const BrownianPath& path, std::size_t step,
                              double time_offset = 0.0) {
  VectorXd out;
  integrate_flow(h, x, path, false, time_offset, step, [&](const FlowState& s) {
    if (s.step == step) out = s.theta;
  });
  return out;
}

/// Integrates theta_s = y + w_s - w_t - int_s^t a(r, theta_r) dr backwards from
/// s = t to s = 0. Each backward step solves the midpoint step for its start
/// state by fixed-point iteration, so the forward flow of the result lands on y
/// up to the iteration tolerance. Returns x = theta_0 - w_0.
inline VectorXd solve_reverse_flow(const MeasureHandle& h, const VectorXd& y, const BrownianPath& path, double t,
                                   double time_offset = 0.0) {
  const int n = h.dim();
  require(path.dim == n, ErrorCode::dimension_mismatch, "path dimension does not match measure");
  require(y.size() == n, ErrorCode::dimension_mismatch, "target dimension does not match measure");
  const std::size_t last = path.index_of(t);
  VectorXd theta = y;
  for (std::size_t k = last; k-- > 0;) {
    const double tk = time_offset + path.times[k];
    const double dt = path.times[k + 1] - path.times[k];
    const VectorXd dw = path.values[k + 1] - path.values[k];
    auto step_drift = [&](const VectorXd& start) {
      const VectorXd a0 = tilt_summary(h, Tilt{tk, start}).mean;
      return tilt_summary(h, Tilt{tk + 0.5 * dt, start + 0.5 * dw + 0.5 * dt * a0}).mean;
    };
    VectorXd guess = theta - dw - dt * tilt_summary(h, Tilt{tk + 0.5 * dt, theta - 0.5 * dw}).mean;
    for (int iter = 0; iter < 100; ++iter) {
      const VectorXd next = theta - dw - dt * step_drift(guess);
      const double change = (next - guess).norm();
      guess = next;
      if (change <= 1e-15 * (1.0 + guess.norm())) break;
    }
    require(guess.allFinite(), ErrorCode::non_finite_state, "reverse flow became non-finite; reduce dt");
    theta = guess;
  }
  return theta - path.values[0];
}

// --- structural checks -------------------------------------------------------

struct PropertyResult {
  std::string name;
  bool asserted = true;
  bool pass = true;
  std::size_t violations = 0;
  double worst = 0.0;  // largest violation amount (or smallest slack when none)
};

struct FlowStructureReport {
  std::vector<PropertyResult> properties;

  bool pass() const {
    for (const auto& p : properties) {
      if (p.asserted && !p.pass) return false;
    }
    return true;
  }
  const PropertyResult& property(const std::string& name) const {
    for (const auto& p : properties) {
      if (p.name == name) return p;
    }
    throw Error(ErrorCode::invalid_argument, "unknown property " + name);
  }
};

struct FlowStructureOptions {
  double expansion_tol = 1e-9;
  double lipschitz_tol = 1e-9;
  double ratio_tol = 1e-6;  // relative, per step
  double semigroup_tol = 10.0 * kIntegrationTol;
  std::optional<double> semigroup_split;  // defaults to the middle of the path
};

/// Expansion, e^{R^2 t}-Lipschitz bound, monotone |theta^x - theta^y|/t (asserted
/// for product measures, recorded for atom clouds) and the semigroup identity,
/// over all pairs of the given points and the given grid times.
inline FlowStructureReport check_flow_structure(const MeasureHandle& h, const BrownianPath& path,
                                                const std::vector<VectorXd>& points,
                                                const std::vector<double>& t_grid,
                                                const FlowStructureOptions& opts = {}) {
  require(points.size() >= 2, ErrorCode::invalid_argument, "need at least two points");
  const double r2 = h.support_radius() * h.support_radius();
  std::vector<FlowTrajectory> flows;
  flows.reserve(points.size());
  for (const auto& x : points) flows.push_back(solve_flow(h, x, path));
  std::vector<std::size_t> idx;
  for (double t : t_grid) idx.push_back(path.index_of(t));

  PropertyResult expansion{"expansion"}, lipschitz{"lipschitz"}, ratio{"ratio-monotone"}, semigroup{"semigroup"};
  ratio.asserted = h.is_product();
  expansion.worst = lipschitz.worst = ratio.worst = semigroup.worst = -std::numeric_limits<double>::infinity();
  auto record = [](PropertyResult& p, double violation) {
    p.worst = std::max(p.worst, violation);
    if (violation > 0.0) {
      ++p.violations;
      p.pass = false;
    }
  };
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      const double d0 = (points[a] - points[b]).norm();
      for (std::size_t k : idx) {
        const double t = path.times[k];
        const double d = (flows[a].theta[k] - flows[b].theta[k]).norm();
        record(expansion, (d0 - opts.expansion_tol * (1.0 + d0)) - d);
        record(lipschitz, d - (std::exp(r2 * t) * d0 + opts.lipschitz_tol * (1.0 + d0)));
      }
      // Ratio monotonicity on every grid step with t >= dt.
      for (std::size_t k = 1; k + 1 < path.times.size(); ++k) {
        const double r_now = (flows[a].theta[k] - flows[b].theta[k]).norm() / path.times[k];
        const double r_next = (flows[a].theta[k + 1] - flows[b].theta[k + 1]).norm() / path.times[k + 1];
        record(ratio, r_next - r_now * (1.0 + opts.ratio_tol));
      }
    }
  }
  if (!ratio.asserted) ratio.pass = ratio.violations == 0;

  const std::size_t split = opts.semigroup_split ? path.index_of(*opts.semigroup_split) : path.steps() / 2;
  if (split > 0 && split < path.steps()) {
    const BrownianPath shifted = shift_path(path, split);
    for (std::size_t a = 0; a < points.size(); ++a) {
      const VectorXd& y = flows[a].theta[split];
      const VectorXd composed = flow_endpoint(h, y, shifted, shifted.steps(), path.times[split]);
      const double err = (composed - flows[a].theta.back()).norm();
      record(semigroup, err - opts.semigroup_tol);
    }
  }
  return FlowStructureReport{{expansion, lipschitz, ratio, semigroup}};
}

}  // namespace loclab
