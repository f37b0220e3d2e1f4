#pragma once

// Compactly supported probability measures in two representations: weighted
// atom clouds, and products of one-dimensional quadrature grids.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace loclab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { cube, truncated_gaussian, two_atom, single_atom, asymmetric, custom };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::cube: return "cube";
    case Family::truncated_gaussian: return "truncated-gaussian";
    case Family::two_atom: return "two-atom";
    case Family::single_atom: return "single-atom";
    case Family::asymmetric: return "asymmetric";
    case Family::custom: return "custom";
  }
  return "custom";
}

inline Family family_from_string(const std::string& s) {
  if (s == "cube") return Family::cube;
  if (s == "truncated-gaussian" || s == "gaussian") return Family::truncated_gaussian;
  if (s == "two-atom") return Family::two_atom;
  if (s == "single-atom") return Family::single_atom;
  if (s == "asymmetric") return Family::asymmetric;
  if (s == "custom") return Family::custom;
  throw Error(ErrorCode::invalid_argument, "unknown measure family '" + s + "'");
}

inline constexpr double kWeightSumTol = 1e-12;

/// Finite atom cloud. Atoms are stored one per column.
struct AtomicMeasure {
  MatrixXd atoms;
  VectorXd weights;
  VectorXd sq_norms;
  VectorXd cdf;
  double support_radius = 0.0;

  int dim() const { return static_cast<int>(atoms.rows()); }
  Eigen::Index size() const { return atoms.cols(); }
};

/// One coordinate of a product measure: a uniform grid on [lo, hi] carrying
/// positive quadrature-times-density probability weights.
struct QuadAxis {
  VectorXd x;
  VectorXd weight;
  VectorXd log_weight;
  VectorXd density;  // Lebesgue density at x, normalized against the weights
  VectorXd cdf;      // running sum of weight
  double lo = 0.0;
  double hi = 0.0;

  Eigen::Index size() const { return x.size(); }
  double spacing() const { return (hi - lo) / static_cast<double>(x.size() - 1); }
};

struct ProductQuadMeasure {
  std::vector<QuadAxis> axes;

  int dim() const { return static_cast<int>(axes.size()); }
  double support_radius() const {
    double s = 0.0;
    for (const auto& a : axes) {
      const double m = std::max(std::abs(a.lo), std::abs(a.hi));
      s += m * m;
    }
    return std::sqrt(s);
  }
};

struct MeasureHandle {
  std::variant<AtomicMeasure, ProductQuadMeasure> payload;
  Family family = Family::custom;
  std::uint64_t seed = 0;

  bool is_atomic() const { return std::holds_alternative<AtomicMeasure>(payload); }
  bool is_product() const { return std::holds_alternative<ProductQuadMeasure>(payload); }
  const AtomicMeasure& atomic() const { return std::get<AtomicMeasure>(payload); }
  const ProductQuadMeasure& product() const { return std::get<ProductQuadMeasure>(payload); }

  int dim() const {
    return std::visit([](const auto& m) { return m.dim(); }, payload);
  }
  double support_radius() const {
    if (is_atomic()) return atomic().support_radius;
    return product().support_radius();
  }
  std::string id() const {
    return std::string(to_string(family)) + "/" + (is_atomic() ? "atoms" : "product") + "/d" +
           std::to_string(dim()) + "/s" + std::to_string(seed);
  }
};

struct Moments {
  VectorXd mean;
  MatrixXd cov;
};

inline VectorXd cumulative(const VectorXd& w) {
  VectorXd c(w.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) c(k) = (acc += w(k));
  return c;
}

// --- atom clouds -----------------------------------------------------------

inline AtomicMeasure make_atoms(MatrixXd atoms, VectorXd weights) {
  require(atoms.cols() >= 1, ErrorCode::invalid_argument, "atom cloud needs at least one atom");
  require(atoms.rows() >= 1, ErrorCode::invalid_argument, "atom dimension must be positive");
  require(weights.size() == atoms.cols(), ErrorCode::invalid_argument, "one weight per atom");
  require((weights.array() >= 0.0).all() && weights.allFinite(), ErrorCode::invalid_argument,
          "weights must be finite and non-negative");
  require(atoms.allFinite(), ErrorCode::invalid_argument, "atoms must be finite");
  const double total = weights.sum();
  require(total > 0.0, ErrorCode::invalid_argument, "weights must have positive mass");
  AtomicMeasure m;
  m.atoms = std::move(atoms);
  m.weights = weights / total;
  m.sq_norms = m.atoms.colwise().squaredNorm().transpose();
  m.cdf = cumulative(m.weights);
  m.support_radius = std::sqrt(m.sq_norms.maxCoeff());
  return m;
}

/// Rank of the centered atom matrix, i.e. the dimension of the affine hull.
inline int affine_rank(const AtomicMeasure& m) {
  if (m.size() < 2) return 0;
  MatrixXd centered = m.atoms.colwise() - m.atoms.col(0);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(centered);
  qr.setThreshold(1e-10);
  return static_cast<int>(qr.rank());
}

inline MeasureHandle make_single_atom(const VectorXd& x0) {
  MeasureHandle h;
  h.payload = make_atoms(x0, VectorXd::Ones(1));
  h.family = Family::single_atom;
  return h;
}

/// Two atoms on the real line; defaults to the symmetric measure on {-1, +1}.
inline MeasureHandle make_two_atom(double left = -1.0, double right = 1.0, double left_weight = 0.5) {
  require(left_weight > 0.0 && left_weight < 1.0, ErrorCode::invalid_argument,
          "two-atom weight must lie in (0, 1)");
  MatrixXd atoms(1, 2);
  atoms << left, right;
  VectorXd w(2);
  w << left_weight, 1.0 - left_weight;
  MeasureHandle h;
  h.payload = make_atoms(std::move(atoms), std::move(w));
  h.family = Family::two_atom;
  return h;
}

namespace detail {

inline double sample_family_coordinate(Family family, CounterRng& rng) {
  switch (family) {
    case Family::cube:
      return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    case Family::truncated_gaussian:
      for (;;) {
        const double z = rng.normal();
        if (std::abs(z) <= 8.0) return z;
      }
    case Family::asymmetric:
      // exponential(1) truncated to [0, 4]
      return -std::log(1.0 - rng.uniform() * (1.0 - std::exp(-4.0)));
    default:
      throw Error(ErrorCode::invalid_argument, "family has no i.i.d. sampler");
  }
}

}  // namespace detail

/// N i.i.d. samples from a named family with uniform weights.
inline MeasureHandle make_atom_cloud(Family family, int dim, Eigen::Index count, std::uint64_t seed) {
  require(dim >= 1, ErrorCode::invalid_argument, "dim must be positive");
  if (family == Family::two_atom) {
    require(dim == 1, ErrorCode::invalid_argument, "two-atom family is one-dimensional");
    auto h = make_two_atom();
    h.seed = seed;
    return h;
  }
  require(count >= dim + 1, ErrorCode::invalid_argument, "need N >= dim + 1 atoms");
  MatrixXd atoms(dim, count);
  CounterRng rng(derive_seed(seed, "measure", to_string(family), static_cast<std::uint64_t>(dim)));
  for (Eigen::Index j = 0; j < count; ++j) {
    for (int i = 0; i < dim; ++i) atoms(i, j) = detail::sample_family_coordinate(family, rng);
  }
  MeasureHandle h;
  h.payload = make_atoms(std::move(atoms), VectorXd::Constant(count, 1.0 / static_cast<double>(count)));
  h.family = family;
  h.seed = seed;
  require(affine_rank(h.atomic()) == dim, ErrorCode::affine_span, "sampled atoms do not affinely span R^n");
  return h;
}

// --- product quadrature measures -------------------------------------------

inline constexpr int kMinResolution = 16;

/// Uniform-grid quadrature weights with positive endpoint corrections
/// (17/48, 59/48, 43/48, 49/48, 1, ..., 1, 49/48, 43/48, 59/48, 17/48); fourth order.
inline VectorXd extended_simpson_weights(Eigen::Index count, double spacing) {
  VectorXd w = VectorXd::Ones(count);
  const double ends[4] = {17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0};
  for (int k = 0; k < 4; ++k) {
    w(k) = ends[k];
    w(count - 1 - k) = ends[k];
  }
  return w * spacing;
}

inline QuadAxis make_axis(double lo, double hi, int resolution, const std::function<double(double)>& density) {
  require(resolution >= kMinResolution, ErrorCode::invalid_argument,
          "resolution must be at least 16 points per axis");
  require(hi > lo, ErrorCode::invalid_argument, "axis interval must be non-empty");
  QuadAxis a;
  a.lo = lo;
  a.hi = hi;
  a.x = VectorXd::LinSpaced(resolution, lo, hi);
  const VectorXd quad = extended_simpson_weights(resolution, (hi - lo) / (resolution - 1));
  VectorXd rho(resolution);
  for (int k = 0; k < resolution; ++k) rho(k) = density(a.x(k));
  require((rho.array() > 0.0).all(), ErrorCode::invalid_argument, "axis density must be positive on the grid");
  const double mass = quad.dot(rho);
  a.density = rho / mass;
  a.weight = quad.cwiseProduct(a.density);
  a.weight /= a.weight.sum();
  a.log_weight = a.weight.array().log();
  a.cdf = cumulative(a.weight);
  return a;
}

/// Affine image x -> (x - shift) / scale of an axis.
inline QuadAxis affine_axis(const QuadAxis& a, double shift, double scale) {
  QuadAxis b = a;
  b.x = (a.x.array() - shift) / scale;
  b.lo = (a.lo - shift) / scale;
  b.hi = (a.hi - shift) / scale;
  b.density = a.density * scale;
  return b;
}

inline double axis_moment(const QuadAxis& a, int order, double centre = 0.0) {
  return a.weight.dot((a.x.array() - centre).pow(order).matrix());
}

inline MeasureHandle make_product(std::vector<QuadAxis> axes, Family family) {
  MeasureHandle h;
  h.payload = ProductQuadMeasure{std::move(axes)};
  h.family = family;
  return h;
}

/// Uniform law on the cube [-sqrt3, sqrt3]^dim.
inline MeasureHandle make_cube_measure(int dim, int resolution) {
  require(dim >= 1, ErrorCode::invalid_argument, "dim must be positive");
  const double s = std::sqrt(3.0);
  QuadAxis axis = make_axis(-s, s, resolution, [](double) { return 1.0; });
  return make_product(std::vector<QuadAxis>(dim, axis), Family::cube);
}

/// Standard normal restricted to [-truncation, truncation], then rescaled to unit variance.
inline MeasureHandle make_truncated_gaussian(int dim, double truncation = 8.0, int resolution = 2048) {
  require(dim >= 1, ErrorCode::invalid_argument, "dim must be positive");
  require(truncation >= 6.0, ErrorCode::invalid_argument, "truncation must be at least 6 sigma");
  QuadAxis axis = make_axis(-truncation, truncation, resolution, [](double x) { return std::exp(-0.5 * x * x); });
  const double m = axis_moment(axis, 1);
  const double sd = std::sqrt(axis_moment(axis, 2, m));
  axis = affine_axis(axis, m, sd);
  return make_product(std::vector<QuadAxis>(dim, axis), Family::truncated_gaussian);
}

/// Isotropic product of exponential densities truncated to [0, 4]; a skewed
/// log-concave family.
inline MeasureHandle make_asymmetric_product(int dim, int resolution = 1024) {
  require(dim >= 1, ErrorCode::invalid_argument, "dim must be positive");
  QuadAxis axis = make_axis(0.0, 4.0, resolution, [](double x) { return std::exp(-x); });
  const double m = axis_moment(axis, 1);
  const double sd = std::sqrt(axis_moment(axis, 2, m));
  axis = affine_axis(axis, m, sd);
  return make_product(std::vector<QuadAxis>(dim, axis), Family::asymmetric);
}

inline MeasureHandle make_product_family(Family family, int dim, int resolution) {
  switch (family) {
    case Family::cube: return make_cube_measure(dim, resolution);
    case Family::truncated_gaussian: return make_truncated_gaussian(dim, 8.0, resolution);
    case Family::asymmetric: return make_asymmetric_product(dim, resolution);
    default: throw Error(ErrorCode::invalid_argument, "family has no product representation");
  }
}

// --- moments and isotropization --------------------------------------------

inline Moments moments(const AtomicMeasure& m) {
  Moments out;
  out.mean = m.atoms * m.weights;
  const MatrixXd centered = m.atoms.colwise() - out.mean;
  out.cov = centered * m.weights.asDiagonal() * centered.transpose();
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

inline Moments moments(const ProductQuadMeasure& m) {
  const int n = m.dim();
  Moments out{VectorXd(n), MatrixXd::Zero(n, n)};
  for (int i = 0; i < n; ++i) {
    out.mean(i) = axis_moment(m.axes[i], 1);
    out.cov(i, i) = axis_moment(m.axes[i], 2, out.mean(i));
  }
  return out;
}

inline Moments moments(const MeasureHandle& h) {
  return std::visit([](const auto& m) { return moments(m); }, h.payload);
}

inline bool is_isotropic(const MeasureHandle& h, double tol = 1e-6) {
  const Moments mo = moments(h);
  return mo.mean.norm() <= tol &&
         (mo.cov - MatrixXd::Identity(h.dim(), h.dim())).cwiseAbs().maxCoeff() <= tol;
}

/// Affine image T(x) = Cov^{-1/2}(x - mean) with the positive-definite root.
inline MeasureHandle isotropize(const MeasureHandle& h) {
  const Moments mo = moments(h);
  const int n = h.dim();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(mo.cov);
  require(es.eigenvalues().minCoeff() > 1e-10, ErrorCode::singular_covariance,
          "covariance is singular; cannot isotropize");
  MeasureHandle out = h;
  if (h.is_atomic()) {
    const MatrixXd inv_root =
        es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    MatrixXd atoms = inv_root * (h.atomic().atoms.colwise() - mo.mean);
    out.payload = make_atoms(std::move(atoms), h.atomic().weights);
  } else {
    std::vector<QuadAxis> axes;
    axes.reserve(n);
    for (int i = 0; i < n; ++i) {
      axes.push_back(affine_axis(h.product().axes[i], mo.mean(i), std::sqrt(mo.cov(i, i))));
    }
    out.payload = ProductQuadMeasure{std::move(axes)};
  }
  return out;
}

// --- sampling ----------------------------------------------------------------

/// Index drawn by inverse CDF from a cumulative weight vector.
inline Eigen::Index sample_index(const VectorXd& cdf, double u) {
  const double* begin = cdf.data();
  const double* end = begin + cdf.size();
  const double* it = std::upper_bound(begin, end, u * cdf(cdf.size() - 1));
  return std::min<Eigen::Index>(it - begin, cdf.size() - 1);
}

/// One draw from the measure. Product measures sample each coordinate
/// independently from its grid.
inline VectorXd sample_point(const MeasureHandle& h, CounterRng& rng) {
  if (h.is_atomic()) {
    const auto& m = h.atomic();
    return m.atoms.col(sample_index(m.cdf, rng.uniform()));
  }
  const auto& p = h.product();
  VectorXd x(p.dim());
  for (int i = 0; i < p.dim(); ++i) x(i) = p.axes[i].x(sample_index(p.axes[i].cdf, rng.uniform()));
  return x;
}

}  // namespace loclab
