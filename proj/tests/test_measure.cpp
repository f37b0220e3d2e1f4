#include <gtest/gtest.h>

#include <cmath>

#include "loclab/measure.hpp"

using namespace loclab;

namespace {

// Independent moment oracle: plain trapezoid on a very fine grid.
double trapezoid_moment(double lo, double hi, int order, double (*rho)(double)) {
  const int n = 200000;
  const double h = (hi - lo) / n;
  double mass = 0.0, mom = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    mass += w * rho(x);
    mom += w * rho(x) * std::pow(x, order);
  }
  return mom / mass;
}

}  // namespace

TEST(Cube, SecondAndFourthMoments) {
  const auto h = make_cube_measure(1, 1024);
  const auto& axis = h.product().axes[0];
  EXPECT_NEAR(axis_moment(axis, 2), 1.0, 1e-6);
  // int_{-s}^{s} x^4 / (2s) dx = s^4 / 5 with s = sqrt3
  EXPECT_NEAR(axis_moment(axis, 4), 9.0 / 5.0, 1e-6);
}

TEST(Cube, IdentityCovariance) {
  const auto mo = moments(make_cube_measure(3, 1024));
  EXPECT_LT(mo.mean.norm(), 1e-12);
  EXPECT_LT((mo.cov - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Cube, RejectsCoarseResolution) {
  try {
    make_cube_measure(2, 15);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
}

TEST(Cube, WeightsAreProbabilityVectors) {
  const auto h = make_cube_measure(2, 64);
  for (const auto& a : h.product().axes) {
    EXPECT_NEAR(a.weight.sum(), 1.0, 1e-12);
    EXPECT_GT(a.weight.minCoeff(), 0.0);
  }
}

TEST(TruncatedGaussian, UnitVarianceAndFourthMoment) {
  const auto h = make_truncated_gaussian(1, 8.0, 2048);
  const auto& axis = h.product().axes[0];
  EXPECT_NEAR(axis_moment(axis, 2), 1.0, 1e-8);
  const double oracle =
      trapezoid_moment(-8.0, 8.0, 4, [](double x) { return std::exp(-0.5 * x * x); }) /
      std::pow(trapezoid_moment(-8.0, 8.0, 2, [](double x) { return std::exp(-0.5 * x * x); }), 2);
  EXPECT_NEAR(oracle, 3.0, 1e-5);
  EXPECT_NEAR(axis_moment(axis, 4), oracle, 1e-5);
}

TEST(TruncatedGaussian, VarianceOfSquaredNorm) {
  const auto h = make_truncated_gaussian(2, 8.0, 2048);
  double var = 0.0;
  for (const auto& a : h.product().axes) var += axis_moment(a, 4) - std::pow(axis_moment(a, 2), 2);
  EXPECT_NEAR(var, 4.0, 1e-4);
}

TEST(TruncatedGaussian, RejectsNarrowTruncation) {
  EXPECT_THROW(make_truncated_gaussian(1, 5.0, 256), Error);
}

TEST(ProductMeasure, JointMomentsFactor) {
  // E[x_i x_j] from an explicit double sum over the tensor grid.
  const auto h = make_asymmetric_product(2, 64);
  const auto& a = h.product().axes[0];
  const auto& b = h.product().axes[1];
  double joint = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) joint += a.weight(i) * b.weight(j) * a.x(i) * b.x(j);
  }
  EXPECT_NEAR(joint, axis_moment(a, 1) * axis_moment(b, 1), 1e-10);
}

TEST(AtomCloud, TwoAtom) {
  const auto h = make_two_atom();
  EXPECT_DOUBLE_EQ(h.support_radius(), 1.0);
  const auto mo = moments(h);
  EXPECT_NEAR(mo.mean(0), 0.0, 1e-15);
  EXPECT_NEAR(mo.cov(0, 0), 1.0, 1e-15);
}

TEST(AtomCloud, SingleAtom) {
  VectorXd x0(2);
  x0 << 1.0, 0.0;
  const auto h = make_single_atom(x0);
  EXPECT_EQ(h.atomic().size(), 1);
  EXPECT_DOUBLE_EQ(h.support_radius(), 1.0);
  const auto mo = moments(h);
  EXPECT_EQ(mo.mean, x0);
  EXPECT_EQ(mo.cov.norm(), 0.0);
}

TEST(AtomCloud, CubeCovarianceConcentrates) {
  const auto h = make_atom_cloud(Family::cube, 4, 5000, 7);
  const auto mo = moments(h);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(mo.cov - MatrixXd::Identity(4, 4));
  EXPECT_LT(es.eigenvalues().cwiseAbs().maxCoeff(), 0.1);
  EXPECT_NEAR(h.atomic().weights.sum(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(h.support_radius(), h.atomic().atoms.colwise().norm().maxCoeff());
}

TEST(AtomCloud, DeterministicInSeed) {
  const auto a = make_atom_cloud(Family::truncated_gaussian, 3, 200, 11);
  const auto b = make_atom_cloud(Family::truncated_gaussian, 3, 200, 11);
  const auto c = make_atom_cloud(Family::truncated_gaussian, 3, 200, 12);
  EXPECT_TRUE(a.atomic().atoms == b.atomic().atoms);
  EXPECT_FALSE(a.atomic().atoms == c.atomic().atoms);
}

TEST(AtomCloud, RequiresEnoughAtoms) {
  EXPECT_THROW(make_atom_cloud(Family::cube, 4, 4, 1), Error);
}

TEST(AtomCloud, RejectsDegenerateSpan) {
  MatrixXd atoms(2, 3);
  atoms << 0, 1, 2, 0, 1, 2;
  const AtomicMeasure m = make_atoms(atoms, VectorXd::Constant(3, 1.0 / 3));
  EXPECT_EQ(affine_rank(m), 1);
}

TEST(Isotropize, IsotropicInputUnchanged) {
  const auto h = isotropize(make_atom_cloud(Family::cube, 3, 400, 5));
  const auto again = isotropize(h);
  EXPECT_LT((again.atomic().atoms - h.atomic().atoms).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Isotropize, TwoAtomShiftsToSymmetric) {
  const auto h = isotropize(make_two_atom(0.0, 2.0));
  EXPECT_NEAR(h.atomic().atoms(0, 0), -1.0, 1e-14);
  EXPECT_NEAR(h.atomic().atoms(0, 1), 1.0, 1e-14);
}

TEST(Isotropize, WhitensAnisotropicCloud) {
  auto base = make_atom_cloud(Family::truncated_gaussian, 2, 1000, 3);
  MatrixXd atoms = base.atomic().atoms;
  atoms.row(0) *= 2.0;
  MeasureHandle h;
  h.payload = make_atoms(atoms, base.atomic().weights);
  const auto mo = moments(isotropize(h));
  EXPECT_LT(mo.mean.norm(), 1e-10);
  EXPECT_LT((mo.cov - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Isotropize, ProductMeasure) {
  const auto mo = moments(isotropize(make_asymmetric_product(3, 128)));
  EXPECT_LT(mo.mean.norm(), 1e-10);
  EXPECT_LT((mo.cov - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Isotropize, SingularCovariance) {
  VectorXd x0 = VectorXd::Ones(2);
  try {
    isotropize(make_single_atom(x0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_covariance);
  }
}

TEST(Sampling, ProductSampleMomentsMatch) {
  const auto h = make_asymmetric_product(1, 256);
  CounterRng rng(99);
  double s1 = 0, s2 = 0;
  const int n = 40000;
  for (int k = 0; k < n; ++k) {
    const double x = sample_point(h, rng)(0);
    s1 += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(3.0 / n));
}
