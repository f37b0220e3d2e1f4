#include <gtest/gtest.h>

#include <cmath>

#include "loclab/localization.hpp"

using namespace loclab;

namespace {

VectorXd vec1(double v) { return VectorXd::Constant(1, v); }

}  // namespace

TEST(SortedEigen, DescendingWithSignConvention) {
  MatrixXd a(3, 3);
  a << 2, 1, 0, 1, 3, 0, 0, 0, 0.5;
  const auto se = sorted_eigen(a);
  EXPECT_GE(se.values(0), se.values(1));
  EXPECT_GE(se.values(1), se.values(2));
  for (int j = 0; j < 3; ++j) {
    Eigen::Index arg;
    se.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(se.vectors(arg, j), 0.0);
  }
  EXPECT_LT((se.vectors * se.values.asDiagonal() * se.vectors.transpose() - a).norm(), 1e-12);
}

TEST(Localization, SingleAtomIsFrozen) {
  VectorXd x0(2);
  x0 << 0.5, -1.0;
  const auto tr = run_localization(make_single_atom(x0), 1.0, 0.01, 3);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    EXPECT_EQ(tr.cov[k].norm(), 0.0);
    EXPECT_LT((tr.a[k] - x0).norm(), 1e-15);
  }
}

TEST(Localization, GaussianEigenvalues) {
  const auto tr = run_localization(make_truncated_gaussian(3), 2.0, 1e-3, 4);
  EXPECT_TRUE(tr.isotropic);
  EXPECT_EQ(tr.validity_horizon, kInf);
  for (std::size_t k = 0; k < tr.times.size(); k += 50) {
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(tr.eigvals[k](i), 1.0 / (1.0 + tr.times[k]), 1e-3);
  }
  for (double tau : tr.stopping.tau_k) EXPECT_EQ(tau, kInf);
  EXPECT_EQ(tr.stopping.tau_star, kInf);
}

TEST(Localization, TwoAtomClosedForm) {
  const auto tr = run_localization(make_two_atom(), 2.0, 1e-3, 5);
  for (std::size_t k : {0u, 300u, 700u, 1200u, 2000u}) {
    const double c = 1.0 / std::cosh(tr.theta[k](0));
    EXPECT_NEAR(tr.cov[k](0, 0), c * c, 1e-14);
    EXPECT_NEAR(tr.a[k](0), std::tanh(tr.theta[k](0)), 1e-14);
  }
}

TEST(Localization, EigenConsistencyAndLichnerowicz) {
  const auto h = make_cube_measure(3, 256);
  const auto tr = run_localization(h, 1.0, 1e-3, 6);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const MatrixXd& u = tr.eigvecs[k];
    EXPECT_LT((u * tr.eigvals[k].asDiagonal() * u.transpose() - tr.cov[k]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((u.transpose() * u - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GT(tr.eigvals[k](2), -1e-10);
    if (tr.times[k] >= 0.05) {
      EXPECT_LE(tr.eigvals[k](0), (1 + 1e-3) / tr.times[k]);
    }
  }
}

TEST(Localization, StoppingRecordWitnessed) {
  // Non-isotropic two-atom law at +-2 starts with lambda = 4.
  const auto h = make_two_atom(-2.0, 2.0);
  const auto tr = run_localization(h, 1.0, 1e-3, 7);
  EXPECT_FALSE(tr.isotropic);
  EXPECT_EQ(tr.stopping.tau_star, 0.0);
  EXPECT_EQ(tr.stopping.tau_k[0], 0.0);
  const auto tr2 = run_localization(make_two_atom(), 1.0, 1e-3, 7);
  EXPECT_EQ(tr2.stopping.tau_star, kInf);
  // A generic crossing lands on the grid and is witnessed by the stored spectrum.
  MatrixXd atoms(1, 3);
  atoms << -3.0, 0.0, 3.0;
  MeasureHandle m;
  m.payload = make_atoms(atoms, VectorXd::Constant(3, 1.0 / 3));
  const auto tr3 = run_localization(m, 1.0, 1e-3, 8);
  if (tr3.stopping.tau_star < kInf) {
    const std::size_t k = static_cast<std::size_t>(std::lround(tr3.stopping.tau_star / 1e-3));
    EXPECT_GE(tr3.eigvals[k](0), 2.0);
    if (k > 0) {
      EXPECT_LT(tr3.eigvals[k - 1](0), 2.0);
    }
  }
}

TEST(Localization, AtomValidityHorizon) {
  const auto h = make_atom_cloud(Family::cube, 2, 400, 9);
  const auto tr = run_localization(h, 20.0, 1e-2, 10);
  EXPECT_LT(tr.validity_horizon, 20.0);
  EXPECT_GT(tr.validity_horizon, 0.0);
}

TEST(SMap, IdentityAtTimeZero) {
  const auto h = make_cube_measure(2, 256);
  const auto path = sample_brownian_path(2, 1.0, 1e-2, 11);
  VectorXd xi(2);
  xi << 0.4, -1.1;
  EXPECT_LT((eval_S(h, xi, 0.0, path) - xi).norm(), 1e-8);
}

TEST(SMap, GaussianClosedForm) {
  // For the Gaussian, a(t, theta) = theta / (1 + t), so S_t(xi) = xi + int_0^t dw / (1 + s).
  const auto h = make_truncated_gaussian(2);
  const auto path = sample_brownian_path(2, 1.0, 1e-3, 12);
  VectorXd xi(2);
  xi << 0.3, -0.2;
  VectorXd oracle = xi;
  for (std::size_t k = 0; k < path.steps(); ++k) {
    const double mid = 0.5 * (path.times[k] + path.times[k + 1]);
    oracle += (path.values[k + 1] - path.values[k]) / (1.0 + mid);
  }
  EXPECT_LT((eval_S(h, xi, 1.0, path) - oracle).norm(), 1e-4);
}

TEST(SMap, StaysInsideCube) {
  const auto h = make_cube_measure(2, 128);
  CounterRng rng(13);
  const double s = std::sqrt(3.0);
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd xi(2);
    xi << (2 * rng.uniform() - 1) * 1.5, (2 * rng.uniform() - 1) * 1.5;
    const auto path = sample_brownian_path(2, 1.0, 2e-2, 200 + rep);
    const VectorXd out = eval_S(h, xi, 1.0, path);
    EXPECT_LT(out.cwiseAbs().maxCoeff(), s);
  }
}

TEST(CouplingLaw, SingleAtomAgreesPathwise) {
  VectorXd x0(1);
  x0 << 0.7;
  EnsembleOptions opts;
  opts.dt = 1e-2;
  const auto r = verify_coupling_law(make_single_atom(x0), vec1(0.1), {0.5, 1.0}, 1000, 1, opts);
  EXPECT_TRUE(r.pass);
  // Rounding-level differences can reorder a single pair of samples.
  EXPECT_LE(r.details["ks_distance"].get<double>(), 2.0 / 1000);
  EXPECT_LT(r.details["worst_z"].get<double>(), 1e-9);
}

TEST(CouplingLaw, GaussianVariance) {
  EnsembleOptions opts;
  opts.dt = 1e-2;
  const auto h = make_truncated_gaussian(1, 8.0, 512);
  const auto r = verify_coupling_law(h, vec1(0.0), {1.0}, 2000, 2, opts);
  EXPECT_TRUE(r.pass) << r.details.dump();
  // Independent check of Var(theta_1) = t + t^2 = 2.
  std::vector<double> v(2000);
  for (std::size_t p = 0; p < v.size(); ++p) {
    const auto path = sample_brownian_path(1, 1.0, 1e-2, path_seed(2, p));
    const double th = solve_flow(h, vec1(0.0), path).theta.back()(0);
    v[p] = th * th;
  }
  const auto m = mean_se(v);
  EXPECT_NEAR(m.mean, 2.0, 4 * m.se);
}

TEST(CouplingLaw, TwoAtomTiltedMean) {
  EnsembleOptions opts;
  opts.dt = 1e-2;
  const auto h = make_two_atom();
  const auto r = verify_coupling_law(h, vec1(0.3), {3.0}, 2000, 3, opts);
  EXPECT_TRUE(r.pass) << r.details.dump();
  std::vector<double> v(2000);
  for (std::size_t p = 0; p < v.size(); ++p) {
    const auto path = sample_brownian_path(1, 3.0, 1e-2, path_seed(3, p));
    v[p] = solve_flow(h, vec1(0.3), path).theta.back()(0) / 3.0 - 0.1;
  }
  const auto m = mean_se(v);
  EXPECT_NEAR(m.mean, std::tanh(0.3), 4 * m.se);
}

TEST(Martingale, BarycenterOfCenteredMeasure) {
  EnsembleOptions opts;
  opts.dt = 1e-2;
  const auto r = martingale_residuals(make_cube_measure(2, 128), MartingaleQuantity::barycenter, std::nullopt,
                                      {{0.0, 0.5}, {0.0, 1.0}, {0.5, 1.0}}, 1000, 4, opts);
  EXPECT_TRUE(r.pass) << r.lhs;
}

TEST(Martingale, SMapAtOriginForSymmetricMeasure) {
  EnsembleOptions opts;
  opts.dt = 1e-2;
  const auto r = martingale_residuals(make_two_atom(), MartingaleQuantity::s_map, vec1(0.0), {{0.0, 1.0}}, 1000, 5,
                                      opts);
  EXPECT_TRUE(r.pass) << r.lhs;
}

TEST(Martingale, TwoAtomResiduals) {
  EnsembleOptions opts;
  opts.dt = 5e-3;
  const auto r = martingale_residuals(make_two_atom(), MartingaleQuantity::barycenter, std::nullopt, {{0.5, 1.5}},
                                      5000, 6, opts);
  EXPECT_TRUE(r.pass) << r.lhs;
  const auto s = martingale_residuals(make_two_atom(), MartingaleQuantity::s_map, vec1(0.4), {{0.5, 1.5}}, 5000, 7,
                                      opts);
  EXPECT_TRUE(s.pass) << s.lhs;
}

TEST(Martingale, RejectsExteriorXi) {
  EXPECT_THROW(martingale_residuals(make_two_atom(), MartingaleQuantity::s_map, vec1(1.5), {{0.0, 1.0}}, 10, 1),
               Error);
}

TEST(CovSde, SingleAtomIsZero) {
  VectorXd x0(2);
  x0 << 1.0, 0.0;
  const auto h = make_single_atom(x0);
  const auto path = sample_brownian_path(2, 0.2, 1e-3, 8);
  const auto r = verify_cov_sde(h, run_localization(h, path), path, 0.1, 0.2);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(CovSde, TwoAtomPassesAndResidualRatioHalves) {
  const auto h = make_two_atom();
  const auto path = sample_brownian_path(1, 0.2, 1e-4, 9);
  const auto fine = bisect_brownian_path(path, 10);
  const auto coarse = verify_cov_sde(h, run_localization(h, path), path, 0.1, 0.2);
  const auto half = verify_cov_sde(h, run_localization(h, fine), fine, 0.1, 0.2);
  EXPECT_TRUE(coarse.pass);
  EXPECT_TRUE(half.pass);
  const double factor = half.details["ratio"].get<double>() / coarse.details["ratio"].get<double>();
  EXPECT_GT(factor, 0.35);
  EXPECT_LT(factor, 0.65);
}

TEST(CovSde, ProductMeasure) {
  const auto h = make_asymmetric_product(2, 256);
  const auto path = sample_brownian_path(2, 0.3, 1e-4, 11);
  const auto r = verify_cov_sde(h, run_localization(h, path), path, 0.1, 0.3);
  EXPECT_TRUE(r.asserted);
  EXPECT_TRUE(r.pass) << r.lhs << " " << r.rhs;
}

TEST(StoppingTails, GaussianNeverStops) {
  const auto t = estimate_stopping_tails(make_truncated_gaussian(2, 8.0, 256), {1, 2}, {0.25, 0.5}, 200, 12, 1e-2);
  for (const auto& row : t.hits)
    for (std::size_t c : row) EXPECT_EQ(c, 0u);
  EXPECT_TRUE(t.report.pass);
}

TEST(StoppingTails, MonotoneInTime) {
  // Wide three-atom law: lambda_1 starts at 6 and decays along the paths.
  MatrixXd atoms(1, 3);
  atoms << -3.0, 0.0, 3.0;
  MeasureHandle h;
  h.payload = make_atoms(atoms, VectorXd::Constant(3, 1.0 / 3));
  const auto t = estimate_stopping_tails(h, {1}, {0.25, 0.5}, 500, 13, 1e-2);
  EXPECT_GE(t.freq(0, 1), t.freq(0, 0));
  EXPECT_TRUE(t.report.pass);
}

TEST(CovarianceBound, QuadratureFamiliesAlongPaths) {
  for (auto h : {make_cube_measure(2, 128), make_truncated_gaussian(2, 8.0, 256), make_asymmetric_product(2, 256)}) {
    const auto r = check_covariance_bound(h, 1.0, 1e-2, 16, 21);
    EXPECT_TRUE(r.pass) << h.id() << " " << r.lhs;
    EXPECT_TRUE(r.asserted);
  }
}

TEST(CovarianceBound, GaussianIsBelowTheBound) {
  // lambda_1 = 1/(1+t), so t lambda_1 peaks at t_max / (1 + t_max).
  const auto r = check_covariance_bound(make_truncated_gaussian(1, 8.0, 256), 1.0, 1e-2, 4, 22);
  EXPECT_NEAR(r.lhs, 0.5, 1e-6);
}

TEST(CovarianceBound, AtomsRecordedOnly) {
  const auto r = check_covariance_bound(make_two_atom(-2.0, 2.0), 1.0, 1e-2, 4, 23);
  EXPECT_FALSE(r.asserted);
}
