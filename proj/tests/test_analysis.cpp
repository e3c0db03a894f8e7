#include "symlms/analysis.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "symlms/errors.hpp"
#include "symlms/rng.hpp"
#include "symlms/transform.hpp"

using namespace symlms;

namespace {

Matrix column(std::initializer_list<double> values) {
  Matrix m(static_cast<int>(values.size()), 1);
  int i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

// random symmetric positive semi-definite matrix
Matrix random_psd(int n, RngStream& rng) {
  const Matrix a = oracle::random_matrix(n, n, rng);
  return a * a.transpose();
}

}  // namespace

TEST(MomentMatrix, DoubleFactorials) {
  const Matrix q1 = moment_matrix_q(1);
  EXPECT_DOUBLE_EQ(q1(0, 0), 1.0);
  const Matrix q2 = moment_matrix_q(2);
  EXPECT_DOUBLE_EQ(q2(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(q2(1, 1), 3.0);
  const Matrix q3 = moment_matrix_q(3);
  EXPECT_DOUBLE_EQ(q3(2, 2), 15.0);
}

TEST(NoiseCovariance, ClosedFormPair) {
  Vector theta(2);
  theta << 1, 2;
  const Matrix r = noise_covariance_r_closed_form(theta, 1.0);
  EXPECT_DOUBLE_EQ(r(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(r(1, 1), 78.0);  // 15 (1 + 4) + 3
  const Matrix zero = noise_covariance_r_closed_form(theta, 0.0);
  EXPECT_DOUBLE_EQ(zero.cwiseAbs().maxCoeff(), 0.0);
  Vector three(3);
  three << 1, 2, 3;
  EXPECT_THROW(noise_covariance_r_closed_form(three, 1.0), std::invalid_argument);
}

TEST(NoiseCovariance, MonteCarloMatchesClosedFormDiagonal) {
  Vector theta(2);
  theta << 1, 3;
  const double sigma = 0.5;
  const Matrix closed = noise_covariance_r_closed_form(theta, sigma);
  const MonteCarloMatrix mc =
      noise_covariance_r_mc(theta, NoiseModel::gaussian(sigma), 400000, 101);
  for (int i = 0; i < 2; ++i)
    EXPECT_LE(std::abs(mc.value(i, i) - closed(i, i)), 3.0 * mc.std_error(i, i) + 1e-12) << i;
  // The closed form keeps only the diagonal; the true cross-covariance is
  // E[psi^4] sigma^2 (theta_1 + theta_2) = 3 sigma^2 (theta_1 + theta_2),
  // by expanding E[psi^3 w_1 w_2] over the zero-mean independent noises.
  const double cross = 3.0 * sigma * sigma * (theta[0] + theta[1]);
  EXPECT_LE(std::abs(mc.value(0, 1) - cross), 3.0 * mc.std_error(0, 1));
  EXPECT_LE(std::abs(mc.value(1, 0) - cross), 3.0 * mc.std_error(1, 0));
}

TEST(Lyapunov, DiagonalAndOffDiagonal) {
  EXPECT_TRUE(lyapunov_solve(Matrix::Identity(2, 2), 2.0 * Matrix::Identity(2, 2))
                  .isApprox(Matrix::Identity(2, 2), 1e-12));
  Matrix q = Matrix::Zero(2, 2);
  q(0, 0) = 1.0;
  q(1, 1) = 3.0;
  Matrix r = Matrix::Zero(2, 2);
  r(0, 0) = 2.0;
  r(1, 1) = 78.0;
  const Matrix s = lyapunov_solve(q, r);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(1, 1), 13.0, 1e-12);
  r(0, 1) = r(1, 0) = 4.0;
  EXPECT_NEAR(lyapunov_solve(q, r)(0, 1), 1.0, 1e-12);  // 4 / (1 + 3)
}

TEST(Lyapunov, ResidualOnRandomSystems) {
  RngStream rng(7, 0);
  for (int n = 2; n <= 8; ++n) {
    const Matrix q = random_psd(n, rng) + Matrix::Identity(n, n);
    const Matrix r = random_psd(n, rng);
    const Matrix s = lyapunov_solve(q, r);
    const double resid = (q * s + s * q - r).norm();
    EXPECT_LE(resid, 1e-10 * (1.0 + r.norm())) << "n=" << n;
  }
  EXPECT_THROW(lyapunov_solve(-Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
               std::invalid_argument);
}

TEST(DeltaCovariance, EfficiencyLossTrace) {
  Vector theta(2);
  theta << 1, 3;
  const double sigma = 0.1;
  const Matrix q = moment_matrix_q(2);
  const Matrix r = noise_covariance_r_closed_form(theta, sigma);
  const Matrix s = lyapunov_solve(q, r);
  const DeltaCovariance d = delta_covariance(s, theta);
  // (6 sigma^2 (theta_1^2 + theta_2^2) + sigma^4) / (theta_1 - theta_2)^2
  EXPECT_NEAR(d.trace, 0.150025, 1e-9);
  Eigen::SelfAdjointEigenSolver<Matrix> es(d.sigma_bar);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  EXPECT_TRUE(d.sigma_bar.isApprox(d.sigma_bar.transpose(), 1e-12));
}

TEST(DeltaCovariance, SymmetricMembersReachTheEfficiencyFloor) {
  // For theta_1 = -theta_2 = s the trace is 3 sigma^2 + sigma^4 / (4 s^2),
  // decreasing to the floor of three times the classical variance.
  const double sigma = 0.3;
  double last = std::numeric_limits<double>::infinity();
  for (double scale : {10.0, 100.0, 1000.0}) {
    Vector theta(2);
    theta << -scale, scale;
    const Matrix s =
        lyapunov_solve(moment_matrix_q(2), noise_covariance_r_closed_form(theta, sigma));
    const double trace = delta_covariance(s, theta).trace;
    const double expected = 3.0 * sigma * sigma + std::pow(sigma, 4) / (4.0 * scale * scale);
    EXPECT_NEAR(trace, expected, 1e-9 * expected);
    EXPECT_LT(trace, last);
    last = trace;
  }
  EXPECT_NEAR(last, 3.0 * sigma * sigma, 1e-6);
}

TEST(Bayes, UpdateArithmetic) {
  Vector pi(2), ll(2);
  pi << 0.5, 0.5;
  ll << std::log(0.2), std::log(0.6);
  const Vector post = bayes_update(pi, ll);
  EXPECT_NEAR(post[0], 0.25, 1e-12);
  EXPECT_NEAR(post[1], 0.75, 1e-12);
  EXPECT_NEAR(post.sum(), 1.0, 1e-12);
}

TEST(Bayes, PointMassAndSymmetry) {
  Vector point(2), ll(2);
  point << 1.0, 0.0;
  ll << std::log(0.1), std::log(0.9);
  const Vector post = bayes_update(point, ll);
  EXPECT_NEAR(post[0], 1.0, 1e-12);
  Vector uniform(2), equal(2);
  uniform << 0.5, 0.5;
  equal << -3.7, -3.7;
  const Vector sym = bayes_update(uniform, equal);
  EXPECT_NEAR(sym[0], 0.5, 1e-12);
  Vector none(2);
  none << -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity();
  EXPECT_THROW(bayes_update(uniform, none), std::invalid_argument);
}

TEST(MapError, PointMassPriorHasZeroError) {
  Vector pi(2);
  pi << 1.0, 0.0;
  const auto rep = map_error_probability(pi, column({0, 2}), NoiseModel::gaussian(0.5), 20000, 3);
  EXPECT_DOUBLE_EQ(rep.p_error, 0.0);
  EXPECT_DOUBLE_EQ(rep.anonymity, 0.0);
}

TEST(MapError, UniformPriorIndistinguishableRows) {
  Vector pi(2);
  pi << 0.5, 0.5;
  const auto rep =
      map_error_probability(pi, Matrix::Zero(2, 1), NoiseModel::gaussian(1.0), 100000, 5);
  EXPECT_LE(std::abs(rep.p_error - 0.5), rep.ci_halfwidth);
  EXPECT_LE(std::abs(rep.anonymity - 1.0), 2.0 * rep.ci_halfwidth);
  EXPECT_LE(rep.p_error, 0.5 + rep.ci_halfwidth);
}

TEST(MapError, MonotoneInNoise) {
  Vector pi(2);
  pi << 0.5, 0.5;
  double last = -1.0;
  for (double sigma : {0.1, 0.3, 1.0, 3.0}) {
    const auto rep =
        map_error_probability(pi, column({0, 2}), NoiseModel::gaussian(sigma), 100000, 7);
    EXPECT_GE(rep.p_error, last - 0.01) << "sigma " << sigma;
    last = rep.p_error;
  }
  EXPECT_GT(last, 0.2);  // large noise approaches the uniform limit
}

TEST(Blackwell, IdentityKernelKeepsQuantitiesClose) {
  Vector pi(2);
  pi << 0.5, 0.5;
  const auto rep = blackwell_compare(column({1, 3}), NoiseModel::gaussian(1.0),
                                     GarbleKernel::identity(), pi, 100000, 11);
  EXPECT_LE(std::abs(rep.base.p_error - rep.garbled.p_error),
            3.0 * (rep.base.ci_halfwidth + rep.garbled.ci_halfwidth));
  EXPECT_LE(std::abs(rep.trace_base - rep.trace_garbled),
            4.0 * (rep.trace_base_se + rep.trace_garbled_se));
}

TEST(Blackwell, GaussianSpreadIsOrdered) {
  Vector pi(2);
  pi << 0.5, 0.5;
  const auto rep = blackwell_compare(column({1, 3}), NoiseModel::gaussian(1.0),
                                     GarbleKernel::add_gaussian(1.0), pi, 150000, 13);
  EXPECT_TRUE(rep.p_error_ordered);
  EXPECT_TRUE(rep.cov_ordered);
  EXPECT_TRUE(rep.trace_ordered);
  EXPECT_LT(rep.base.p_error, rep.garbled.p_error);
  EXPECT_LT(rep.trace_base, rep.trace_garbled);
  EXPECT_GE(rep.min_eig_diff, -rep.eig_slack);
}

TEST(EmpiricalCovariance, NoiselessVanishes) {
  SystemSpec spec;
  spec.L = 2;
  spec.D = 1;
  spec.theta_true = column({1, 3});
  spec.input = InputModel::gaussian(1.0);
  spec.noise = NoiseModel::gaussian(0.0);
  FilterConfig fc;
  fc.mode = FilterMode::SymScalar;
  fc.eps = 1e-4;
  fc.init_theta = spec.theta_true;
  const auto emp =
      empirical_asymptotic_covariance(spec, PermutationModel::uniform(), fc, 5000, 8, 17);
  EXPECT_LE(emp.lambda_cov.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(emp.theta_cov.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Tracking, FrozenChainMatchesStationaryScale) {
  SystemSpec spec;
  spec.L = 2;
  spec.D = 1;
  spec.theta_true = column({1, 3});
  spec.input = InputModel::gaussian(1.0);
  spec.noise = NoiseModel::gaussian(0.05);
  HyperChain hyper;
  hyper.states = {column({1, 3}), column({1.5, 2.5})};
  hyper.generator = Matrix(2, 2);
  hyper.generator << -1, 1, 1, -1;
  hyper.initial = Vector::Constant(2, 0.5);
  hyper.rate = 0.0;  // frozen: no drift
  const double eps = 4e-4;
  const double frozen = tracking_mse(spec, hyper, eps, 100000, 4, 19);
  hyper.rate = 100.0 * eps;
  const double fast = tracking_mse(spec, hyper, eps, 100000, 4, 19);
  EXPECT_LT(frozen, fast);
  EXPECT_LT(frozen, 1e-3);
}
