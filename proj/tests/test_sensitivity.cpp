#include "symlms/sensitivity.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "symlms/errors.hpp"
#include "symlms/inversion.hpp"
#include "symlms/rng.hpp"
#include "symlms/transform.hpp"

using namespace symlms;

TEST(RootSensitivity, TwoMemberExample) {
  Vector theta(2);
  theta << 1, 2;
  const Matrix jac = root_sensitivity(theta).jac;
  EXPECT_DOUBLE_EQ(jac(0, 0), -1.0);  // d theta_1 / d lambda_1
  EXPECT_DOUBLE_EQ(jac(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(jac(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(jac(1, 1), -1.0);
}

TEST(RootSensitivity, GeneralPairFormula) {
  RngStream rng(3, 0);
  for (int rep = 0; rep < 20; ++rep) {
    Vector theta(2);
    theta << rng.gaussian() * 3.0, 0.0;
    theta[1] = theta[0] + 1.0 + rng.uniform() * 2.0;
    const Matrix jac = root_sensitivity(theta).jac;
    const double d = theta[0] - theta[1];
    EXPECT_NEAR(jac(0, 0), theta[0] / d, 1e-12 * (1.0 + std::abs(theta[0] / d)));
    EXPECT_NEAR(jac(0, 1), theta[1] / -d, 1e-12 * (1.0 + std::abs(theta[1] / d)));
    EXPECT_NEAR(jac(1, 0), 1.0 / -d, 1e-12);
    EXPECT_NEAR(jac(1, 1), 1.0 / d, 1e-12);
  }
}

TEST(RootSensitivity, RepeatedRootRejected) {
  Vector theta(2);
  theta << 1.0, 1.0 + 1e-12;
  EXPECT_THROW(root_sensitivity(theta), RepeatedRootError);
}

TEST(RootSensitivity, MatchesCentralDifferences) {
  RngStream rng(9, 0);
  for (int rep = 0; rep < 40; ++rep) {
    const int L = 2 + rng.uniform_int(4);
    Vector theta(L);
    for (int i = 0; i < L; ++i) theta[i] = 1.5 * i + rng.uniform();  // separated, ascending
    const Vector lam = scalar_transform(theta);
    const Matrix jac = root_sensitivity(theta).jac;
    const double h = 1e-6;
    for (int m = 0; m < L; ++m) {
      Vector lp = lam, lm = lam;
      lp[m] += h;
      lm[m] -= h;
      const Vector tp = invert_scalar(lp).theta;
      const Vector tm = invert_scalar(lm).theta;
      for (int l = 0; l < L; ++l) {
        const double fd = (tp[l] - tm[l]) / (2.0 * h);
        const double an = jac(m, l);
        EXPECT_LE(std::abs(fd - an), 1e-5 * (1.0 + std::abs(an)))
            << "L=" << L << " m=" << m << " l=" << l;
      }
    }
  }
}
