#pragma once

#include "symlms/types.hpp"

namespace symlms {

/// Jacobian of the scalar set inversion. Convention:
///   jac(m-1, l-1) = d theta_l / d lambda_m
/// (rows index coefficients, columns index roots).
struct SensitivityMatrix {
  Matrix jac;
};

/// Sensitivity of the factors {theta_l} to the coefficients lambda (D = 1):
///   d theta_l / d lambda_m = (-1)^{L-m} theta_l^{L-m} / d_l,
///   d_l = prod_{i != l} (theta_i - theta_l),
/// from implicit differentiation of prod_i (theta_i - t) at t = theta_l;
/// validated against central finite differences. Throws RepeatedRootError
/// when the smallest pairwise gap is below min_gap * (1 + max |theta|): the
/// sensitivity is infinite at a repeated factor.
SensitivityMatrix root_sensitivity(const Vector& theta, double min_gap = 1e-9);

}  // namespace symlms
