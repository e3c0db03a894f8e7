#pragma once

#include <vector>

#include "symlms/types.hpp"

namespace symlms {

struct ScalarInversion {
  Vector theta;                    // real parts, ascending
  std::vector<bool> complex_root;  // aligned with theta
  bool any_complex = false;
};

/// Factors of s^L + sum_l lambda_l s^{L-l}, i.e. the unique set {theta_l}
/// with prod (s + theta_l) matching the coefficients. Computed via balanced
/// companion-matrix eigenvalues; roots with |imag| >= 1e-8*(1+|real|) are
/// flagged complex and their real parts reported.
ScalarInversion invert_scalar(const Vector& lambda);

struct VectorInversionOptions {
  double condition_limit = 1e10;  // IllConditionedError above this
  bool refine = true;             // Gauss-Newton polish of the column solves (D >= 2)
  int max_refine_iterations = 12;
};

struct VectorInversion {
  ParameterSet theta;  // canonical order
  bool any_complex = false;
  std::vector<double> condition_numbers;  // one per column solve, m = 2..D
  int refine_iterations = 0;
};

/// Invert a full list of coefficient blocks (degrees 1..L) back to the
/// parameter set. Column 1 comes from invert_scalar on the first entries of
/// the blocks; each later column m solves the LxL linear system matching the
/// coefficient of t^{m-1} in every block given the earlier columns. The
/// sequential solution then seeds a Gauss-Newton refinement of
/// min_theta ||full_transform(theta) - lambda||^2, which is a no-op at exact
/// coefficients but stops first-order errors from compounding across columns.
VectorInversion invert_vector(const std::vector<CoefficientBlock>& lambda, int dim,
                              const VectorInversionOptions& options = {});

}  // namespace symlms
