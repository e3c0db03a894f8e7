#include "symlms/inversion.hpp"

#include <unsupported/Eigen/Polynomials>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "symlms/errors.hpp"
#include "symlms/transform.hpp"

namespace symlms {

namespace {

// e_0..e_{n} of the given values via the in-place recurrence.
Vector elementary_values(const Vector& vals) {
  Vector e = Vector::Zero(vals.size() + 1);
  e[0] = 1.0;
  for (int i = 0; i < vals.size(); ++i) {
    for (int j = static_cast<int>(i) + 1; j >= 1; --j) e[j] += vals[i] * e[j - 1];
  }
  return e;
}

// Coefficient matrix of the column-m solves: A(l-1, j) = e_{l-1} of the
// first-column values with member j removed. Depends on column 1 only.
Matrix column_system_matrix(const Vector& col1) {
  const int L = static_cast<int>(col1.size());
  Matrix a(L, L);
  for (int j = 0; j < L; ++j) {
    Vector rest(L - 1);
    for (int i = 0, t = 0; i < L; ++i) {
      if (i != j) rest[t++] = col1[i];
    }
    const Vector e = elementary_values(rest);
    for (int l = 1; l <= L; ++l) a(l - 1, j) = e[l - 1];
  }
  return a;
}

Vector flatten_blocks(const std::vector<CoefficientBlock>& blocks) {
  int total = 0;
  for (const auto& b : blocks) total += static_cast<int>(b.values.size());
  Vector out(total);
  int at = 0;
  for (const auto& b : blocks) {
    out.segment(at, b.values.size()) = b.values;
    at += static_cast<int>(b.values.size());
  }
  return out;
}

// Analytic Jacobian of the flattened transform wrt theta entries. The
// derivative wrt theta(j, p) of the degree-l block is the degree-(l-1) block
// of the collection without member j, shifted by p.
Matrix transform_jacobian(const Matrix& theta) {
  const int L = static_cast<int>(theta.rows());
  const int D = static_cast<int>(theta.cols());
  int total = 0;
  for (int l = 1; l <= L; ++l) total += block_length(D, l);
  Matrix jac = Matrix::Zero(total, L * D);
  for (int j = 0; j < L; ++j) {
    std::vector<Vector> rest(L);
    rest[0] = Vector::Ones(1);
    {
      Matrix sub(L - 1, D);
      for (int i = 0, t = 0; i < L; ++i) {
        if (i != j) sub.row(t++) = theta.row(i);
      }
      if (L > 1) {
        auto blocks = full_transform(sub);
        for (int l = 1; l < L; ++l) rest[l] = blocks[l - 1].values;
      }
    }
    for (int p = 0; p < D; ++p) {
      int at = 0;
      for (int l = 1; l <= L; ++l) {
        const Vector& r = rest[l - 1];
        for (int a = 0; a < r.size(); ++a) jac(at + a + p, j * D + p) += r[a];
        at += block_length(D, l);
      }
    }
  }
  return jac;
}

}  // namespace

ScalarInversion invert_scalar(const Vector& lambda) {
  if (lambda.size() < 1) throw std::invalid_argument("invert_scalar: empty coefficients");
  if (!lambda.allFinite()) throw std::invalid_argument("invert_scalar: non-finite coefficients");
  const int L = static_cast<int>(lambda.size());
  // PolynomialSolver wants ascending powers: [lambda_L, ..., lambda_1, 1].
  Vector coeffs(L + 1);
  for (int l = 0; l < L; ++l) coeffs[l] = lambda[L - 1 - l];
  coeffs[L] = 1.0;
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
  solver.compute(coeffs);
  const auto& roots = solver.roots();

  std::vector<std::pair<double, bool>> factors(L);
  for (int i = 0; i < L; ++i) {
    const double re = -roots[i].real();
    const double im = roots[i].imag();
    factors[i] = {re, std::abs(im) >= 1e-8 * (1.0 + std::abs(re))};
  }
  std::sort(factors.begin(), factors.end());
  ScalarInversion out;
  out.theta.resize(L);
  out.complex_root.resize(L);
  for (int i = 0; i < L; ++i) {
    out.theta[i] = factors[i].first;
    out.complex_root[i] = factors[i].second;
    out.any_complex = out.any_complex || factors[i].second;
  }
  return out;
}

VectorInversion invert_vector(const std::vector<CoefficientBlock>& lambda, int dim,
                              const VectorInversionOptions& options) {
  const int L = static_cast<int>(lambda.size());
  if (L < 1) throw std::invalid_argument("invert_vector: no blocks");
  for (int l = 1; l <= L; ++l) {
    if (lambda[l - 1].degree != l || lambda[l - 1].values.size() != block_length(dim, l))
      throw std::invalid_argument("invert_vector: block degree/length inconsistent with (L, D)");
  }

  VectorInversion out;
  Vector lam1(L);
  for (int l = 0; l < L; ++l) lam1[l] = lambda[l].values[0];
  const ScalarInversion first = invert_scalar(lam1);
  out.any_complex = first.any_complex;

  Matrix theta = Matrix::Zero(L, dim);
  theta.col(0) = first.theta;
  if (dim > 1) {
    const Matrix a = column_system_matrix(first.theta);
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    const double cond = smin > 0.0 ? svd.singularValues()(0) / smin
                                   : std::numeric_limits<double>::infinity();
    if (!(cond < options.condition_limit)) {
      throw IllConditionedError("invert_vector: column system condition " + std::to_string(cond) +
                                " exceeds limit (near-coincident first-column roots)");
    }
    Eigen::PartialPivLU<Matrix> lu(a);
    for (int m = 1; m < dim; ++m) {
      out.condition_numbers.push_back(cond);
      Matrix partial = theta;
      partial.rightCols(dim - m).setZero();
      const auto part = full_transform(partial);
      Vector rhs(L);
      for (int l = 0; l < L; ++l) rhs[l] = lambda[l].values[m] - part[l].values[m];
      theta.col(m) = lu.solve(rhs);
    }

    if (options.refine) {
      const Vector target = flatten_blocks(lambda);
      Matrix x = theta;
      double best = (target - flatten_blocks(full_transform(x))).squaredNorm();
      for (int it = 0; it < options.max_refine_iterations; ++it) {
        const Vector resid = target - flatten_blocks(full_transform(x));
        const Matrix jac = transform_jacobian(x);
        Vector step = jac.colPivHouseholderQr().solve(resid);
        if (!step.allFinite()) break;
        Matrix trial = x;
        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 6; ++half) {
          // step is laid out member-major: entry j*D+p perturbs theta(j, p)
          for (int j = 0; j < L; ++j)
            for (int p = 0; p < dim; ++p) trial(j, p) = x(j, p) + scale * step[j * dim + p];
          const double r = (target - flatten_blocks(full_transform(trial))).squaredNorm();
          if (r <= best) {
            best = r;
            improved = true;
            break;
          }
          scale *= 0.5;
        }
        if (!improved) break;
        x = trial;
        out.refine_iterations = it + 1;
        if (step.lpNorm<Eigen::Infinity>() * scale < 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) break;
      }
      theta = x;
    }
  }

  out.theta = ParameterSet(canonical_rows(theta));
  return out;
}

}  // namespace symlms
