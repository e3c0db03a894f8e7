#pragma once

#include <Eigen/Dense>
#include <vector>

#include "symlms/multiset.hpp"

namespace symlms {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Rows of `m` sorted ascending by first component, ties broken by the
/// subsequent components. This is the canonical presentation of an unordered
/// collection of parameter vectors.
Matrix canonical_rows(const Matrix& m);

/// Unordered collection of L real D-vectors, stored row-wise. Equality is set
/// equality: two collections are equal iff their canonical presentations
/// agree entrywise.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(Matrix members);  // rejects non-finite entries

  int count() const { return static_cast<int>(members_.rows()); }
  int dim() const { return static_cast<int>(members_.cols()); }
  const Matrix& rows() const { return members_; }

  ParameterSet canonical() const { return ParameterSet(canonical_rows(members_)); }

  /// Max absolute entry difference after canonical ordering of both sides.
  double set_distance(const ParameterSet& other) const;
  bool set_equal(const ParameterSet& other, double tol) const {
    return set_distance(other) <= tol;
  }

 private:
  Matrix members_;
};

/// One degree of the symmetric transform: the coefficients of the degree-l
/// part, indexed by convolution degree (size of the member subset). Block l
/// has length l*(D-1)+1 and multiplies s^{L-l} in the two-variable polynomial.
struct CoefficientBlock {
  int degree = 0;
  Vector values;
};

/// Monomial symmetric functions of degree l: one entry per size-l multiset of
/// component indices, in MultisetTable order. Dimension C(D+l-1, l).
struct MonomialBlock {
  int degree = 0;
  int dim = 0;  // D
  Vector values;
};

}  // namespace symlms
