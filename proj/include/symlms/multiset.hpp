#pragma once

#include <vector>

namespace symlms {

/// Canonical enumeration of the size-l multisets over component indices
/// {0, ..., D-1}. Entries are nondecreasing index sequences listed in
/// lexicographic order; their count is C(D+l-1, l). These index the monomial
/// symmetric functions of degree l and the columns of the degree-l design
/// matrix, so every consumer must agree on this ordering.
class MultisetTable {
 public:
  /// Shared, lazily built table for (dim, degree). Thread-safe.
  static const MultisetTable& get(int dim, int degree);

  int size() const { return static_cast<int>(members_.size()); }
  int dim() const { return dim_; }
  int degree() const { return degree_; }

  const std::vector<int>& at(int i) const { return members_[i]; }

  /// Total t-power of multiset i: sum of entries (0-based component powers).
  int t_power(int i) const { return t_power_[i]; }

  /// Index in the (dim, degree+1) table of multiset i with component p added.
  int extend(int i, int p) const { return extend_[i][p]; }

 private:
  MultisetTable(int dim, int degree);

  int dim_ = 0;
  int degree_ = 0;
  std::vector<std::vector<int>> members_;
  std::vector<int> t_power_;
  std::vector<std::vector<int>> extend_;
};

/// Length of a degree-l coefficient block for member dimension D.
inline int block_length(int dim, int degree) { return degree * (dim - 1) + 1; }

}  // namespace symlms
