#pragma once

#include <vector>

#include "symlms/types.hpp"

namespace symlms {

/// Degree-l part of the symmetric transform of the row collection `members`
/// (L rows of length D): the sum over all size-l subsets of the l-fold
/// discrete convolution of the chosen rows. Output length l*(D-1)+1.
/// Computed by the prefix DP that adds one member at a time, never by subset
/// enumeration. The rows are canonically sorted first, so the result is
/// bitwise identical under any permutation of the input collection.
CoefficientBlock elementary_convolution(const Matrix& members, int degree);

/// All blocks of degrees 1..L in one DP sweep.
std::vector<CoefficientBlock> full_transform(const Matrix& members);

/// D = 1 convenience: the elementary symmetric values e_1..e_L of `values`.
Vector scalar_transform(const Vector& values);

/// Monomial symmetric functions of theta for degrees 1..L. The entry of
/// degree l at multiset mu is the sum over size-l subsets {i_1<...<i_l} and
/// over the distinct orderings (p_1..p_l) of mu of prod_j theta(i_j, p_j).
std::vector<MonomialBlock> monomial_transform(const ParameterSet& theta);

/// Collapse a monomial block onto coefficient positions: position m gathers
/// the entries whose multisets have total t-power m-1. For D <= 2 this map is
/// a bijection.
CoefficientBlock degree_projection(const MonomialBlock& eta);

/// Degree-l design matrix of the input matrix psi, sized
/// (l*(D-1)+1) x C(D+l-1, l). Column mu is the coefficient vector of the
/// l-fold convolution of the psi columns selected by mu. Defining identity:
///   elementary_convolution({psi*theta_i}, l)
///     == design_matrix(psi, l) * monomial_transform(theta)[l].values
/// exactly, for all theta.
Matrix design_matrix(const Matrix& psi, int degree);

/// Element-wise (naive) transform: component j maps to the scalar transform
/// of the j-th components of the members. Loses the cross-component pairing;
/// used only by the naive baseline.
std::vector<Vector> naive_transform(const Matrix& members);

}  // namespace symlms
