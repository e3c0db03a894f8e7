#include "symlms/transform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace symlms {

Matrix canonical_rows(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < m.cols(); ++c) {
      if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
    }
    return false;
  });
  Matrix out(m.rows(), m.cols());
  for (int i = 0; i < n; ++i) out.row(i) = m.row(order[i]);
  return out;
}

ParameterSet::ParameterSet(Matrix members) : members_(std::move(members)) {
  if (members_.rows() < 1 || members_.cols() < 1)
    throw std::invalid_argument("ParameterSet: needs at least one member of dimension >= 1");
  if (!members_.allFinite()) throw std::invalid_argument("ParameterSet: non-finite entry");
}

double ParameterSet::set_distance(const ParameterSet& other) const {
  if (other.count() != count() || other.dim() != dim())
    throw std::invalid_argument("ParameterSet::set_distance: shape mismatch");
  const Matrix a = canonical_rows(members_);
  const Matrix b = canonical_rows(other.members_);
  return (a - b).cwiseAbs().maxCoeff();
}

namespace {

void check_members(const Matrix& members) {
  if (members.rows() < 1 || members.cols() < 1)
    throw std::invalid_argument("transform: empty collection");
  if (!members.allFinite()) throw std::invalid_argument("transform: non-finite entry");
}

// Prefix DP over canonically sorted rows. blocks[l] accumulates the degree-l
// sum of convolutions; processing degrees high-to-low reuses the previous
// prefix in place.
std::vector<Vector> transform_blocks(const Matrix& sorted) {
  const int L = static_cast<int>(sorted.rows());
  const int D = static_cast<int>(sorted.cols());
  std::vector<Vector> blocks(L + 1);
  blocks[0] = Vector::Ones(1);
  for (int l = 1; l <= L; ++l) blocks[l] = Vector::Zero(block_length(D, l));
  for (int i = 0; i < L; ++i) {
    const auto row = sorted.row(i);
    for (int l = std::min(i + 1, L); l >= 1; --l) {
      const Vector& prev = blocks[l - 1];
      Vector& cur = blocks[l];
      for (int a = 0; a < prev.size(); ++a) {
        const double pa = prev[a];
        if (pa == 0.0) continue;
        for (int b = 0; b < D; ++b) cur[a + b] += pa * row[b];
      }
    }
  }
  return blocks;
}

}  // namespace

CoefficientBlock elementary_convolution(const Matrix& members, int degree) {
  check_members(members);
  const int L = static_cast<int>(members.rows());
  if (degree < 1 || degree > L)
    throw std::invalid_argument("elementary_convolution: degree out of range");
  auto blocks = transform_blocks(canonical_rows(members));
  return CoefficientBlock{degree, std::move(blocks[degree])};
}

std::vector<CoefficientBlock> full_transform(const Matrix& members) {
  check_members(members);
  const int L = static_cast<int>(members.rows());
  auto blocks = transform_blocks(canonical_rows(members));
  std::vector<CoefficientBlock> out;
  out.reserve(L);
  for (int l = 1; l <= L; ++l) out.push_back(CoefficientBlock{l, std::move(blocks[l])});
  return out;
}

Vector scalar_transform(const Vector& values) {
  const int L = static_cast<int>(values.size());
  if (L < 1) throw std::invalid_argument("transform: empty collection");
  if (!values.allFinite()) throw std::invalid_argument("transform: non-finite entry");
  // Same DP and canonical (ascending) order as the general path, without the
  // per-call matrix plumbing; this is the per-step hot path of the filters.
  Vector sorted = values;
  std::sort(sorted.data(), sorted.data() + L);
  Vector e = Vector::Zero(L + 1);
  e[0] = 1.0;
  for (int i = 0; i < L; ++i) {
    for (int l = std::min(i + 1, L); l >= 1; --l) e[l] += e[l - 1] * sorted[i];
  }
  return e.segment(1, L);
}

std::vector<MonomialBlock> monomial_transform(const ParameterSet& theta) {
  const Matrix sorted = canonical_rows(theta.rows());
  const int L = static_cast<int>(sorted.rows());
  const int D = static_cast<int>(sorted.cols());
  // DP over members; level l holds the degree-l monomial sums of the prefix.
  std::vector<Vector> levels(L + 1);
  levels[0] = Vector::Ones(1);
  for (int l = 1; l <= L; ++l) levels[l] = Vector::Zero(MultisetTable::get(D, l).size());
  for (int i = 0; i < L; ++i) {
    for (int l = std::min(i, L - 1); l >= 0; --l) {
      const MultisetTable& table = MultisetTable::get(D, l);
      const Vector& prev = levels[l];
      Vector& cur = levels[l + 1];
      for (int m = 0; m < prev.size(); ++m) {
        const double pm = prev[m];
        if (pm == 0.0) continue;
        for (int p = 0; p < D; ++p) cur[table.extend(m, p)] += pm * sorted(i, p);
      }
    }
  }
  std::vector<MonomialBlock> out;
  out.reserve(L);
  for (int l = 1; l <= L; ++l) out.push_back(MonomialBlock{l, D, std::move(levels[l])});
  return out;
}

CoefficientBlock degree_projection(const MonomialBlock& eta) {
  const MultisetTable& table = MultisetTable::get(eta.dim, eta.degree);
  if (eta.values.size() != table.size())
    throw std::invalid_argument("degree_projection: block size mismatch");
  Vector out = Vector::Zero(block_length(eta.dim, eta.degree));
  for (int m = 0; m < table.size(); ++m) out[table.t_power(m)] += eta.values[m];
  return CoefficientBlock{eta.degree, std::move(out)};
}

Matrix design_matrix(const Matrix& psi, int degree) {
  if (psi.rows() != psi.cols()) throw std::invalid_argument("design_matrix: psi must be square");
  if (!psi.allFinite()) throw std::invalid_argument("design_matrix: non-finite psi");
  const int D = static_cast<int>(psi.rows());
  if (degree < 1) throw std::invalid_argument("design_matrix: degree >= 1 required");
  // Build levels 1..degree; the column for a multiset extends the column of
  // its prefix (the multiset minus its largest entry) by one convolution.
  Matrix prev(1, 1);
  prev(0, 0) = 1.0;
  Matrix cur;
  for (int l = 1; l <= degree; ++l) {
    const MultisetTable& table = MultisetTable::get(D, l);
    const MultisetTable& prev_table = MultisetTable::get(D, l - 1);
    cur = Matrix::Zero(block_length(D, l), table.size());
    for (int m = 0; m < prev_table.size(); ++m) {
      // Extending by p >= last entry keeps the prefix canonical and reaches
      // every level-l multiset exactly once.
      const auto& mu = prev_table.at(m);
      const int lo = mu.empty() ? 0 : mu.back();
      for (int p = lo; p < D; ++p) {
        const int target = prev_table.extend(m, p);
        for (int a = 0; a < prev.rows(); ++a) {
          const double pa = prev(a, m);
          if (pa == 0.0) continue;
          for (int b = 0; b < D; ++b) cur(a + b, target) += pa * psi(b, p);
        }
      }
    }
    prev.swap(cur);
  }
  return prev;
}

std::vector<Vector> naive_transform(const Matrix& members) {
  check_members(members);
  const int D = static_cast<int>(members.cols());
  std::vector<Vector> out;
  out.reserve(D);
  for (int j = 0; j < D; ++j) out.push_back(scalar_transform(members.col(j)));
  return out;
}

}  // namespace symlms
