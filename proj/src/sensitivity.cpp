#include "symlms/sensitivity.hpp"

#include <cmath>
#include <stdexcept>

#include "symlms/errors.hpp"

namespace symlms {

SensitivityMatrix root_sensitivity(const Vector& theta, double min_gap) {
  const int L = static_cast<int>(theta.size());
  if (L < 1) throw std::invalid_argument("root_sensitivity: empty set");
  if (!theta.allFinite()) throw std::invalid_argument("root_sensitivity: non-finite entry");

  const double scale = 1.0 + theta.cwiseAbs().maxCoeff();
  for (int i = 0; i < L; ++i) {
    for (int j = i + 1; j < L; ++j) {
      if (std::abs(theta[i] - theta[j]) <= min_gap * scale)
        throw RepeatedRootError("root_sensitivity: members " + std::to_string(i) + " and " +
                                std::to_string(j) + " are (near-)repeated");
    }
  }

  SensitivityMatrix out;
  out.jac.resize(L, L);
  for (int l = 0; l < L; ++l) {
    double denom = 1.0;
    for (int i = 0; i < L; ++i) {
      if (i != l) denom *= theta[i] - theta[l];
    }
    double sign = (L - 1) % 2 == 0 ? 1.0 : -1.0;  // (-1)^{L-m} for m = 1
    for (int m = 1; m <= L; ++m) {
      out.jac(m - 1, l) = sign * std::pow(theta[l], L - m) / denom;
      sign = -sign;
    }
  }
  return out;
}

}  // namespace symlms
