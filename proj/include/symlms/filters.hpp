#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "symlms/inversion.hpp"
#include "symlms/simulate.hpp"
#include "symlms/types.hpp"

namespace symlms {

enum class FilterMode { SymScalar, SymVector, Classical, DirectSgd, Naive, Rem };

FilterMode filter_mode_from_string(const std::string& name);
std::string to_string(FilterMode mode);

struct FilterConfig {
  FilterMode mode = FilterMode::SymScalar;
  double eps = 1e-4;
  std::optional<Matrix> init_theta;  // L x D; sym pipelines start at its transform, else zeros
  int invert_every = 100;            // logging cadence used by the harness
  double divergence_limit = 1e12;

  NoiseModel assumed_noise = NoiseModel::gaussian(1.0);  // rem
  Vector rem_prior;                                      // over L!; empty = uniform

  double naive_condition_skip = 20.0;  // naive (D >= 2): skip records with cond(psi) above

  VectorInversionOptions inversion;

  void validate(int L, int D) const;
};

struct FilterDiagnostics {
  long steps = 0;
  bool any_complex = false;       // last inversion had complex roots
  double condition_number = 0.0;  // last vector inversion
  bool degraded = false;          // last estimate() served a cached inversion
  bool identifiability_warning = false;
  long skipped_records = 0;  // naive condition guard
};

class Filter {
 public:
  virtual ~Filter() = default;
  virtual void step(const ObservationRecord& record) = 0;
  /// Current parameter-set estimate in canonical order. Inversion failures
  /// fall back to the last successful inversion and set the degraded flag.
  virtual ParameterSet estimate() = 0;
  /// Flattened coefficient state, for logging.
  virtual Vector coefficient_state() const = 0;
  virtual FilterMode mode() const = 0;

  const FilterDiagnostics& diagnostics() const { return diag_; }

 protected:
  void check_finite(double max_abs, double limit) const;
  FilterDiagnostics diag_;
};

/// Bank of L decoupled scalar-coefficient LMS updates on the scalar-transform
/// pseudo-observations (D = 1).
class SymScalarFilter : public Filter {
 public:
  SymScalarFilter(const FilterConfig& config, int L);
  void step(const ObservationRecord& record) override;
  ParameterSet estimate() override;
  Vector coefficient_state() const override { return coeffs_; }
  FilterMode mode() const override { return FilterMode::SymScalar; }
  const Vector& coefficients() const { return coeffs_; }

 private:
  FilterConfig config_;
  int L_;
  Vector coeffs_;
  Vector z_buf_, sort_buf_;
  std::optional<ParameterSet> cached_;
};

/// Decoupled LMS on the monomial symmetric coordinates of each degree block,
/// with the degree design matrices as regressors (any D >= 1).
class SymVectorFilter : public Filter {
 public:
  SymVectorFilter(const FilterConfig& config, int L, int D);
  void step(const ObservationRecord& record) override;
  ParameterSet estimate() override;
  Vector coefficient_state() const override;
  FilterMode mode() const override { return FilterMode::SymVector; }
  const std::vector<Vector>& eta() const { return eta_; }
  std::vector<CoefficientBlock> coefficient_blocks() const;

 private:
  void refresh_design(const Matrix& psi);

  FilterConfig config_;
  int L_, D_;
  std::vector<Vector> eta_;  // degree l at index l-1
  Matrix cached_psi_;
  std::vector<Matrix> design_;
  std::vector<Matrix> gram_accum_;  // warm-up E[A'A] estimate per degree
  int warmup_left_;
  std::optional<ParameterSet> cached_;
};

/// Oracle baseline: classical LMS per system, using the hidden labels.
class ClassicalLmsFilter : public Filter {
 public:
  ClassicalLmsFilter(const FilterConfig& config, int L, int D);
  void step(const ObservationRecord& record) override;
  ParameterSet estimate() override;
  Vector coefficient_state() const override;
  FilterMode mode() const override { return FilterMode::Classical; }
  const Matrix& theta() const { return theta_; }

 private:
  FilterConfig config_;
  Matrix theta_;
};

/// Stochastic gradient directly on the non-convex pseudo-observation
/// objective (D = 1); kept as the baseline that exhibits local minima.
class DirectSgdFilter : public Filter {
 public:
  DirectSgdFilter(const FilterConfig& config, int L);
  void step(const ObservationRecord& record) override;
  ParameterSet estimate() override;
  Vector coefficient_state() const override { return theta_; }
  FilterMode mode() const override { return FilterMode::DirectSgd; }
  const Vector& theta() const { return theta_; }

 private:
  FilterConfig config_;
  int L_;
  Vector theta_;
  Vector z_buf_, sort_buf_, etheta_buf_, psip_buf_, excl_buf_;
};

/// Element-wise baseline: D independent scalar pipelines. For D >= 2 the
/// observations are normalized by psi^{-1} first (unit regressor afterwards);
/// records with cond(psi) above the guard are skipped. Demonstrates ghost
/// estimates: the per-component sets converge but the pairing is lost.
class NaiveFilter : public Filter {
 public:
  NaiveFilter(const FilterConfig& config, int L, int D);
  void step(const ObservationRecord& record) override;
  ParameterSet estimate() override;
  Vector coefficient_state() const override;
  FilterMode mode() const override { return FilterMode::Naive; }

 private:
  void refresh_input(const Matrix& psi);

  FilterConfig config_;
  int L_, D_;
  Matrix coeffs_;  // D x L, per-component scalar coefficients
  std::unique_ptr<SymScalarFilter> scalar_;  // D == 1 path
  Matrix cached_psi_;
  Eigen::PartialPivLU<Matrix> cached_lu_;
  double cached_cond_ = 0.0;
  std::optional<ParameterSet> cached_estimate_;
};

/// Recursive EM: posterior-weighted score ascent over all L! permutations,
/// assuming iid permutations with known prior and a known noise density.
class RemFilter : public Filter {
 public:
  RemFilter(const FilterConfig& config, int L, int D);
  void step(const ObservationRecord& record) override;
  ParameterSet estimate() override;
  Vector coefficient_state() const override;
  FilterMode mode() const override { return FilterMode::Rem; }
  const Matrix& theta() const { return theta_; }
  const Vector& posterior() const { return posterior_; }

 private:
  FilterConfig config_;
  int L_, D_;
  Matrix theta_;
  std::vector<std::vector<int>> table_;
  Vector prior_;
  Vector posterior_;
};

std::unique_ptr<Filter> make_filter(const FilterConfig& config, int L, int D);

/// Canonical estimate from a flattened coefficient state (as produced by
/// Filter::coefficient_state). Used to invert trial-averaged states: the
/// coefficient coordinates are the convex ones, so averaging is unbiased
/// there and a single inversion avoids the per-trial nonlinearity bias.
ParameterSet estimate_from_coefficients(const FilterConfig& config, int L, int D,
                                        const Vector& coeffs);

}  // namespace symlms
