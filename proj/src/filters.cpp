#include "symlms/filters.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "symlms/errors.hpp"
#include "symlms/transform.hpp"

namespace symlms {

FilterMode filter_mode_from_string(const std::string& name) {
  if (name == "sym-scalar") return FilterMode::SymScalar;
  if (name == "sym-vector") return FilterMode::SymVector;
  if (name == "classical") return FilterMode::Classical;
  if (name == "direct-sgd") return FilterMode::DirectSgd;
  if (name == "naive") return FilterMode::Naive;
  if (name == "rem") return FilterMode::Rem;
  throw std::invalid_argument("unknown filter mode: " + name);
}

std::string to_string(FilterMode mode) {
  switch (mode) {
    case FilterMode::SymScalar: return "sym-scalar";
    case FilterMode::SymVector: return "sym-vector";
    case FilterMode::Classical: return "classical";
    case FilterMode::DirectSgd: return "direct-sgd";
    case FilterMode::Naive: return "naive";
    case FilterMode::Rem: return "rem";
  }
  return "?";
}

void FilterConfig::validate(int L, int D) const {
  if (!(eps > 0.0)) throw std::invalid_argument("FilterConfig: eps must be > 0");
  if (invert_every < 1) throw std::invalid_argument("FilterConfig: invert_every must be >= 1");
  if (init_theta && (init_theta->rows() != L || init_theta->cols() != D))
    throw std::invalid_argument("FilterConfig: init_theta shape mismatch");
  if ((mode == FilterMode::SymScalar || mode == FilterMode::DirectSgd) && D != 1)
    throw std::invalid_argument("FilterConfig: mode requires D = 1");
  if (mode == FilterMode::Rem) {
    if (L > 6) throw std::invalid_argument("FilterConfig: rem is guarded at L <= 6 (L! states)");
    if (rem_prior.size() != 0) {
      long x = 1;
      for (int i = 2; i <= L; ++i) x *= i;
      if (rem_prior.size() != x) throw std::invalid_argument("FilterConfig: rem_prior size != L!");
    }
  }
}

void Filter::check_finite(double max_abs, double limit) const {
  if (!std::isfinite(max_abs) || max_abs > limit)
    throw DivergedError(to_string(mode()) + ": state magnitude " + std::to_string(max_abs) +
                        " at step " + std::to_string(diag_.steps));
}

namespace {

void require_dims(const ObservationRecord& rec, int L, int D, const char* who) {
  if (rec.y_set.rows() != L || rec.y_set.cols() != D || rec.psi.rows() != D || rec.psi.cols() != D)
    throw std::invalid_argument(std::string(who) + ": record shape mismatch");
}

// Allocation-free scalar transform into preallocated buffers; same canonical
// order and DP as scalar_transform (the filters step millions of times).
void scalar_transform_into(const Eigen::Ref<const Vector>& values, Vector* sort_buf, Vector* z) {
  const int L = static_cast<int>(values.size());
  *sort_buf = values;
  std::sort(sort_buf->data(), sort_buf->data() + L);
  z->setZero();
  for (int i = 0; i < L; ++i) {
    const double v = (*sort_buf)[i];
    for (int l = std::min(i, L - 1); l >= 1; --l) (*z)[l] += (*z)[l - 1] * v;
    (*z)[0] += v;
  }
}

// e_0..e_{L-1} of values with index j removed, into a preallocated buffer.
void elementary_excluding_into(const Vector& values, int j, Vector* e) {
  const int L = static_cast<int>(values.size());
  e->setZero();
  (*e)[0] = 1.0;
  int used = 0;
  for (int i = 0; i < L; ++i) {
    if (i == j) continue;
    ++used;
    for (int q = used; q >= 1; --q) (*e)[q] += values[i] * (*e)[q - 1];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SymScalarFilter

SymScalarFilter::SymScalarFilter(const FilterConfig& config, int L)
    : config_(config), L_(L), z_buf_(L), sort_buf_(L) {
  config_.validate(L, 1);
  if (config_.init_theta)
    coeffs_ = scalar_transform(config_.init_theta->col(0));
  else
    coeffs_ = Vector::Zero(L);
}

void SymScalarFilter::step(const ObservationRecord& record) {
  require_dims(record, L_, 1, "sym-scalar");
  const double psi = record.psi(0, 0);
  scalar_transform_into(record.y_set.col(0), &sort_buf_, &z_buf_);
  double pw = 1.0;
  for (int l = 0; l < L_; ++l) {
    pw *= psi;
    const double resid = z_buf_[l] - pw * coeffs_[l];
    coeffs_[l] += config_.eps * (pw * resid);
  }
  ++diag_.steps;
  check_finite(coeffs_.cwiseAbs().maxCoeff(), config_.divergence_limit);
}

ParameterSet SymScalarFilter::estimate() {
  const ScalarInversion inv = invert_scalar(coeffs_);
  diag_.any_complex = inv.any_complex;
  diag_.degraded = false;
  Matrix m(L_, 1);
  m.col(0) = inv.theta;
  cached_ = ParameterSet(m);
  return *cached_;
}

// ---------------------------------------------------------------------------
// SymVectorFilter

SymVectorFilter::SymVectorFilter(const FilterConfig& config, int L, int D)
    : config_(config), L_(L), D_(D), warmup_left_(D >= 3 ? 100 : 0) {
  config_.validate(L, D);
  eta_.resize(L);
  if (config_.init_theta) {
    auto blocks = monomial_transform(ParameterSet(*config_.init_theta));
    for (int l = 0; l < L; ++l) eta_[l] = blocks[l].values;
  } else {
    for (int l = 1; l <= L; ++l) eta_[l - 1] = Vector::Zero(MultisetTable::get(D, l).size());
  }
  gram_accum_.resize(L);
}

void SymVectorFilter::refresh_design(const Matrix& psi) {
  if (cached_psi_.size() == psi.size() && cached_psi_ == psi) return;
  cached_psi_ = psi;
  design_.resize(L_);
  for (int l = 1; l <= L_; ++l) design_[l - 1] = design_matrix(psi, l);
}

void SymVectorFilter::step(const ObservationRecord& record) {
  require_dims(record, L_, D_, "sym-vector");
  refresh_design(record.psi);
  const auto z = full_transform(record.y_set);
  double max_abs = 0.0;
  for (int l = 0; l < L_; ++l) {
    const Matrix& a = design_[l];
    const Vector resid = z[l].values - a * eta_[l];
    // evaluate the gradient before scaling so the D = 1 case reduces to the
    // scalar bank bit-for-bit (GEMV would otherwise fold eps into the kernel)
    const Vector grad = a.transpose() * resid;
    eta_[l] += config_.eps * grad;
    max_abs = std::max(max_abs, eta_[l].cwiseAbs().maxCoeff());
    if (warmup_left_ > 0) {
      if (gram_accum_[l].size() == 0) gram_accum_[l] = Matrix::Zero(a.cols(), a.cols());
      gram_accum_[l] += a.transpose() * a;
    }
  }
  ++diag_.steps;
  if (warmup_left_ > 0 && --warmup_left_ == 0) {
    // Persistence-of-excitation check on the empirical E[A'A].
    for (int l = 0; l < L_; ++l) {
      const Matrix gram = gram_accum_[l] / static_cast<double>(diag_.steps);
      const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(gram).eigenvalues();
      if (ev.minCoeff() < 1e-8) diag_.identifiability_warning = true;
      gram_accum_[l].resize(0, 0);
    }
  }
  check_finite(max_abs, config_.divergence_limit);
}

std::vector<CoefficientBlock> SymVectorFilter::coefficient_blocks() const {
  std::vector<CoefficientBlock> blocks;
  blocks.reserve(L_);
  for (int l = 1; l <= L_; ++l)
    blocks.push_back(degree_projection(MonomialBlock{l, D_, eta_[l - 1]}));
  return blocks;
}

ParameterSet SymVectorFilter::estimate() {
  try {
    VectorInversion inv = invert_vector(coefficient_blocks(), D_, config_.inversion);
    diag_.any_complex = inv.any_complex;
    if (!inv.condition_numbers.empty()) diag_.condition_number = inv.condition_numbers.front();
    diag_.degraded = false;
    cached_ = inv.theta;
    return inv.theta;
  } catch (const IllConditionedError&) {
    diag_.degraded = true;
    if (cached_) return *cached_;
    Matrix zero = config_.init_theta ? *config_.init_theta : Matrix::Zero(L_, D_);
    return ParameterSet(canonical_rows(zero));
  }
}

Vector SymVectorFilter::coefficient_state() const {
  int total = 0;
  for (const auto& e : eta_) total += static_cast<int>(e.size());
  Vector out(total);
  int at = 0;
  for (const auto& e : eta_) {
    out.segment(at, e.size()) = e;
    at += static_cast<int>(e.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// ClassicalLmsFilter

ClassicalLmsFilter::ClassicalLmsFilter(const FilterConfig& config, int L, int D)
    : config_(config) {
  config_.validate(L, D);
  theta_ = config_.init_theta ? *config_.init_theta : Matrix::Zero(L, D);
}

void ClassicalLmsFilter::step(const ObservationRecord& record) {
  require_dims(record, static_cast<int>(theta_.rows()), static_cast<int>(theta_.cols()),
               "classical");
  if (!record.hidden)
    throw std::invalid_argument("classical: labeled records required (hidden state missing)");
  const auto& perm = record.hidden->perm;
  for (int r = 0; r < theta_.rows(); ++r) {
    const int l = perm[r];
    const Vector resid =
        record.y_set.row(r).transpose() - record.psi * theta_.row(l).transpose();
    theta_.row(l) += (config_.eps * (record.psi * resid)).transpose();
  }
  ++diag_.steps;
  check_finite(theta_.cwiseAbs().maxCoeff(), config_.divergence_limit);
}

ParameterSet ClassicalLmsFilter::estimate() { return ParameterSet(canonical_rows(theta_)); }

Vector ClassicalLmsFilter::coefficient_state() const {
  return Eigen::Map<const Vector>(theta_.data(), theta_.size());
}

// ---------------------------------------------------------------------------
// DirectSgdFilter

DirectSgdFilter::DirectSgdFilter(const FilterConfig& config, int L)
    : config_(config),
      L_(L),
      z_buf_(L),
      sort_buf_(L),
      etheta_buf_(L),
      psip_buf_(L),
      excl_buf_(L) {
  config_.validate(L, 1);
  theta_ = config_.init_theta ? Vector(config_.init_theta->col(0)) : Vector::Zero(L);
}

void DirectSgdFilter::step(const ObservationRecord& record) {
  require_dims(record, L_, 1, "direct-sgd");
  const double psi = record.psi(0, 0);
  scalar_transform_into(record.y_set.col(0), &sort_buf_, &z_buf_);
  scalar_transform_into(theta_, &sort_buf_, &etheta_buf_);
  double pw = 1.0;
  for (int l = 0; l < L_; ++l) {
    pw *= psi;
    psip_buf_[l] = pw;
    z_buf_[l] -= pw * etheta_buf_[l];  // residual, in place
  }
  for (int j = 0; j < L_; ++j) {
    elementary_excluding_into(theta_, j, &excl_buf_);
    double g = 0.0;
    for (int l = 0; l < L_; ++l) g += psip_buf_[l] * excl_buf_[l] * z_buf_[l];
    etheta_buf_[j] = -2.0 * g;  // reuse as the gradient buffer
  }
  theta_ -= config_.eps * etheta_buf_;
  ++diag_.steps;
  check_finite(theta_.cwiseAbs().maxCoeff(), config_.divergence_limit);
}

ParameterSet DirectSgdFilter::estimate() {
  Matrix m(L_, 1);
  m.col(0) = theta_;
  return ParameterSet(canonical_rows(m));
}

// ---------------------------------------------------------------------------
// NaiveFilter

NaiveFilter::NaiveFilter(const FilterConfig& config, int L, int D)
    : config_(config), L_(L), D_(D) {
  config_.validate(L, D);
  if (D == 1) {
    FilterConfig scalar_config = config_;
    scalar_config.mode = FilterMode::SymScalar;
    scalar_ = std::make_unique<SymScalarFilter>(scalar_config, L);
    return;
  }
  coeffs_ = Matrix::Zero(D, L);
  if (config_.init_theta) {
    for (int j = 0; j < D; ++j) coeffs_.row(j) = scalar_transform(config_.init_theta->col(j));
  }
}

void NaiveFilter::refresh_input(const Matrix& psi) {
  if (cached_psi_.size() == psi.size() && cached_psi_ == psi) return;
  cached_psi_ = psi;
  Eigen::JacobiSVD<Matrix> svd(psi);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  cached_cond_ = smin > 0.0 ? svd.singularValues()(0) / smin
                            : std::numeric_limits<double>::infinity();
  cached_lu_ = Eigen::PartialPivLU<Matrix>(psi);
}

void NaiveFilter::step(const ObservationRecord& record) {
  if (scalar_) {
    scalar_->step(record);
    diag_ = scalar_->diagnostics();
    return;
  }
  require_dims(record, L_, D_, "naive");
  refresh_input(record.psi);
  if (!(cached_cond_ <= config_.naive_condition_skip)) {
    ++diag_.skipped_records;
    ++diag_.steps;
    return;
  }
  const Matrix u = cached_lu_.solve(record.y_set.transpose()).transpose();  // psi^{-1} y per row
  for (int j = 0; j < D_; ++j) {
    const Vector z = scalar_transform(u.col(j));
    coeffs_.row(j) += config_.eps * (z.transpose() - coeffs_.row(j));
  }
  ++diag_.steps;
  check_finite(coeffs_.cwiseAbs().maxCoeff(), config_.divergence_limit);
}

ParameterSet NaiveFilter::estimate() {
  if (scalar_) {
    ParameterSet p = scalar_->estimate();
    diag_ = scalar_->diagnostics();
    return p;
  }
  Matrix theta(L_, D_);
  bool any_complex = false;
  for (int j = 0; j < D_; ++j) {
    const ScalarInversion inv = invert_scalar(coeffs_.row(j).transpose());
    any_complex = any_complex || inv.any_complex;
    theta.col(j) = inv.theta;  // ascending per component; pairing is lost by construction
  }
  diag_.any_complex = any_complex;
  cached_estimate_ = ParameterSet(canonical_rows(theta));
  return *cached_estimate_;
}

Vector NaiveFilter::coefficient_state() const {
  if (scalar_) return scalar_->coefficient_state();
  return Eigen::Map<const Vector>(coeffs_.data(), coeffs_.size());
}

// ---------------------------------------------------------------------------
// RemFilter

RemFilter::RemFilter(const FilterConfig& config, int L, int D) : config_(config), L_(L), D_(D) {
  config_.validate(L, D);
  table_ = permutation_table(L);
  const int x = static_cast<int>(table_.size());
  prior_ = config_.rem_prior.size() ? config_.rem_prior : Vector::Constant(x, 1.0 / x);
  if (std::abs(prior_.sum() - 1.0) > 1e-12 || prior_.minCoeff() < 0.0)
    throw std::invalid_argument("rem: prior must be a probability vector");
  posterior_ = prior_;
  theta_ = config_.init_theta ? *config_.init_theta : Matrix::Zero(L, D);
}

void RemFilter::step(const ObservationRecord& record) {
  require_dims(record, L_, D_, "rem");
  const int x = static_cast<int>(table_.size());
  const Matrix pred = theta_ * record.psi.transpose();  // row l = (psi * theta_l)'
  Vector logw(x);
  std::vector<Matrix> resid(x);
  for (int i = 0; i < x; ++i) {
    const auto& p = table_[i];
    Matrix r(L_, D_);
    double lw = prior_[i] > 0.0 ? std::log(prior_[i])
                                : -std::numeric_limits<double>::infinity();
    for (int row = 0; row < L_; ++row) {
      r.row(row) = record.y_set.row(row) - pred.row(p[row]);
      for (int c = 0; c < D_; ++c) lw += config_.assumed_noise.log_density(r(row, c));
    }
    resid[i] = std::move(r);
    logw[i] = lw;
  }
  const double lmax = logw.maxCoeff();
  if (!std::isfinite(lmax)) throw DivergedError("rem: all permutation likelihoods vanished");
  Vector w = (logw.array() - lmax).exp();
  w /= w.sum();
  posterior_ = w;

  Matrix grad = Matrix::Zero(L_, D_);
  for (int i = 0; i < x; ++i) {
    if (w[i] == 0.0) continue;
    const auto& p = table_[i];
    for (int row = 0; row < L_; ++row) {
      Vector s(D_);
      for (int c = 0; c < D_; ++c) s[c] = config_.assumed_noise.score(resid[i](row, c));
      grad.row(p[row]) -= w[i] * (record.psi.transpose() * s).transpose();
    }
  }
  theta_ += config_.eps * grad;
  ++diag_.steps;
  check_finite(theta_.cwiseAbs().maxCoeff(), config_.divergence_limit);
}

ParameterSet RemFilter::estimate() { return ParameterSet(canonical_rows(theta_)); }

Vector RemFilter::coefficient_state() const {
  return Eigen::Map<const Vector>(theta_.data(), theta_.size());
}

// ---------------------------------------------------------------------------

std::unique_ptr<Filter> make_filter(const FilterConfig& config, int L, int D) {
  switch (config.mode) {
    case FilterMode::SymScalar: return std::make_unique<SymScalarFilter>(config, L);
    case FilterMode::SymVector: return std::make_unique<SymVectorFilter>(config, L, D);
    case FilterMode::Classical: return std::make_unique<ClassicalLmsFilter>(config, L, D);
    case FilterMode::DirectSgd: return std::make_unique<DirectSgdFilter>(config, L);
    case FilterMode::Naive: return std::make_unique<NaiveFilter>(config, L, D);
    case FilterMode::Rem: return std::make_unique<RemFilter>(config, L, D);
  }
  throw std::invalid_argument("make_filter: unknown mode");
}

ParameterSet estimate_from_coefficients(const FilterConfig& config, int L, int D,
                                        const Vector& coeffs) {
  switch (config.mode) {
    case FilterMode::SymScalar: {
      const ScalarInversion inv = invert_scalar(coeffs);
      Matrix m(L, 1);
      m.col(0) = inv.theta;
      return ParameterSet(m);
    }
    case FilterMode::SymVector: {
      std::vector<CoefficientBlock> blocks;
      int at = 0;
      for (int l = 1; l <= L; ++l) {
        const MonomialBlock eta{l, D,
                                Vector(coeffs.segment(at, MultisetTable::get(D, l).size()))};
        at += static_cast<int>(eta.values.size());
        blocks.push_back(degree_projection(eta));
      }
      return invert_vector(blocks, D, config.inversion).theta;
    }
    case FilterMode::Naive: {
      if (D == 1) {
        FilterConfig scalar = config;
        scalar.mode = FilterMode::SymScalar;
        return estimate_from_coefficients(scalar, L, 1, coeffs);
      }
      const Eigen::Map<const Matrix> lam(coeffs.data(), D, L);
      Matrix theta(L, D);
      for (int j = 0; j < D; ++j)
        theta.col(j) = invert_scalar(lam.row(j).transpose()).theta;
      return ParameterSet(canonical_rows(theta));
    }
    case FilterMode::Classical:
    case FilterMode::DirectSgd:
    case FilterMode::Rem: {
      const Eigen::Map<const Matrix> theta(coeffs.data(), L, D);
      return ParameterSet(canonical_rows(theta));
    }
  }
  throw std::invalid_argument("estimate_from_coefficients: unknown mode");
}

}  // namespace symlms
