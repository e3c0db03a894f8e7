#include "symlms/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace symlms {

namespace {
constexpr double kTwoPiLog = 1.8378770664093454836;  // log(2*pi)
}

NoiseModel NoiseModel::gaussian(double sigma) {
  NoiseModel m;
  m.kind = Kind::Gaussian;
  m.sigma = sigma;
  m.validate();
  return m;
}

NoiseModel NoiseModel::laplacian(double sigma) {
  NoiseModel m;
  m.kind = Kind::Laplacian;
  m.sigma = sigma;
  m.validate();
  return m;
}

NoiseModel NoiseModel::discrete(Vector support, Vector probs) {
  NoiseModel m;
  m.kind = Kind::DiscretePmf;
  m.sigma = 0.0;
  m.support = std::move(support);
  m.probs = std::move(probs);
  m.validate();
  return m;
}

void NoiseModel::validate() const {
  if (kind == Kind::DiscretePmf) {
    if (support.size() < 1 || support.size() != probs.size())
      throw std::invalid_argument("NoiseModel: support/probs size mismatch");
    if (probs.minCoeff() < 0.0) throw std::invalid_argument("NoiseModel: negative probability");
    if (std::abs(probs.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("NoiseModel: probabilities must sum to 1");
    if (std::abs(probs.dot(support)) > 1e-12)
      throw std::invalid_argument("NoiseModel: discrete pmf must have zero mean");
    if (!support.allFinite()) throw std::invalid_argument("NoiseModel: non-finite support");
  } else {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("NoiseModel: sigma must be finite and >= 0");
  }
}

double NoiseModel::variance() const {
  switch (kind) {
    case Kind::Gaussian:
    case Kind::Laplacian:
      return sigma * sigma;
    case Kind::DiscretePmf:
      return probs.dot(support.cwiseProduct(support));
  }
  return 0.0;
}

double NoiseModel::stddev() const { return std::sqrt(variance()); }

double NoiseModel::sample(RngStream& rng) const {
  switch (kind) {
    case Kind::Gaussian:
      return sigma == 0.0 ? 0.0 : sigma * rng.gaussian();
    case Kind::Laplacian:
      return sigma == 0.0 ? 0.0 : rng.laplace(sigma / std::sqrt(2.0));
    case Kind::DiscretePmf:
      return support[rng.categorical(probs)];
  }
  return 0.0;
}

double NoiseModel::log_density(double r) const {
  switch (kind) {
    case Kind::Gaussian: {
      if (sigma <= 0.0) throw std::invalid_argument("log_density: degenerate Gaussian");
      const double u = r / sigma;
      return -0.5 * u * u - std::log(sigma) - 0.5 * kTwoPiLog;
    }
    case Kind::Laplacian: {
      if (sigma <= 0.0) throw std::invalid_argument("log_density: degenerate Laplacian");
      const double b = sigma / std::sqrt(2.0);
      return -std::abs(r) / b - std::log(2.0 * b);
    }
    case Kind::DiscretePmf: {
      for (int i = 0; i < support.size(); ++i) {
        if (std::abs(r - support[i]) <= 1e-9)
          return probs[i] > 0.0 ? std::log(probs[i])
                                : -std::numeric_limits<double>::infinity();
      }
      return -std::numeric_limits<double>::infinity();
    }
  }
  return 0.0;
}

double NoiseModel::score(double r) const {
  switch (kind) {
    case Kind::Gaussian:
      if (sigma <= 0.0) throw std::invalid_argument("score: degenerate Gaussian");
      return -r / (sigma * sigma);
    case Kind::Laplacian: {
      if (sigma <= 0.0) throw std::invalid_argument("score: degenerate Laplacian");
      if (r == 0.0) return 0.0;
      const double b = sigma / std::sqrt(2.0);
      return (r > 0.0 ? -1.0 : 1.0) / b;
    }
    case Kind::DiscretePmf:
      throw std::invalid_argument("score: discrete pmf has no differentiable log density");
  }
  return 0.0;
}

Matrix sample_noise(const NoiseModel& model, int rows, int cols, RngStream& rng) {
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = model.sample(rng);
  return out;
}

GarbleKernel GarbleKernel::identity() { return GarbleKernel{}; }

GarbleKernel GarbleKernel::add_gaussian(double sigma_g) {
  GarbleKernel k;
  k.kind = Kind::AddGaussian;
  k.sigma_g = sigma_g;
  return k;
}

GarbleKernel GarbleKernel::matrix(Matrix m) {
  GarbleKernel k;
  k.kind = Kind::Matrix;
  k.m = std::move(m);
  return k;
}

NoiseModel garble(const NoiseModel& base, const GarbleKernel& kernel,
                  bool require_mean_preserving) {
  switch (kernel.kind) {
    case GarbleKernel::Kind::Identity:
      return base;
    case GarbleKernel::Kind::AddGaussian: {
      if (base.kind != NoiseModel::Kind::Gaussian)
        throw std::invalid_argument("garble: AddGaussian kernel is closed only over Gaussian models");
      if (kernel.sigma_g < 0.0) throw std::invalid_argument("garble: negative spread");
      return NoiseModel::gaussian(std::hypot(base.sigma, kernel.sigma_g));
    }
    case GarbleKernel::Kind::Matrix: {
      if (base.kind != NoiseModel::Kind::DiscretePmf)
        throw std::invalid_argument("garble: Matrix kernel applies to DiscretePmf models");
      const auto& m = kernel.m;
      const int n = static_cast<int>(base.support.size());
      if (m.rows() != n || m.cols() != n)
        throw std::invalid_argument("garble: kernel shape mismatch");
      if (m.minCoeff() < 0.0) throw std::invalid_argument("garble: kernel has negative entries");
      for (int i = 0; i < n; ++i) {
        if (std::abs(m.row(i).sum() - 1.0) > 1e-12)
          throw std::invalid_argument("garble: kernel rows must be probability distributions");
        if (require_mean_preserving &&
            std::abs(m.row(i).dot(base.support) - base.support[i]) > 1e-9)
          throw std::invalid_argument("garble: kernel is not mean-preserving");
      }
      Vector q = m.transpose() * base.probs;
      return NoiseModel::discrete(base.support, std::move(q));
    }
  }
  throw std::invalid_argument("garble: unknown kernel");
}

std::vector<std::vector<int>> permutation_table(int L) {
  if (L < 1 || L > 8) throw std::invalid_argument("permutation_table: L must be in 1..8");
  std::vector<int> p(L);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

PermutationModel PermutationModel::uniform() { return PermutationModel{}; }

PermutationModel PermutationModel::categorical(Vector pi) {
  PermutationModel m;
  m.kind = Kind::CategoricalIid;
  m.pi = std::move(pi);
  return m;
}

PermutationModel PermutationModel::markov(Vector pi, Matrix generator, double rate) {
  PermutationModel m;
  m.kind = Kind::Markov;
  m.pi = std::move(pi);
  m.generator = std::move(generator);
  m.rate = rate;
  return m;
}

namespace {

void check_distribution(const Vector& pi, int n, const char* what) {
  if (pi.size() != n) throw std::invalid_argument(std::string(what) + ": distribution size mismatch");
  if (pi.minCoeff() < 0.0) throw std::invalid_argument(std::string(what) + ": negative probability");
  if (std::abs(pi.sum() - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": probabilities must sum to 1");
}

void check_generator(const Matrix& q, double rate, int n, const char* what) {
  if (q.rows() != n || q.cols() != n)
    throw std::invalid_argument(std::string(what) + ": generator shape mismatch");
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      row_sum += q(i, j);
      if (i != j && q(i, j) < 0.0)
        throw std::invalid_argument(std::string(what) + ": negative off-diagonal generator entry");
    }
    if (std::abs(row_sum) > 1e-10)
      throw std::invalid_argument(std::string(what) + ": generator rows must sum to 0");
    max_diag = std::max(max_diag, std::abs(q(i, i)));
  }
  if (rate < 0.0 || rate * max_diag > 1.0 + 1e-12)
    throw std::invalid_argument(std::string(what) + ": rate * max |q_ii| must be <= 1");
}

}  // namespace

void PermutationModel::validate(int n_states) const {
  switch (kind) {
    case Kind::UniformIid:
      return;
    case Kind::CategoricalIid:
      check_distribution(pi, n_states, "PermutationModel");
      return;
    case Kind::Markov:
      check_distribution(pi, n_states, "PermutationModel");
      check_generator(generator, rate, n_states, "PermutationModel");
      return;
  }
}

void HyperChain::validate(int L, int D) const {
  if (states.empty()) throw std::invalid_argument("HyperChain: no states");
  for (const auto& s : states) {
    if (s.rows() != L || s.cols() != D)
      throw std::invalid_argument("HyperChain: state shape mismatch");
  }
  const int m = static_cast<int>(states.size());
  check_distribution(initial, m, "HyperChain");
  check_generator(generator, rate, m, "HyperChain");
}

InputModel InputModel::gaussian(double sigma) {
  InputModel m;
  m.kind = Kind::GaussianIid;
  m.sigma = sigma;
  return m;
}

InputModel InputModel::identity() {
  InputModel m;
  m.kind = Kind::Identity;
  return m;
}

InputModel InputModel::fixed_matrix(Matrix mat) {
  InputModel m;
  m.kind = Kind::Fixed;
  m.fixed = std::move(mat);
  return m;
}

void SystemSpec::validate() const {
  if (L < 1 || D < 1) throw std::invalid_argument("SystemSpec: L, D must be positive");
  if (theta_true.rows() != L || theta_true.cols() != D)
    throw std::invalid_argument("SystemSpec: theta_true shape mismatch");
  if (!theta_true.allFinite()) throw std::invalid_argument("SystemSpec: non-finite theta_true");
  if (input.kind == InputModel::Kind::Fixed &&
      (input.fixed.rows() != D || input.fixed.cols() != D))
    throw std::invalid_argument("SystemSpec: fixed input must be D x D");
  noise.validate();
  if (drift) {
    if (drift->theta_after.rows() != L || drift->theta_after.cols() != D)
      throw std::invalid_argument("SystemSpec: drift shape mismatch");
    if (drift->switch_at < 0) throw std::invalid_argument("SystemSpec: drift switch_at < 0");
  }
}

TrajectoryGenerator::TrajectoryGenerator(SystemSpec spec, PermutationModel perm,
                                         std::optional<HyperChain> hyper, std::uint64_t seed,
                                         std::uint64_t stream, bool with_hidden)
    : spec_(std::move(spec)),
      perm_(std::move(perm)),
      hyper_(std::move(hyper)),
      rng_(seed, stream),
      with_hidden_(with_hidden) {
  spec_.validate();
  if (hyper_ && spec_.drift)
    throw std::invalid_argument("TrajectoryGenerator: drift and hyper chain are exclusive");
  table_ = permutation_table(spec_.L);
  perm_.validate(static_cast<int>(table_.size()));
  theta_now_ = spec_.theta_true;
  if (hyper_) {
    hyper_->validate(spec_.L, spec_.D);
    hyper_state_ = rng_.categorical(hyper_->initial);
    theta_now_ = hyper_->states[hyper_state_];
  }
  if (perm_.kind == PermutationModel::Kind::Markov) perm_state_ = rng_.categorical(perm_.pi);
}

ObservationRecord TrajectoryGenerator::next() {
  ++k_;
  // Fixed per-step draw order: hyper transition, input, permutation, noise.
  if (hyper_) {
    const int m = static_cast<int>(hyper_->states.size());
    Vector row(m);
    for (int j = 0; j < m; ++j)
      row[j] = (j == hyper_state_ ? 1.0 : 0.0) + hyper_->rate * hyper_->generator(hyper_state_, j);
    hyper_state_ = rng_.categorical(row);
    theta_now_ = hyper_->states[hyper_state_];
  } else if (spec_.drift && k_ > spec_.drift->switch_at) {
    theta_now_ = spec_.drift->theta_after;
  }

  Matrix psi;
  switch (spec_.input.kind) {
    case InputModel::Kind::GaussianIid:
      psi.resize(spec_.D, spec_.D);
      for (int i = 0; i < spec_.D; ++i)
        for (int j = 0; j < spec_.D; ++j) psi(i, j) = spec_.input.sigma * rng_.gaussian();
      break;
    case InputModel::Kind::Identity:
      psi = Matrix::Identity(spec_.D, spec_.D);
      break;
    case InputModel::Kind::Fixed:
      psi = spec_.input.fixed;
      break;
  }

  switch (perm_.kind) {
    case PermutationModel::Kind::UniformIid:
      perm_state_ = rng_.uniform_int(static_cast<int>(table_.size()));
      break;
    case PermutationModel::Kind::CategoricalIid:
      perm_state_ = rng_.categorical(perm_.pi);
      break;
    case PermutationModel::Kind::Markov: {
      const int n = static_cast<int>(table_.size());
      Vector row(n);
      for (int j = 0; j < n; ++j)
        row[j] = (j == perm_state_ ? 1.0 : 0.0) + perm_.rate * perm_.generator(perm_state_, j);
      perm_state_ = rng_.categorical(row);
      break;
    }
  }
  const std::vector<int>& p = table_[perm_state_];

  if (noise_.size() == 0) noise_.resize(spec_.L, spec_.D);
  for (int i = 0; i < spec_.L; ++i)
    for (int j = 0; j < spec_.D; ++j) noise_(i, j) = spec_.noise.sample(rng_);
  const Matrix& v = noise_;

  ObservationRecord rec;
  rec.k = k_;
  rec.psi = std::move(psi);
  if (pred_.size() == 0) pred_.resize(spec_.D, spec_.L);
  // column l = psi * theta_l, evaluated exactly as consumers recompute it
  for (int l = 0; l < spec_.L; ++l)
    pred_.col(l).noalias() = rec.psi * theta_now_.row(l).transpose();
  rec.y_set.resize(spec_.L, spec_.D);
  for (int r = 0; r < spec_.L; ++r)
    rec.y_set.row(r) = pred_.col(p[r]).transpose() + v.row(p[r]);
  if (with_hidden_) {
    HiddenState h;
    h.perm_index = perm_state_;
    h.perm = p;
    h.noise = v;
    h.theta = theta_now_;
    h.hyper_state = hyper_ ? hyper_state_ : -1;
    rec.hidden = std::move(h);
  }
  return rec;
}

std::vector<ObservationRecord> generate_trajectory(const SystemSpec& spec,
                                                   const PermutationModel& perm,
                                                   const std::optional<HyperChain>& hyper, long n,
                                                   std::uint64_t seed, std::uint64_t stream,
                                                   bool with_hidden) {
  if (n < 1) throw std::invalid_argument("generate_trajectory: n >= 1 required");
  TrajectoryGenerator gen(spec, perm, hyper, seed, stream, with_hidden);
  std::vector<ObservationRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) out.push_back(gen.next());
  return out;
}

}  // namespace symlms
