#include "symlms/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "symlms/errors.hpp"
#include "symlms/sensitivity.hpp"
#include "symlms/transform.hpp"
#include "parallel.hpp"

namespace symlms {

Matrix moment_matrix_q(int L) {
  if (L < 1) throw std::invalid_argument("moment_matrix_q: L >= 1 required");
  Matrix q = Matrix::Zero(L, L);
  double dfact = 1.0;
  for (int l = 1; l <= L; ++l) {
    dfact *= 2 * l - 1;  // (2l-1)!!
    q(l - 1, l - 1) = dfact;
  }
  return q;
}

Matrix noise_covariance_r_closed_form(const Vector& theta, double sigma) {
  if (theta.size() != 2)
    throw std::invalid_argument("noise_covariance_r_closed_form: available for L = 2 only");
  const double s2 = sigma * sigma;
  Matrix r = Matrix::Zero(2, 2);
  r(0, 0) = 2.0 * s2;
  r(1, 1) = 15.0 * s2 * theta.squaredNorm() + 3.0 * s2 * s2;
  return r;
}

MonteCarloMatrix noise_covariance_r_mc(const Vector& theta, const NoiseModel& noise, long n,
                                       std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("noise_covariance_r_mc: n >= 2 required");
  const int L = static_cast<int>(theta.size());
  const Vector lam = scalar_transform(theta);
  RngStream rng(seed, 0);
  Matrix sum = Matrix::Zero(L, L);
  Matrix sum_sq = Matrix::Zero(L, L);
  Vector y(L), x(L);
  for (long k = 0; k < n; ++k) {
    const double psi = rng.gaussian();
    for (int i = 0; i < L; ++i) y[i] = psi * theta[i] + noise.sample(rng);
    const Vector z = scalar_transform(y);
    double pw = 1.0;
    for (int l = 0; l < L; ++l) {
      pw *= psi;
      x[l] = pw * (z[l] - pw * lam[l]);
    }
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < L; ++j) {
        const double v = x[i] * x[j];
        sum(i, j) += v;
        sum_sq(i, j) += v * v;
      }
    }
  }
  MonteCarloMatrix out;
  out.n_samples = n;
  out.value = sum / static_cast<double>(n);
  out.std_error.resize(L, L);
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double var = sum_sq(i, j) / n - out.value(i, j) * out.value(i, j);
      out.std_error(i, j) = std::sqrt(std::max(0.0, var) / static_cast<double>(n));
    }
  }
  return out;
}

Matrix lyapunov_solve(const Matrix& q, const Matrix& r) {
  const int n = static_cast<int>(q.rows());
  if (q.cols() != n || r.rows() != n || r.cols() != n)
    throw std::invalid_argument("lyapunov_solve: shape mismatch");
  if (!q.isApprox(q.transpose(), 1e-10))
    throw std::invalid_argument("lyapunov_solve: Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(q);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("lyapunov_solve: Q must be positive definite");

  Matrix m = Matrix::Zero(n * n, n * n);
  // (I (x) Q + Q (x) I) vec(S) = vec(R), column-major vec.
  for (int c = 0; c < n; ++c) m.block(c * n, c * n, n, n) += q;
  for (int c = 0; c < n; ++c)
    for (int d = 0; d < n; ++d)
      for (int i = 0; i < n; ++i) m(c * n + i, d * n + i) += q(c, d);
  const Eigen::Map<const Vector> rv(r.data(), n * n);
  Vector sv = m.partialPivLu().solve(rv);
  Matrix s = Eigen::Map<Matrix>(sv.data(), n, n);
  return 0.5 * (s + s.transpose());
}

DeltaCovariance delta_covariance(const Matrix& sigma, const Vector& theta) {
  const int L = static_cast<int>(theta.size());
  if (sigma.rows() != L || sigma.cols() != L)
    throw std::invalid_argument("delta_covariance: shape mismatch");
  const Matrix g = root_sensitivity(theta).jac;
  DeltaCovariance out;
  out.sigma_bar = g.transpose() * sigma * g;
  out.trace = out.sigma_bar.trace();
  return out;
}

Vector permutation_log_likelihoods(const Matrix& y, const Matrix& theta,
                                   const std::vector<std::vector<int>>& table,
                                   const NoiseModel& noise) {
  const int x = static_cast<int>(table.size());
  Vector out(x);
  for (int i = 0; i < x; ++i) {
    double lw = 0.0;
    for (int r = 0; r < y.rows(); ++r) {
      const int src = table[i][r];
      for (int c = 0; c < y.cols(); ++c) lw += noise.log_density(y(r, c) - theta(src, c));
    }
    out[i] = lw;
  }
  return out;
}

Vector bayes_update(const Vector& pi, const Vector& log_likelihood) {
  if (pi.size() != log_likelihood.size())
    throw std::invalid_argument("bayes_update: size mismatch");
  Vector lg(pi.size());
  for (int i = 0; i < pi.size(); ++i)
    lg[i] = (pi[i] > 0.0 ? std::log(pi[i]) : -std::numeric_limits<double>::infinity()) +
            log_likelihood[i];
  const double lmax = lg.maxCoeff();
  if (!std::isfinite(lmax))
    throw std::invalid_argument("bayes_update: all posterior weights vanished");
  Vector w = (lg.array() - lmax).exp();
  return w / w.sum();
}

AnonymityReport map_error_probability(const Vector& pi, const Matrix& theta,
                                      const NoiseModel& noise, long n, std::uint64_t seed) {
  const int L = static_cast<int>(theta.rows());
  if (L < 2 || L > 6)
    throw std::invalid_argument("map_error_probability: L must be in 2..6 (L! states)");
  const auto table = permutation_table(L);
  const int x = static_cast<int>(table.size());
  if (pi.size() != x) throw std::invalid_argument("map_error_probability: prior size != L!");
  if (n < 1) throw std::invalid_argument("map_error_probability: n >= 1 required");

  RngStream rng(seed, 0);
  Vector log_pi(x);
  for (int i = 0; i < x; ++i)
    log_pi[i] = pi[i] > 0.0 ? std::log(pi[i]) : -std::numeric_limits<double>::infinity();

  long errors = 0;
  Matrix y(L, theta.cols());
  for (long k = 0; k < n; ++k) {
    const int state = rng.categorical(pi);
    const auto& p = table[state];
    for (int r = 0; r < L; ++r)
      for (int c = 0; c < theta.cols(); ++c) y(r, c) = theta(p[r], c) + noise.sample(rng);
    const Vector ll = permutation_log_likelihoods(y, theta, table, noise);
    int best = 0;
    double best_val = log_pi[0] + ll[0];
    for (int i = 1; i < x; ++i) {
      const double v = log_pi[i] + ll[i];
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    if (best != state) ++errors;
  }
  AnonymityReport rep;
  rep.n_samples = n;
  rep.n_states = x;
  rep.p_error = static_cast<double>(errors) / static_cast<double>(n);
  rep.ci_halfwidth = 1.96 * std::sqrt(rep.p_error * (1.0 - rep.p_error) / static_cast<double>(n));
  rep.anonymity = rep.p_error * static_cast<double>(x) / static_cast<double>(x - 1);
  return rep;
}

namespace {

// trace(Sigma_bar) is linear in R: tr = sum_ij R_ij (G G')_ij / (Q_ii + Q_jj)
// for diagonal Q, so its Monte-Carlo standard error comes from the per-sample
// quadratic form x' C x.
void delta_trace_mc(const Vector& theta, const NoiseModel& noise, long n, std::uint64_t seed,
                    double* trace, double* se) {
  const int L = static_cast<int>(theta.size());
  const Matrix q = moment_matrix_q(L);
  const Matrix g = root_sensitivity(theta).jac;
  Matrix c(L, L);
  const Matrix gg = g * g.transpose();
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) c(i, j) = gg(i, j) / (q(i, i) + q(j, j));

  const Vector lam = scalar_transform(theta);
  RngStream rng(seed, 0);
  double sum = 0.0, sum_sq = 0.0;
  Vector y(L), x(L);
  for (long k = 0; k < n; ++k) {
    const double psi = rng.gaussian();
    for (int i = 0; i < L; ++i) y[i] = psi * theta[i] + noise.sample(rng);
    const Vector z = scalar_transform(y);
    double pw = 1.0;
    for (int l = 0; l < L; ++l) {
      pw *= psi;
      x[l] = pw * (z[l] - pw * lam[l]);
    }
    const double t = x.dot(c * x);
    sum += t;
    sum_sq += t * t;
  }
  *trace = sum / static_cast<double>(n);
  const double var = sum_sq / n - (*trace) * (*trace);
  *se = std::sqrt(std::max(0.0, var) / static_cast<double>(n));
}

}  // namespace

BlackwellReport blackwell_compare(const Matrix& theta, const NoiseModel& base,
                                  const GarbleKernel& kernel, const Vector& pi, long n,
                                  std::uint64_t seed) {
  const NoiseModel noisier = garble(base, kernel, /*require_mean_preserving=*/true);
  BlackwellReport rep;
  rep.base = map_error_probability(pi, theta, base, n, seed);
  rep.garbled = map_error_probability(pi, theta, noisier, n, seed + 1);

  // Empirical observation covariance under each channel (flattened L*D).
  const int L = static_cast<int>(theta.rows());
  const int D = static_cast<int>(theta.cols());
  const auto table = permutation_table(L);
  const int dim = L * D;
  auto sample_cov = [&](const NoiseModel& noise, std::uint64_t s, Matrix* cov, Matrix* samples) {
    RngStream rng(seed + s, 0);
    samples->resize(n, dim);
    for (long k = 0; k < n; ++k) {
      const auto& p = table[rng.categorical(pi)];
      for (int r = 0; r < L; ++r)
        for (int c = 0; c < D; ++c)
          (*samples)(k, r * D + c) = theta(p[r], c) + noise.sample(rng);
    }
    const Eigen::RowVectorXd mean = samples->colwise().mean();
    samples->rowwise() -= mean;
    *cov = samples->transpose() * (*samples) / static_cast<double>(n - 1);
  };
  Matrix samples_b, samples_g;
  sample_cov(base, 2, &rep.cov_base, &samples_b);
  sample_cov(noisier, 3, &rep.cov_garbled, &samples_g);

  const Matrix diff = rep.cov_garbled - rep.cov_base;
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff);
  int min_idx = 0;
  es.eigenvalues().minCoeff(&min_idx);
  rep.min_eig_diff = es.eigenvalues()(min_idx);
  const Vector u = es.eigenvectors().col(min_idx);
  // std error of u' (Cov_g - Cov_b) u from the projected samples
  auto proj_var_se = [&](const Matrix& centered) {
    const Vector proj = centered * u;
    const Vector sq = proj.array().square();
    const double mean = sq.mean();
    const double var = (sq.array() - mean).square().sum() / static_cast<double>(n - 1);
    return std::sqrt(var / static_cast<double>(n));
  };
  rep.eig_slack = 3.0 * std::hypot(proj_var_se(samples_b), proj_var_se(samples_g));

  if (D == 1) {
    delta_trace_mc(canonical_rows(theta).col(0), base, n, seed + 4, &rep.trace_base,
                   &rep.trace_base_se);
    delta_trace_mc(canonical_rows(theta).col(0), noisier, n, seed + 5, &rep.trace_garbled,
                   &rep.trace_garbled_se);
    rep.trace_ordered = rep.trace_base <
                        rep.trace_garbled + 3.0 * std::hypot(rep.trace_base_se, rep.trace_garbled_se);
  } else {
    rep.trace_ordered = true;  // trace path is defined for D = 1 closed forms only
  }
  const double p_se =
      std::hypot(rep.base.ci_halfwidth / 1.96, rep.garbled.ci_halfwidth / 1.96);
  rep.p_error_ordered = rep.base.p_error <= rep.garbled.p_error + 3.0 * p_se;
  rep.cov_ordered = rep.min_eig_diff >= -rep.eig_slack;
  return rep;
}

EmpiricalCovariance empirical_asymptotic_covariance(const SystemSpec& spec,
                                                    const PermutationModel& perm,
                                                    const FilterConfig& filter, long n_steps,
                                                    int n_trials, std::uint64_t seed) {
  if (n_trials < 2) throw std::invalid_argument("empirical_asymptotic_covariance: n_trials >= 2");
  std::vector<Vector> lambda_end(n_trials);
  std::vector<Vector> theta_end(n_trials);
  std::vector<char> ok(n_trials, 0);
  detail::parallel_for(n_trials, [&](int t) {
    TrajectoryGenerator gen(spec, perm, std::nullopt, seed, static_cast<std::uint64_t>(t),
                            /*with_hidden=*/true);
    auto f = make_filter(filter, spec.L, spec.D);
    try {
      for (long k = 0; k < n_steps; ++k) f->step(gen.next());
      lambda_end[t] = f->coefficient_state();
      const Matrix est = f->estimate().canonical().rows();
      theta_end[t] = Eigen::Map<const Vector>(est.data(), est.size());
      ok[t] = 1;
    } catch (const DivergedError&) {
      ok[t] = 0;
    }
  });

  std::vector<int> keep;
  for (int t = 0; t < n_trials; ++t)
    if (ok[t]) keep.push_back(t);
  EmpiricalCovariance out;
  out.n_trials = static_cast<int>(keep.size());
  out.diverged = n_trials - out.n_trials;
  if (out.n_trials < 2) throw DivergedError("empirical_asymptotic_covariance: too many divergences");

  auto covariance = [&](const std::vector<Vector>& rows) {
    const int dim = static_cast<int>(rows[keep[0]].size());
    Vector mean = Vector::Zero(dim);
    for (int t : keep) mean += rows[t];
    mean /= static_cast<double>(keep.size());
    Matrix cov = Matrix::Zero(dim, dim);
    for (int t : keep) {
      const Vector d = rows[t] - mean;
      cov += d * d.transpose();
    }
    return Matrix(cov / static_cast<double>(keep.size() - 1));
  };
  const double inv_eps = 1.0 / filter.eps;
  out.lambda_cov = inv_eps * covariance(lambda_end);
  out.theta_cov = inv_eps * covariance(theta_end);
  out.theta_trace = out.theta_cov.trace();
  return out;
}

double tracking_mse(const SystemSpec& spec, const HyperChain& hyper, double eps, long n_steps,
                    int n_trials, std::uint64_t seed) {
  if (spec.D != 1) throw std::invalid_argument("tracking_mse: D = 1 required");
  if (n_steps < 4) throw std::invalid_argument("tracking_mse: horizon too short");
  std::vector<double> per_trial(n_trials, 0.0);
  detail::parallel_for(n_trials, [&](int t) {
    TrajectoryGenerator gen(spec, PermutationModel::uniform(), hyper, seed,
                            static_cast<std::uint64_t>(t), /*with_hidden=*/true);
    FilterConfig fc;
    fc.mode = FilterMode::SymScalar;
    fc.eps = eps;
    SymScalarFilter filter(fc, spec.L);
    double acc = 0.0;
    long count = 0;
    for (long k = 1; k <= n_steps; ++k) {
      const ObservationRecord rec = gen.next();
      filter.step(rec);
      if (k > n_steps / 2) {
        const Vector lam_true = scalar_transform(rec.hidden->theta.col(0));
        acc += (filter.coefficients() - lam_true).squaredNorm();
        ++count;
      }
    }
    per_trial[t] = acc / static_cast<double>(count);
  });
  double mean = 0.0;
  for (double v : per_trial) mean += v;
  return mean / static_cast<double>(n_trials);
}

}  // namespace symlms
