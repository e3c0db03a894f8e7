#pragma once

#include <cstdint>
#include <vector>

#include "symlms/filters.hpp"
#include "symlms/simulate.hpp"
#include "symlms/types.hpp"

namespace symlms {

/// Regressor second-moment matrix of the scalar coefficient bank under
/// standard Gaussian input: diag of the even moments (2l-1)!!, l = 1..L.
Matrix moment_matrix_q(int L);

/// Closed-form driving-noise covariance for L = 2, D = 1:
/// diag(2 sigma^2, 15 sigma^2 (theta_1^2 + theta_2^2) + 3 sigma^4).
Matrix noise_covariance_r_closed_form(const Vector& theta, double sigma);

struct MonteCarloMatrix {
  Matrix value;
  Matrix std_error;
  long n_samples = 0;
};

/// Monte-Carlo covariance of psi^l w_l (D = 1, standard Gaussian input),
/// where w is the pseudo-observation noise z - psi^l e_l(theta). Full matrix
/// with entrywise standard errors.
MonteCarloMatrix noise_covariance_r_mc(const Vector& theta, const NoiseModel& noise, long n,
                                       std::uint64_t seed);

/// Unique symmetric solution of Q S + S Q = R for symmetric positive-definite
/// Q, via the vectorized system (I (x) Q + Q (x) I) vec(S) = vec(R).
Matrix lyapunov_solve(const Matrix& q, const Matrix& r);

struct DeltaCovariance {
  Matrix sigma_bar;
  double trace = 0.0;
};

/// Parameter-estimate covariance from the coefficient covariance by the delta
/// method through the set inversion (D = 1, distinct members).
DeltaCovariance delta_covariance(const Matrix& sigma, const Vector& theta);

/// Log-likelihood log B_{iy} of the observation matrix y (psi = I) for every
/// permutation state i, under iid entry noise.
Vector permutation_log_likelihoods(const Matrix& y, const Matrix& theta,
                                   const std::vector<std::vector<int>>& table,
                                   const NoiseModel& noise);

/// One Bayes step in log space: posterior proportional to prior * likelihood.
/// Throws when every state has vanishing likelihood.
Vector bayes_update(const Vector& pi, const Vector& log_likelihood);

struct AnonymityReport {
  double p_error = 0.0;
  double ci_halfwidth = 0.0;  // 95% normal CI
  double anonymity = 0.0;     // p_error * X / (X - 1)
  long n_samples = 0;
  int n_states = 0;
};

/// Monte-Carlo expected error probability of the MAP permutation estimate
/// (psi = I, x ~ pi, y ~ B_x). Factorial guard L <= 6.
AnonymityReport map_error_probability(const Vector& pi, const Matrix& theta,
                                      const NoiseModel& noise, long n, std::uint64_t seed);

struct BlackwellReport {
  AnonymityReport base;
  AnonymityReport garbled;
  // Empirical observation covariance under each channel, with the minimum
  // eigenvalue of (garbled - base) and its 3-standard-error slack.
  Matrix cov_base, cov_garbled;
  double min_eig_diff = 0.0;
  double eig_slack = 0.0;
  // Asymptotic parameter-covariance traces via the Monte-Carlo R path.
  double trace_base = 0.0, trace_base_se = 0.0;
  double trace_garbled = 0.0, trace_garbled_se = 0.0;
  bool p_error_ordered = false;
  bool cov_ordered = false;
  bool trace_ordered = false;
};

/// Orderings induced by garbling the observation channel: MAP error
/// probability, observation covariance (Loewner, with statistical slack), and
/// the delta-method covariance trace.
BlackwellReport blackwell_compare(const Matrix& theta, const NoiseModel& base,
                                  const GarbleKernel& kernel, const Vector& pi, long n,
                                  std::uint64_t seed);

struct EmpiricalCovariance {
  Matrix lambda_cov;  // eps^{-1} * cov of terminal coefficient estimates
  Matrix theta_cov;   // eps^{-1} * cov of terminal canonically ordered estimates
  double theta_trace = 0.0;
  int n_trials = 0;
  int diverged = 0;
};

/// Terminal-deviation covariance over independent filter trials, scaled by
/// 1/eps for comparison against the asymptotic covariance.
EmpiricalCovariance empirical_asymptotic_covariance(const SystemSpec& spec,
                                                    const PermutationModel& perm,
                                                    const FilterConfig& filter, long n_steps,
                                                    int n_trials, std::uint64_t seed);

/// Time-averaged coefficient tracking error E |lambda(k) - lambda^o(k)|^2
/// over the second half of the horizon, averaged over trials (D = 1).
double tracking_mse(const SystemSpec& spec, const HyperChain& hyper, double eps, long n_steps,
                    int n_trials, std::uint64_t seed);

}  // namespace symlms
