#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "symlms/rng.hpp"
#include "symlms/types.hpp"

namespace symlms {

/// Zero-mean iid entry noise. Gaussian and Laplacian are parametrized by the
/// standard deviation (the Laplace scale is sigma/sqrt(2) internally).
struct NoiseModel {
  enum class Kind { Gaussian, Laplacian, DiscretePmf };
  Kind kind = Kind::Gaussian;
  double sigma = 1.0;
  Vector support;  // DiscretePmf only
  Vector probs;

  static NoiseModel gaussian(double sigma);
  static NoiseModel laplacian(double sigma);
  static NoiseModel discrete(Vector support, Vector probs);

  void validate() const;  // zero mean to 1e-12, probs sum to 1
  double variance() const;
  double stddev() const;
  double sample(RngStream& rng) const;
  /// log density (or log pmf at a support point) of one entry; used by the
  /// Bayesian posterior and the recursive EM.
  double log_density(double r) const;
  /// d/dr log density; sign-based for Laplacian with subgradient 0 at r = 0.
  double score(double r) const;
};

Matrix sample_noise(const NoiseModel& model, int rows, int cols, RngStream& rng);

/// Observation channel garbling. AddGaussian adds an independent zero-mean
/// Gaussian (a mean-preserving spread); Matrix composes a row-stochastic
/// kernel over the support of a discrete model.
struct GarbleKernel {
  enum class Kind { Identity, AddGaussian, Matrix };
  Kind kind = Kind::Identity;
  double sigma_g = 0.0;
  symlms::Matrix m;

  static GarbleKernel identity();
  static GarbleKernel add_gaussian(double sigma_g);
  static GarbleKernel matrix(symlms::Matrix m);
};

/// Derived (noisier) noise model: base composed with the kernel. With
/// require_mean_preserving, a Matrix kernel must fix the conditional mean of
/// every support point.
NoiseModel garble(const NoiseModel& base, const GarbleKernel& kernel,
                  bool require_mean_preserving = true);

/// All L! permutations of {0..L-1} in lexicographic order; index 0 is the
/// identity. Guarded at L <= 8.
std::vector<std::vector<int>> permutation_table(int L);

struct PermutationModel {
  enum class Kind { UniformIid, CategoricalIid, Markov };
  Kind kind = Kind::UniformIid;
  Vector pi;         // over L! states (CategoricalIid; Markov initial)
  Matrix generator;  // Markov: irreducible generator Q, P = I + rate*Q
  double rate = 0.0;

  static PermutationModel uniform();
  static PermutationModel categorical(Vector pi);
  static PermutationModel markov(Vector pi, Matrix generator, double rate);

  void validate(int n_states) const;
};

/// Slow Markov drift of the true parameter matrix over a finite state list,
/// transition I + rate*Q. The transition applies before each emission.
struct HyperChain {
  std::vector<Matrix> states;
  Matrix generator;
  double rate = 0.0;
  Vector initial;  // distribution over states

  void validate(int L, int D) const;
};

struct InputModel {
  enum class Kind { GaussianIid, Identity, Fixed };
  Kind kind = Kind::GaussianIid;
  double sigma = 1.0;
  Matrix fixed;

  static InputModel gaussian(double sigma = 1.0);
  static InputModel identity();
  static InputModel fixed_matrix(Matrix m);
};

/// Scripted one-time change of the true parameters: theta_after applies for
/// steps k > switch_at.
struct ParameterSwitch {
  long switch_at = 0;
  Matrix theta_after;
};

struct SystemSpec {
  int L = 0;
  int D = 0;
  Matrix theta_true;  // L x D, ordered rows
  InputModel input;
  NoiseModel noise;
  std::optional<ParameterSwitch> drift;

  void validate() const;
};

struct HiddenState {
  int perm_index = 0;         // state of the permutation process
  std::vector<int> perm;      // row r of y came from system perm[r]
  Matrix noise;               // L x D, in system order
  Matrix theta;               // true parameters at this step
  int hyper_state = -1;
};

struct ObservationRecord {
  long k = 0;
  Matrix psi;    // D x D
  Matrix y_set;  // L x D; rows in anonymized storage order
  std::optional<HiddenState> hidden;
};

/// Streaming generator; deterministic given (seed, stream).
class TrajectoryGenerator {
 public:
  TrajectoryGenerator(SystemSpec spec, PermutationModel perm, std::optional<HyperChain> hyper,
                      std::uint64_t seed, std::uint64_t stream = 0, bool with_hidden = true);

  ObservationRecord next();
  long step() const { return k_; }
  const SystemSpec& spec() const { return spec_; }

 private:
  SystemSpec spec_;
  PermutationModel perm_;
  std::optional<HyperChain> hyper_;
  std::vector<std::vector<int>> table_;
  RngStream rng_;
  bool with_hidden_;
  long k_ = 0;
  int perm_state_ = 0;
  int hyper_state_ = 0;
  Matrix theta_now_;
  Matrix pred_;   // step scratch
  Matrix noise_;  // step scratch
};

std::vector<ObservationRecord> generate_trajectory(const SystemSpec& spec,
                                                   const PermutationModel& perm,
                                                   const std::optional<HyperChain>& hyper, long n,
                                                   std::uint64_t seed, std::uint64_t stream = 0,
                                                   bool with_hidden = true);

}  // namespace symlms
