#include "symlms/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "symlms/rng.hpp"

using namespace symlms;

namespace {

SystemSpec small_spec() {
  SystemSpec spec;
  spec.L = 3;
  spec.D = 2;
  Matrix theta(3, 2);
  theta << 1, 2, 3, 4, 5, 6;
  spec.theta_true = theta;
  spec.input = InputModel::gaussian(1.0);
  spec.noise = NoiseModel::gaussian(0.5);
  return spec;
}

}  // namespace

TEST(NoiseModel, LaplacianStdMatchesParameter) {
  RngStream rng(1, 0);
  const NoiseModel model = NoiseModel::laplacian(2.0);
  double sum = 0.0, sum_sq = 0.0;
  const long n = 1000000;
  for (long i = 0; i < n; ++i) {
    const double v = model.sample(rng);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(var, 4.0, 0.02 * 4.0);
  EXPECT_LE(std::abs(mean), 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST(NoiseModel, GaussianZeroSigmaAndMeanZero) {
  RngStream rng(2, 0);
  EXPECT_EQ(NoiseModel::gaussian(0.0).sample(rng), 0.0);
  const NoiseModel g = NoiseModel::gaussian(1.5);
  double sum = 0.0;
  const long n = 1000000;
  for (long i = 0; i < n; ++i) sum += g.sample(rng);
  EXPECT_LE(std::abs(sum / n), 3.0 * 1.5 / std::sqrt(static_cast<double>(n)));
}

TEST(NoiseModel, DiscretePmfSymmetric) {
  Vector support(2), probs(2);
  support << -1, 1;
  probs << 0.5, 0.5;
  const NoiseModel model = NoiseModel::discrete(support, probs);
  RngStream rng(3, 0);
  double sum = 0.0;
  const long n = 1000000;
  for (long i = 0; i < n; ++i) sum += model.sample(rng);
  EXPECT_LE(std::abs(sum / n), 3.0 / std::sqrt(static_cast<double>(n)));
  Vector bad_probs(2);
  bad_probs << 0.7, 0.3;  // mean 0.4 != 0
  EXPECT_THROW(NoiseModel::discrete(support, bad_probs), std::invalid_argument);
}

TEST(Garble, GaussianComposition) {
  const NoiseModel g = garble(NoiseModel::gaussian(1.0), GarbleKernel::add_gaussian(1.0));
  EXPECT_EQ(g.kind, NoiseModel::Kind::Gaussian);
  EXPECT_NEAR(g.sigma, std::sqrt(2.0), 1e-12);
  const NoiseModel same = garble(NoiseModel::laplacian(2.0), GarbleKernel::identity());
  EXPECT_EQ(same.kind, NoiseModel::Kind::Laplacian);
  EXPECT_EQ(same.sigma, 2.0);
}

TEST(Garble, DiscreteKernel) {
  Vector support(2), probs(2);
  support << -1, 1;
  probs << 0.5, 0.5;
  const NoiseModel base = NoiseModel::discrete(support, probs);
  Matrix kernel(2, 2);
  kernel << 0.75, 0.25, 0.25, 0.75;
  // requesting the mean-preserving property must fail for this kernel
  EXPECT_THROW(garble(base, GarbleKernel::matrix(kernel), true), std::invalid_argument);
  const NoiseModel garbled = garble(base, GarbleKernel::matrix(kernel), false);
  EXPECT_NEAR(garbled.probs.dot(garbled.support), 0.0, 1e-12);
  EXPECT_NEAR(garbled.probs.sum(), 1.0, 1e-12);
}

TEST(PermutationTable, Lexicographic) {
  const auto t2 = permutation_table(2);
  ASSERT_EQ(t2.size(), 2);
  EXPECT_EQ(t2[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(t2[1], (std::vector<int>{1, 0}));
  EXPECT_EQ(permutation_table(3).size(), 6);
  const auto t4 = permutation_table(4);
  EXPECT_EQ(t4.size(), 24);
  EXPECT_EQ(t4[0], (std::vector<int>{0, 1, 2, 3}));
  EXPECT_THROW(permutation_table(9), std::invalid_argument);
}

TEST(Trajectory, ReproducibleBitwise) {
  const SystemSpec spec = small_spec();
  const auto a = generate_trajectory(spec, PermutationModel::uniform(), std::nullopt, 200, 42);
  const auto b = generate_trajectory(spec, PermutationModel::uniform(), std::nullopt, 200, 42);
  for (int k = 0; k < 200; ++k) {
    ASSERT_TRUE((a[k].psi.array() == b[k].psi.array()).all());
    ASSERT_TRUE((a[k].y_set.array() == b[k].y_set.array()).all());
  }
  const auto c = generate_trajectory(spec, PermutationModel::uniform(), std::nullopt, 1, 43);
  EXPECT_FALSE((a[0].psi.array() == c[0].psi.array()).all());
}

TEST(Trajectory, HiddenFieldsReconstructObservation) {
  const SystemSpec spec = small_spec();
  const auto records = generate_trajectory(spec, PermutationModel::uniform(), std::nullopt, 100, 7);
  for (const auto& rec : records) {
    const auto& h = *rec.hidden;
    for (int r = 0; r < spec.L; ++r) {
      const Vector expect =
          rec.psi * h.theta.row(h.perm[r]).transpose() + h.noise.row(h.perm[r]).transpose();
      for (int c = 0; c < spec.D; ++c) ASSERT_EQ(rec.y_set(r, c), expect[c]);
    }
  }
}

TEST(Trajectory, NoiselessInvertibleInputRecoversParameters) {
  SystemSpec spec = small_spec();
  spec.noise = NoiseModel::gaussian(0.0);
  const auto records = generate_trajectory(spec, PermutationModel::uniform(), std::nullopt, 5, 11);
  for (const auto& rec : records) {
    const Matrix recovered = rec.psi.partialPivLu().solve(rec.y_set.transpose()).transpose();
    // recovered rows must equal the true rows as a set
    EXPECT_LE(ParameterSet(recovered).set_distance(ParameterSet(spec.theta_true)), 1e-9);
  }
}

TEST(Trajectory, UniformPermutationFrequencies) {
  SystemSpec spec = small_spec();
  spec.D = 1;
  spec.theta_true = Matrix::Zero(3, 1);
  spec.input = InputModel::identity();
  spec.noise = NoiseModel::gaussian(0.0);
  TrajectoryGenerator gen(spec, PermutationModel::uniform(), std::nullopt, 17);
  const long n = 100000;
  std::vector<long> counts(6, 0);
  for (long i = 0; i < n; ++i) ++counts[gen.next().hidden->perm_index];
  double chi2 = 0.0;
  const double expect = n / 6.0;
  for (long c : counts) chi2 += (c - expect) * (c - expect) / expect;
  EXPECT_LT(chi2, 15.086);  // chi-square df = 5 at alpha = 0.01
}

TEST(Trajectory, MarkovPermutationTransitions) {
  SystemSpec spec = small_spec();
  spec.L = 2;
  spec.theta_true = Matrix::Zero(2, 2);
  spec.noise = NoiseModel::gaussian(0.0);
  Matrix q(2, 2);
  q << -1, 1, 2, -2;
  Vector pi(2);
  pi << 0.5, 0.5;
  const double mu = 0.2;
  TrajectoryGenerator gen(spec, PermutationModel::markov(pi, q, mu), std::nullopt, 23);
  const long n = 100000;
  Matrix counts = Matrix::Zero(2, 2);
  int prev = gen.next().hidden->perm_index;
  for (long i = 1; i < n; ++i) {
    const int cur = gen.next().hidden->perm_index;
    counts(prev, cur) += 1.0;
    prev = cur;
  }
  for (int i = 0; i < 2; ++i) {
    const double row_total = counts.row(i).sum();
    for (int j = 0; j < 2; ++j) {
      const double p = (i == j ? 1.0 : 0.0) + mu * q(i, j);
      const double se = std::sqrt(p * (1.0 - p) / row_total);
      EXPECT_LE(std::abs(counts(i, j) / row_total - p), 3.0 * se);
    }
  }
}

TEST(Trajectory, ScriptedParameterSwitch) {
  SystemSpec spec;
  spec.L = 2;
  spec.D = 1;
  Matrix before(2, 1), after(2, 1);
  before << 4, 5;
  after << 1, 3;
  spec.theta_true = before;
  spec.input = InputModel::identity();
  spec.noise = NoiseModel::gaussian(0.0);
  spec.drift = ParameterSwitch{5, after};
  TrajectoryGenerator gen(spec, PermutationModel::uniform(), std::nullopt, 29);
  for (int k = 1; k <= 10; ++k) {
    const auto rec = gen.next();
    const Matrix& expect = k <= 5 ? before : after;
    EXPECT_TRUE((rec.hidden->theta.array() == expect.array()).all()) << "k=" << k;
  }
}

TEST(Trajectory, HyperChainStatesAndGuard) {
  SystemSpec spec;
  spec.L = 2;
  spec.D = 1;
  Matrix a(2, 1), b(2, 1);
  a << 1, 3;
  b << 2, 4;
  spec.theta_true = a;
  spec.input = InputModel::identity();
  spec.noise = NoiseModel::gaussian(0.0);
  HyperChain hyper;
  hyper.states = {a, b};
  hyper.generator = Matrix(2, 2);
  hyper.generator << -1, 1, 1, -1;
  hyper.rate = 0.05;
  hyper.initial = Vector::Constant(2, 0.5);
  TrajectoryGenerator gen(spec, PermutationModel::uniform(), hyper, 31);
  int switches = 0;
  int prev = gen.next().hidden->hyper_state;
  for (int k = 0; k < 2000; ++k) {
    const int cur = gen.next().hidden->hyper_state;
    if (cur != prev) ++switches;
    prev = cur;
  }
  EXPECT_GT(switches, 40);  // rate 0.05 over 2000 steps
  hyper.rate = 2.0;  // rate * |q_ii| > 1
  EXPECT_THROW(TrajectoryGenerator(spec, PermutationModel::uniform(), hyper, 31),
               std::invalid_argument);
}
