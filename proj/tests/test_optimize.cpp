#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tsvarsel/optimize.hpp"
#include "tsvarsel/synth.hpp"

using namespace tsvarsel;

namespace {

struct BucketData {
  Matrix x, y;
  Vector gamma;
};

BucketData setting1_train(std::uint64_t seed, int bucket) {
  const auto [pair, truth] = generate_setting1(seed);
  const auto plan = make_equal_bucket_plan(pair.length(), 10, 0.8, seed);
  const auto split = split_bucket(plan, bucket);
  BucketData d{samples_at(pair.x(), split.train), samples_at(pair.y(), split.train), {}};
  d.gamma = dimensionwise_length_scales(d.x, d.y);
  return d;
}

/// Kernel model whose Gram blocks turn non-finite after a few calls.
struct ExplodingModel {
  mutable int calls = 0;
  Eigen::Index groups() const { return 2; }
  Eigen::Index samples() const { return 3; }
  GramBlocks gram(const Vector&) const {
    ++calls;
    Matrix k = Matrix::Identity(3, 3);
    k(0, 1) = k(1, 0) = calls > 4 ? std::numeric_limits<double>::quiet_NaN() : 0.5;
    return {k, Matrix::Identity(3, 3), Matrix::Constant(3, 3, 0.1)};
  }
  Vector backprop(const Vector&, const GramBlocks&, const GramBlocks&) const { return Vector::Ones(2); }
};
static_assert(KernelModel<ExplodingModel>);

}  // namespace

TEST(Optimize, IdenticalSamplesAcceptH0) {
  std::mt19937_64 rng(1);
  const Matrix X = oracle::gaussian(20, 3, rng);
  const auto out = optimize_ard(X, X, Vector::Ones(3), 0.1, OptimizeConfig{});
  EXPECT_EQ(out.stop_reason, StopReason::H0Accepted);
  EXPECT_TRUE(out.h0_accepted());
  EXPECT_EQ(out.ard_weights, Vector::Zero(3));
  EXPECT_EQ(out.epochs_run, OptimizeConfig{}.negative_patience);
}

TEST(Optimize, ChangedVariableGetsLargestWeight) {
  const auto d = setting1_train(2024, 5);
  const auto out = optimize_ard(d.x, d.y, d.gamma, 0.1, OptimizeConfig{});
  EXPECT_FALSE(out.h0_accepted());
  Eigen::Index arg = 0;
  out.ard_weights.maxCoeff(&arg);
  EXPECT_EQ(arg + 1, kChangedVariable);
  for (Eigen::Index k = 0; k < out.ard_weights.size(); ++k)
    if (k != arg) EXPECT_LT(out.ard_weights[k], out.ard_weights[arg]);
}

TEST(Optimize, HugePenaltyZeroesWeights) {
  const auto d = setting1_train(7, 5);
  const auto out = optimize_ard(d.x, d.y, d.gamma, 1e3, OptimizeConfig{});
  EXPECT_EQ(out.ard_weights, Vector::Zero(5));
  EXPECT_TRUE(threshold_weights(out.ard_weights).empty());
}

TEST(Optimize, NonFiniteObjectiveReportsEpoch) {
  try {
    optimize_weights(ExplodingModel{}, 0.0, OptimizeConfig{});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.epoch(), 5);
  }
}

TEST(Optimize, RejectsInvalidConfig) {
  std::mt19937_64 rng(1);
  const Matrix X = oracle::gaussian(5, 2, rng);
  OptimizeConfig c;
  c.initial_lr = -1;
  EXPECT_THROW(optimize_ard(X, X, Vector::Ones(2), 0.1, c), InputError);
  EXPECT_THROW(optimize_ard(X, X, Vector::Ones(2), -0.1, OptimizeConfig{}), InputError);
}

TEST(Optimize, MaxEpochsCap) {
  const auto d = setting1_train(3, 4);
  OptimizeConfig c;
  c.max_epochs = 25;
  const auto out = optimize_ard(d.x, d.y, d.gamma, 0.01, c);
  EXPECT_EQ(out.epochs_run, 25);
  EXPECT_EQ(out.stop_reason, StopReason::MaxEpochs);
}

TEST(OptimizeProperty, DeterministicTrace) {
  const auto d = setting1_train(11, 5);
  OptimizeConfig c;
  c.record_trace = true;
  const auto a = optimize_ard(d.x, d.y, d.gamma, 0.05, c);
  const auto b = optimize_ard(d.x, d.y, d.gamma, 0.05, c);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.ard_weights, b.ard_weights);
  EXPECT_EQ(static_cast<int>(a.trace.size()), a.epochs_run);
}

TEST(OptimizeProperty, BestSoFarNonIncreasingAndWeightsNonNegative) {
  const auto d = setting1_train(5, 4);
  OptimizeConfig c;
  c.record_trace = true;
  double best = std::numeric_limits<double>::infinity();
  double first = 0.0;
  bool nonneg = true, monotone = true;
  const auto out = optimize_ard(d.x, d.y, d.gamma, 0.05, c, [&](int epoch, const Vector& w, const ObjectiveResult& r) {
    if (epoch == 1) first = r.objective;
    nonneg = nonneg && (w.array() >= 0.0).all();
    const double next = std::min(best, r.objective);
    monotone = monotone && next <= best;
    best = next;
  });
  EXPECT_TRUE(nonneg);
  EXPECT_TRUE(monotone);
  EXPECT_LT(best, first);
  EXPECT_TRUE((out.ard_weights.array() >= 0.0).all());
}

TEST(OptimizeProperty, LargerPenaltySelectsFewerVariables) {
  double small = 0.0, large = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = setting1_train(100 + seed, 5);
    small += static_cast<double>(threshold_weights(optimize_ard(d.x, d.y, d.gamma, 0.01, {}).ard_weights).size());
    large += static_cast<double>(threshold_weights(optimize_ard(d.x, d.y, d.gamma, 1.0, {}).ard_weights).size());
  }
  EXPECT_LE(large / 10.0, small / 10.0);
}

TEST(Threshold, Examples) {
  EXPECT_TRUE(threshold_weights(Vector::Zero(5)).empty());
  EXPECT_EQ(threshold_weights((Vector(5) << 0.01, 0.02, 0.95, 0.03, 0.02).finished()), (VariableSet{3}));
  EXPECT_TRUE(threshold_weights(Vector::Ones(5)).empty());
  EXPECT_TRUE(threshold_weights(Vector::Ones(1)).empty());
  EXPECT_EQ(threshold_weights((Vector(4) << 1.0, 0.9, 0.2, 0.1).finished()), (VariableSet{1, 2}));
  EXPECT_THROW(threshold_weights((Vector(2) << 1.0, -0.1).finished()), InputError);
}

TEST(ThresholdProperty, ScaleInvariantAndMonotone) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    const Eigen::Index D = 2 + rep % 8;
    Vector w(D);
    for (Eigen::Index d = 0; d < D; ++d) w[d] = unif(rng) < 0.2 ? 0.0 : unif(rng);
    const VariableSet s = threshold_weights(w);
    for (double c : {1e-3, 0.5, 2.0, 1e3}) EXPECT_EQ(threshold_weights((c * w).eval()), s);
    for (int v : s) EXPECT_TRUE(v >= 1 && v <= D);
    for (int v : s) {
      Vector up = w;
      up[v - 1] += unif(rng) * 2.0;
      const VariableSet t = threshold_weights(up);
      EXPECT_TRUE(std::find(t.begin(), t.end(), v) != t.end()) << "raising a selected weight dropped it";
    }
  }
}
