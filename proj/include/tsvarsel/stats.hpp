#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tsvarsel/core.hpp"

namespace tsvarsel {

namespace detail {

/// W1 between two sorted samples: integral of |F_u - F_v| over the merged
/// breakpoints.
inline double wasserstein1_sorted(std::span<const double> u, std::span<const double> v) {
  const double n = static_cast<double>(u.size());
  const double m = static_cast<double>(v.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(u.front(), v.front());
  double total = 0.0;
  while (i < u.size() || j < v.size()) {
    const double next = j >= v.size() || (i < u.size() && u[i] <= v[j]) ? u[i] : v[j];
    total += std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m) * (next - prev);
    while (i < u.size() && u[i] == next) ++i;
    while (j < v.size() && v[j] == next) ++j;
    prev = next;
  }
  return total;
}

}  // namespace detail

/// 1-Wasserstein distance between two empirical distributions on the line.
inline double wasserstein1_1d(std::span<const double> u, std::span<const double> v) {
  detail::require(!u.empty() && !v.empty(), "Wasserstein distance needs non-empty samples");
  std::vector<double> su(u.begin(), u.end());
  std::vector<double> sv(v.begin(), v.end());
  std::sort(su.begin(), su.end());
  std::sort(sv.begin(), sv.end());
  return detail::wasserstein1_sorted(su, sv);
}

inline double wasserstein1_1d(const Vector& u, const Vector& v) {
  return wasserstein1_1d(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                         std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// `count` directions drawn uniformly from the unit sphere in R^dims, one per row.
inline Matrix random_directions(Eigen::Index dims, int count, std::uint64_t seed) {
  detail::require(dims >= 1 && count >= 1, "need at least one dimension and one projection");
  auto rng = make_engine(seed, "sliced-directions");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix theta(count, dims);
  for (int r = 0; r < count; ++r) {
    double norm = 0.0;
    do {
      for (Eigen::Index d = 0; d < dims; ++d) theta(r, d) = normal(rng);
      norm = theta.row(r).norm();
    } while (norm == 0.0);
    theta.row(r) /= norm;
  }
  return theta;
}

/// Mean over the given directions of W1 between the projected samples.
inline double sliced_wasserstein(const Matrix& X, const Matrix& Y, const Matrix& directions) {
  detail::require(X.cols() == Y.cols() && directions.cols() == X.cols(), "sliced Wasserstein dimension mismatch");
  detail::require(X.rows() >= 1 && Y.rows() >= 1, "sliced Wasserstein needs non-empty samples");
  const Matrix px = X * directions.transpose();
  const Matrix py = Y * directions.transpose();
  std::vector<double> u(static_cast<std::size_t>(X.rows()));
  std::vector<double> v(static_cast<std::size_t>(Y.rows()));
  double total = 0.0;
  for (Eigen::Index r = 0; r < directions.rows(); ++r) {
    std::copy(px.col(r).begin(), px.col(r).end(), u.begin());
    std::copy(py.col(r).begin(), py.col(r).end(), v.begin());
    std::sort(u.begin(), u.end());
    std::sort(v.begin(), v.end());
    total += detail::wasserstein1_sorted(u, v);
  }
  return total / static_cast<double>(directions.rows());
}

inline double sliced_wasserstein(const Matrix& X, const Matrix& Y, int n_projections, std::uint64_t seed) {
  detail::require(n_projections >= 1, "need at least one projection");
  return sliced_wasserstein(X, Y, random_directions(X.cols(), n_projections, seed));
}

inline constexpr int kProjectionCountMin = 50;
inline constexpr int kProjectionCountMax = 500;
inline constexpr int kProjectionCountStep = 10;
inline constexpr int kProjectionCountRepeats = 5;

/// Candidate projection count in {50, 60, ..., 500} whose five repeated
/// sliced-Wasserstein evaluations have the smallest sample variance.
inline int choose_projection_count(const Matrix& X, const Matrix& Y, std::uint64_t seed) {
  int best_count = kProjectionCountMin;
  double best_var = std::numeric_limits<double>::infinity();
  for (int count = kProjectionCountMin; count <= kProjectionCountMax; count += kProjectionCountStep) {
    double vals[kProjectionCountRepeats];
    double mean = 0.0;
    for (int rep = 0; rep < kProjectionCountRepeats; ++rep) {
      const auto s = derive_seed(seed, "projection-count",
                                 {static_cast<std::uint64_t>(count), static_cast<std::uint64_t>(rep)});
      vals[rep] = sliced_wasserstein(X, Y, count, s);
      mean += vals[rep];
    }
    mean /= kProjectionCountRepeats;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= kProjectionCountRepeats - 1;
    if (var < best_var) {
      best_var = var;
      best_count = count;
    }
  }
  return best_count;
}

struct PermutationTestConfig {
  int n_permutations = 500;
  /// Number of sliced-Wasserstein projections; nullopt selects it with
  /// choose_projection_count.
  std::optional<int> n_projections = 100;
  std::uint64_t seed = 0;
};

struct PermutationTestResult {
  double p_value = 1.0;
  double statistic = 0.0;
  int n_projections = 0;
};

/// Copy of `samples` keeping only the (1-based) selected columns; others are 0.
inline Matrix zero_fill_unselected(const Matrix& samples, const VariableSet& selected) {
  Matrix out = Matrix::Zero(samples.rows(), samples.cols());
  for (int v : selected) {
    detail::require(v >= 1 && v <= samples.cols(), "selected variable out of range");
    out.col(v - 1) = samples.col(v - 1);
  }
  return out;
}

/// Two-sample permutation test with the sliced Wasserstein statistic on the
/// selected variables. The projection directions are drawn once and shared by
/// the observed and permuted statistics. p = (1 + #{s_r >= s_0}) / (1 + R).
inline PermutationTestResult permutation_test_detailed(const Matrix& X_te, const Matrix& Y_te,
                                                       const VariableSet& selected,
                                                       const PermutationTestConfig& config) {
  detail::require(X_te.cols() == Y_te.cols(), "test samples dimension mismatch");
  detail::require(config.n_permutations >= 1, "need at least one permutation");
  PermutationTestResult res;
  if (selected.empty()) return res;
  detail::require(X_te.rows() >= 1 && Y_te.rows() >= 1, "permutation test needs non-empty samples");

  const Matrix Xz = zero_fill_unselected(X_te, selected);
  const Matrix Yz = zero_fill_unselected(Y_te, selected);
  res.n_projections = config.n_projections ? *config.n_projections
                                           : choose_projection_count(Xz, Yz, derive_seed(config.seed, "auto-projections"));
  detail::require(res.n_projections >= 1, "need at least one projection");
  const Matrix theta = random_directions(X_te.cols(), res.n_projections, derive_seed(config.seed, "perm-directions"));

  const Eigen::Index n = Xz.rows();
  const Eigen::Index N = n + Yz.rows();
  Matrix pooled(N, Xz.cols());
  pooled << Xz, Yz;
  const Matrix proj = pooled * theta.transpose();  // N x L

  std::vector<double> u(static_cast<std::size_t>(n));
  std::vector<double> v(static_cast<std::size_t>(N - n));
  auto statistic = [&](const std::vector<Eigen::Index>& order) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < proj.cols(); ++r) {
      for (Eigen::Index i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = proj(order[static_cast<std::size_t>(i)], r);
      for (Eigen::Index i = n; i < N; ++i)
        v[static_cast<std::size_t>(i - n)] = proj(order[static_cast<std::size_t>(i)], r);
      std::sort(u.begin(), u.end());
      std::sort(v.begin(), v.end());
      total += detail::wasserstein1_sorted(u, v);
    }
    return total / static_cast<double>(proj.cols());
  };

  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  res.statistic = statistic(order);

  int exceed = 0;
  for (int r = 1; r <= config.n_permutations; ++r) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto rng = make_engine(config.seed, "perm-shuffle", {static_cast<std::uint64_t>(r)});
    std::shuffle(order.begin(), order.end(), rng);
    if (statistic(order) >= res.statistic) ++exceed;
  }
  res.p_value = (1.0 + exceed) / (1.0 + config.n_permutations);
  return res;
}

inline double permutation_test(const Matrix& X_te, const Matrix& Y_te, const VariableSet& selected,
                               const PermutationTestConfig& config) {
  return permutation_test_detailed(X_te, Y_te, selected, config).p_value;
}

}  // namespace tsvarsel
