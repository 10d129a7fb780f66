#pragma once

// Straightforward reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double ard_kernel(const Vector& a, const Vector& gamma, const Eigen::RowVectorXd& x,
                         const Eigen::RowVectorXd& y) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double diff = x[d] - y[d];
    s += a[d] * a[d] * diff * diff / (gamma[d] * gamma[d]);
  }
  return std::exp(-s / static_cast<double>(a.size()));
}

inline double mmd2(const Vector& a, const Vector& gamma, const Matrix& X, const Matrix& Y) {
  const auto n = X.rows(), m = Y.rows();
  double sxx = 0, syy = 0, sxy = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) sxx += ard_kernel(a, gamma, X.row(i), X.row(j));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) syy += ard_kernel(a, gamma, Y.row(i), Y.row(j));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) sxy += ard_kernel(a, gamma, X.row(i), Y.row(j));
  return sxx / double(n * (n - 1)) + syy / double(m * (m - 1)) - 2.0 * sxy / double(n * m);
}

/// Triple-loop variance of the unbiased estimator from raw Gram blocks (n = m).
inline double mmd2_variance(const Matrix& Kxx, const Matrix& Kyy, const Matrix& Kxy) {
  const auto n = Kxx.rows();
  const double nd = static_cast<double>(n);
  double first = 0.0, total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      row += Kxx(i, j) + Kyy(i, j) - Kxy(i, j) - Kxy(j, i);
    }
    first += row * row;
    total += row;
  }
  return std::max(0.0, 4.0 / (nd * nd * nd) * first - 4.0 / (nd * nd * nd * nd) * total * total);
}

/// W1 as the integral of |F_u - F_v| evaluated on the merged support.
inline double wasserstein1(std::vector<double> u, std::vector<double> v) {
  std::vector<double> pts = u;
  pts.insert(pts.end(), v.begin(), v.end());
  std::sort(pts.begin(), pts.end());
  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [x](double e) { return e <= x; })) /
           static_cast<double>(s.size());
  };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k)
    total += std::abs(cdf(u, pts[k]) - cdf(v, pts[k])) * (pts[k + 1] - pts[k]);
  return total;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double shift = 0.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(rng) + shift;
  return m;
}

}  // namespace oracle
