#pragma once

#include <cmath>

#include "tsvarsel/kernel.hpp"

namespace tsvarsel {

inline constexpr double kVarianceStabilizer = 1e-8;

struct MmdStats {
  double mmd2 = 0.0;
  double variance = 0.0;
  double ratio = 0.0;
};

namespace detail {

inline void check_blocks(const Matrix& Kxx, const Matrix& Kyy, const Matrix& Kxy) {
  require(Kxx.rows() == Kxx.cols() && Kyy.rows() == Kyy.cols(), "self Gram blocks must be square");
  require(Kxy.rows() == Kxx.rows() && Kxy.cols() == Kyy.rows(), "cross Gram block shape mismatch");
  require(Kxx.rows() >= 2 && Kyy.rows() >= 2, "unbiased MMD needs at least two samples per side");
}

/// H_ij = Kxx_ij + Kyy_ij - Kxy_ij - Kxy_ji with a zero diagonal.
inline Matrix h_matrix(const Matrix& Kxx, const Matrix& Kyy, const Matrix& Kxy) {
  Matrix H = Kxx + Kyy - Kxy - Kxy.transpose();
  H.diagonal().setZero();
  return H;
}

/// Row sums of H without forming it.
inline Vector h_row_sums(const Matrix& Kxx, const Matrix& Kyy, const Matrix& Kxy) {
  Vector r = Kxx.rowwise().sum() + Kyy.rowwise().sum() - Kxy.rowwise().sum() - Kxy.colwise().sum().transpose();
  r -= Kxx.diagonal() + Kyy.diagonal() - 2.0 * Kxy.diagonal();
  return r;
}

}  // namespace detail

/// Unbiased U-statistic estimate of MMD^2. May be negative.
inline double mmd2_unbiased(const Matrix& Kxx, const Matrix& Kyy, const Matrix& Kxy) {
  detail::check_blocks(Kxx, Kyy, Kxy);
  const double n = static_cast<double>(Kxx.rows());
  const double m = static_cast<double>(Kyy.rows());
  const double sxx = Kxx.sum() - Kxx.trace();
  const double syy = Kyy.sum() - Kyy.trace();
  return sxx / (n * (n - 1.0)) + syy / (m * (m - 1.0)) - 2.0 * Kxy.sum() / (n * m);
}

/// Variance estimate of the unbiased MMD^2 for paired samples (n = m),
///   max(0, 4/n^3 sum_i (sum_j H_ij)^2 - 4/n^4 (sum_ij H_ij)^2).
inline double mmd2_variance(const Matrix& Kxx, const Matrix& Kyy, const Matrix& Kxy) {
  detail::check_blocks(Kxx, Kyy, Kxy);
  detail::require(Kxx.rows() == Kyy.rows(), "variance estimator needs equal sample sizes");
  const double n = static_cast<double>(Kxx.rows());
  const Vector r = detail::h_row_sums(Kxx, Kyy, Kxy);
  const double S = r.sum();
  const double v = 4.0 / (n * n * n) * r.squaredNorm() - 4.0 / (n * n * n * n) * S * S;
  return std::max(0.0, v);
}

inline MmdStats power_ratio(double mmd2, double variance) {
  return {mmd2, variance, mmd2 / std::sqrt(variance + kVarianceStabilizer)};
}

inline MmdStats power_ratio(const GramBlocks& K) {
  return power_ratio(mmd2_unbiased(K.xx, K.yy, K.xy), mmd2_variance(K.xx, K.yy, K.xy));
}

struct ObjectiveResult {
  double objective = 0.0;
  Vector gradient;
  MmdStats stats;
};

/// Objective -log(ratio) + lambda*|a|_1 and its gradient in the weights.
/// When ratio <= 0 the logarithm is dropped and -ratio is used instead, so the
/// descent direction still raises the ratio. The L1 subgradient at 0 is 0.
template <KernelModel Model>
ObjectiveResult objective_and_gradient(const Model& model, const Vector& a, double lambda) {
  detail::require(lambda >= 0.0, "regularisation constant must be nonnegative");
  detail::require(a.size() == model.groups(), "weight vector size mismatch");

  const GramBlocks K = model.gram(a);
  detail::require(K.xx.rows() == K.yy.rows() && K.xx.rows() >= 2,
                  "objective needs equal sample sizes of at least two");
  const double n = static_cast<double>(K.xx.rows());
  const Vector r = detail::h_row_sums(K.xx, K.yy, K.xy);
  const double S = r.sum();
  const double raw_var = 4.0 / (n * n * n) * r.squaredNorm() - 4.0 / (n * n * n * n) * S * S;

  ObjectiveResult out;
  out.stats = power_ratio(mmd2_unbiased(K.xx, K.yy, K.xy), std::max(0.0, raw_var));
  const double ell = out.stats.ratio;
  const double denom = out.stats.variance + kVarianceStabilizer;

  const bool log_branch = ell > 0.0;
  const double data_term = log_branch ? -std::log(ell) : -ell;
  const double dobj_dell = log_branch ? -1.0 / ell : -1.0;

  const double dell_dmmd = 1.0 / std::sqrt(denom);
  const double dell_dvar = raw_var > 0.0 ? -0.5 * out.stats.mmd2 / (denom * std::sqrt(denom)) : 0.0;

  // dVar/dH_ij = alpha r_i - beta off the diagonal.
  const double alpha = 8.0 / (n * n * n);
  const double beta = 8.0 / (n * n * n * n) * S;
  const double cm = dobj_dell * dell_dmmd;
  const double cv = dobj_dell * dell_dvar;
  const Eigen::Index N = K.xx.rows();
  const Vector u = (cv * alpha * r.array() + (cm / (n * (n - 1.0)) - cv * beta)).matrix();
  const double xy_shift = 2.0 * cv * beta - 2.0 * cm / (n * n);
  GramBlocks dK;
  dK.xx.resize(N, N);
  dK.xy.resize(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    dK.xx.col(j) = u;
    dK.xx(j, j) = 0.0;
    dK.xy.col(j).array() = -cv * alpha * (r.array() + r[j]) + xy_shift;
    dK.xy(j, j) = -2.0 * cm / (n * n);
  }
  dK.yy = dK.xx;

  out.gradient = model.backprop(a, K, dK);
  out.gradient += lambda * a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  out.objective = data_term + lambda * a.cwiseAbs().sum();
  return out;
}

inline ObjectiveResult objective_and_gradient(const Vector& a, const Vector& gamma, const Matrix& X_tr,
                                              const Matrix& Y_tr, double lambda) {
  detail::require(X_tr.rows() == Y_tr.rows() && X_tr.rows() >= 2,
                  "objective needs equal train sizes of at least two");
  return objective_and_gradient(ArdModel(X_tr, Y_tr, gamma), a, lambda);
}

}  // namespace tsvarsel
