#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <vector>

#include "tsvarsel/core.hpp"

namespace tsvarsel {

/// ARD weights a_d and per-dimension length scales gamma_d of
///   k(x, y) = exp(-(1/D) sum_d a_d^2 (x_d - y_d)^2 / gamma_d^2).
struct ArdKernelParams {
  Vector ard_weights;
  Vector length_scales;

  ArdKernelParams(Vector a, Vector gamma) : ard_weights(std::move(a)), length_scales(std::move(gamma)) {
    detail::require(ard_weights.size() == length_scales.size(), "ARD weight / length scale size mismatch");
    detail::require(ard_weights.allFinite(), "ARD weights must be finite");
    detail::require(length_scales.allFinite() && (length_scales.array() > 0.0).all(),
                    "length scales must be finite and positive");
  }

  Eigen::Index dims() const noexcept { return ard_weights.size(); }
};

enum class LengthScaleMode { Median, Mean };

/// Gram blocks of one kernel evaluation on samples X (n rows) and Y (m rows).
struct GramBlocks {
  Matrix xx;
  Matrix yy;
  Matrix xy;
};

namespace detail {

inline double median_inplace(std::vector<double>& v) {
  const auto n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double summarize(std::vector<double>& v, LengthScaleMode mode) {
  const double s = mode == LengthScaleMode::Median ? median_inplace(v) : mean_of(v);
  return s > 0.0 ? s : 1.0;
}

inline void check_samples(const Matrix& X, const Matrix& Y) {
  require(X.cols() == Y.cols(), "sample dimension mismatch");
  require(X.allFinite() && Y.allFinite(), "samples contain non-finite values");
}

/// Mirrors the strict upper triangle into the lower one so the result is
/// symmetric bit for bit.
inline void mirror_upper(Matrix& m) {
  m.triangularView<Eigen::StrictlyLower>() = m.transpose();
}

}  // namespace detail

/// Per-dimension median (or mean) of |u_d - v_d| over all unordered pairs of
/// the pooled samples. Constant dimensions get 1.0.
inline Vector dimensionwise_length_scales(const Matrix& X, const Matrix& Y,
                                          LengthScaleMode mode = LengthScaleMode::Median) {
  detail::check_samples(X, Y);
  const Eigen::Index N = X.rows() + Y.rows();
  detail::require(N >= 2, "length-scale heuristic needs at least two samples");

  Matrix pooled(N, X.cols());
  pooled << X, Y;
  Vector gamma(X.cols());
  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>(N * (N - 1) / 2));
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    diffs.clear();
    const auto col = pooled.col(d);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = i + 1; j < N; ++j) diffs.push_back(std::abs(col[i] - col[j]));
    gamma[d] = detail::summarize(diffs, mode);
  }
  return gamma;
}

/// Mean heuristic when more than half of the pooled entries are exactly zero.
inline LengthScaleMode auto_length_scale_mode(const Matrix& X, const Matrix& Y) {
  const auto total = static_cast<double>(X.size() + Y.size());
  if (total == 0.0) return LengthScaleMode::Median;
  const auto zeros = static_cast<double>((X.array() == 0.0).count() + (Y.array() == 0.0).count());
  return zeros / total > 0.5 ? LengthScaleMode::Mean : LengthScaleMode::Median;
}

/// Direct evaluation of the ARD kernel on every pair.
inline GramBlocks gram_matrices(const ArdKernelParams& params, const Matrix& X, const Matrix& Y) {
  detail::check_samples(X, Y);
  detail::require(X.cols() == params.dims(), "kernel parameters do not match sample dimension");
  const double D = static_cast<double>(params.dims());
  const Vector coef = (params.ard_weights.array().square() /
                       (D * params.length_scales.array().square())).matrix();

  auto k = [&](const auto& u, const auto& v) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < coef.size(); ++d) {
      const double diff = u[d] - v[d];
      s += coef[d] * diff * diff;
    }
    return std::exp(-s);
  };
  auto self_gram = [&](const Matrix& S) {
    Matrix K(S.rows(), S.rows());
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      K(i, i) = 1.0;
      for (Eigen::Index j = i + 1; j < S.rows(); ++j) K(i, j) = k(S.row(i), S.row(j));
    }
    detail::mirror_upper(K);
    return K;
  };

  GramBlocks g;
  g.xx = self_gram(X);
  g.yy = self_gram(Y);
  g.xy.resize(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.rows(); ++j) g.xy(i, j) = k(X.row(i), Y.row(j));
  return g;
}

// ---------------------------------------------------------------------------
// Agent (trajectory) kernel
// ---------------------------------------------------------------------------

/// Samples of A agents with C coordinates each, one sample per row; column
/// a*C + c holds coordinate c of agent a.
struct AgentSamples {
  Matrix data;
  int agents = 0;
  int coords = 0;

  AgentSamples() = default;
  AgentSamples(Matrix m, int a, int c) : data(std::move(m)), agents(a), coords(c) {
    detail::require(a >= 1 && c >= 1, "agent samples need A >= 1 and C >= 1");
    detail::require(data.cols() == static_cast<Eigen::Index>(a) * c, "agent sample width must be A*C");
  }
  Eigen::Index rows() const noexcept { return data.rows(); }
};

namespace detail {

/// sum_j |u_{i,j} - v_{i,j}| for agent i.
inline double agent_l1(const AgentSamples& U, Eigen::Index ru, const AgentSamples& V, Eigen::Index rv,
                       int agent) {
  double s = 0.0;
  const Eigen::Index off = static_cast<Eigen::Index>(agent) * U.coords;
  for (int c = 0; c < U.coords; ++c) s += std::abs(U.data(ru, off + c) - V.data(rv, off + c));
  return s;
}

inline void check_agents(const AgentSamples& X, const AgentSamples& Y) {
  require(X.agents == Y.agents && X.coords == Y.coords, "agent sample shapes differ");
  require(X.data.allFinite() && Y.data.allFinite(), "agent samples contain non-finite values");
}

}  // namespace detail

/// k(x, y) = exp(-(1/A) sum_i w_i^2 sum_j |x_i^(j) - y_i^(j)| / gamma_sq_i).
/// The inner coordinate term is an unsquared L1 distance.
inline GramBlocks agent_gram_matrices(const Vector& agent_weights, const Vector& gamma_sq,
                                      const AgentSamples& X, const AgentSamples& Y) {
  detail::check_agents(X, Y);
  detail::require(agent_weights.size() == X.agents && gamma_sq.size() == X.agents,
                  "agent weight / length scale count must equal A");
  detail::require(agent_weights.allFinite(), "agent weights must be finite");
  detail::require((gamma_sq.array() > 0.0).all(), "agent length scales must be positive");
  const double A = X.agents;
  const Vector coef = (agent_weights.array().square() / (A * gamma_sq.array())).matrix();

  auto k = [&](const AgentSamples& U, Eigen::Index i, const AgentSamples& V, Eigen::Index j) {
    double s = 0.0;
    for (int a = 0; a < U.agents; ++a) s += coef[a] * detail::agent_l1(U, i, V, j, a);
    return std::exp(-s);
  };
  auto self_gram = [&](const AgentSamples& S) {
    Matrix K(S.rows(), S.rows());
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      K(i, i) = 1.0;
      for (Eigen::Index j = i + 1; j < S.rows(); ++j) K(i, j) = k(S, i, S, j);
    }
    detail::mirror_upper(K);
    return K;
  };

  GramBlocks g;
  g.xx = self_gram(X);
  g.yy = self_gram(Y);
  g.xy.resize(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.rows(); ++j) g.xy(i, j) = k(X, i, Y, j);
  return g;
}

/// Per-agent length scale: median (or mean) over pooled sample pairs of
/// sum_j |u_{i,j} - v_{i,j}|, mirroring the kernel's inner term.
inline Vector agent_length_scales(const AgentSamples& X, const AgentSamples& Y,
                                  LengthScaleMode mode = LengthScaleMode::Median) {
  detail::check_agents(X, Y);
  const Eigen::Index N = X.rows() + Y.rows();
  detail::require(N >= 2, "length-scale heuristic needs at least two samples");
  Matrix pooled(N, X.data.cols());
  pooled << X.data, Y.data;
  const AgentSamples P(std::move(pooled), X.agents, X.coords);

  Vector gamma_sq(X.agents);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(N * (N - 1) / 2));
  for (int a = 0; a < X.agents; ++a) {
    dists.clear();
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = i + 1; j < N; ++j) dists.push_back(detail::agent_l1(P, i, P, j, a));
    gamma_sq[a] = detail::summarize(dists, mode);
  }
  return gamma_sq;
}

// ---------------------------------------------------------------------------
// Kernel models
//
// A model binds a pair of sample sets to a weighted kernel family
//   k_w(u, v) = exp(-sum_g c_g(w) phi_g(u, v))
// and exposes the two things the optimizer needs: the Gram blocks for given
// weights, and the chain rule from dObjective/dK back to dObjective/dw.
// ---------------------------------------------------------------------------

template <class M>
concept KernelModel = requires(const M& m, const Vector& w, const GramBlocks& g) {
  { m.groups() } -> std::convertible_to<Eigen::Index>;
  { m.samples() } -> std::convertible_to<Eigen::Index>;
  { m.gram(w) } -> std::same_as<GramBlocks>;
  { m.backprop(w, g, g) } -> std::same_as<Vector>;
};

/// ARD kernel over n x D samples. Squared distances go through matrix products
/// so the per-epoch cost is dominated by the exponentials.
class ArdModel {
 public:
  ArdModel(Matrix X, Matrix Y, Vector gamma) : X_(std::move(X)), Y_(std::move(Y)), gamma_(std::move(gamma)) {
    detail::check_samples(X_, Y_);
    detail::require(gamma_.size() == X_.cols(), "length scales do not match sample dimension");
    detail::require((gamma_.array() > 0.0).all(), "length scales must be positive");
    Xsq_ = X_.array().square().matrix();
    Ysq_ = Y_.array().square().matrix();
  }

  Eigen::Index groups() const noexcept { return X_.cols(); }
  Eigen::Index samples() const noexcept { return X_.rows(); }
  const Matrix& x() const noexcept { return X_; }
  const Matrix& y() const noexcept { return Y_; }
  const Vector& length_scales() const noexcept { return gamma_; }

  GramBlocks gram(const Vector& a) const {
    const Vector scale = (a.array() / (std::sqrt(static_cast<double>(groups())) * gamma_.array())).matrix();
    const Matrix Xs = X_ * scale.asDiagonal();
    const Matrix Ys = Y_ * scale.asDiagonal();
    GramBlocks g;
    g.xx = self_kernel(Xs);
    g.yy = self_kernel(Ys);
    g.xy = cross_kernel(Xs, Ys);
    return g;
  }

  /// dObj/da given the Gram blocks K and the sensitivities dObj/dK.
  Vector backprop(const Vector& a, const GramBlocks& K, const GramBlocks& dK) const {
    // dObj/dc_d = -sum_ij dK_ij K_ij (p_id - q_jd)^2 summed over blocks.
    Vector dc = Vector::Zero(groups());
    dc -= weighted_sqdist(dK.xx.cwiseProduct(K.xx), X_, Xsq_, X_, Xsq_);
    dc -= weighted_sqdist(dK.yy.cwiseProduct(K.yy), Y_, Ysq_, Y_, Ysq_);
    dc -= weighted_sqdist(dK.xy.cwiseProduct(K.xy), X_, Xsq_, Y_, Ysq_);
    const double D = static_cast<double>(groups());
    return (dc.array() * 2.0 * a.array() / (D * gamma_.array().square())).matrix();
  }

 private:
  /// exp(-|s_i - s_j|^2), filled on the upper triangle and mirrored.
  static Matrix self_kernel(const Matrix& S) {
    const Eigen::Index n = S.rows();
    const Vector sn = S.rowwise().squaredNorm();
    Matrix K = Matrix::Zero(n, n);
    K.selfadjointView<Eigen::Upper>().rankUpdate(S);
    for (Eigen::Index j = 0; j < n; ++j) {
      auto col = K.col(j).head(j).array();
      col = (2.0 * col - sn.head(j).array() - sn[j]).min(0.0).exp();
      K(j, j) = 1.0;
    }
    detail::mirror_upper(K);
    return K;
  }

  static Matrix cross_kernel(const Matrix& P, const Matrix& Q) {
    const Vector pn = P.rowwise().squaredNorm();
    const Vector qn = Q.rowwise().squaredNorm();
    Matrix K = P * Q.transpose();
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      auto col = K.col(j).array();
      col = (2.0 * col - pn.array() - qn[j]).min(0.0).exp();
    }
    return K;
  }

  /// sum_ij M_ij (p_id - q_jd)^2 for every d.
  static Vector weighted_sqdist(const Matrix& M, const Matrix& P, const Matrix& Psq, const Matrix& Q,
                                const Matrix& Qsq) {
    const Vector rows = M.rowwise().sum();
    const Vector cols = M.colwise().sum().transpose();
    const Matrix MQ = M * Q;
    Vector out = Psq.transpose() * rows + Qsq.transpose() * cols;
    out -= 2.0 * P.cwiseProduct(MQ).colwise().sum().transpose();
    return out;
  }

  Matrix X_, Y_;
  Matrix Xsq_, Ysq_;
  Vector gamma_;
};

/// Agent-wise kernel with precomputed per-pair, per-agent L1 features.
class AgentModel {
 public:
  AgentModel(const AgentSamples& X, const AgentSamples& Y, Vector gamma_sq)
      : n_(X.rows()), m_(Y.rows()), agents_(X.agents), gamma_sq_(std::move(gamma_sq)) {
    detail::check_agents(X, Y);
    detail::require(gamma_sq_.size() == X.agents, "agent length scale count must equal A");
    detail::require((gamma_sq_.array() > 0.0).all(), "agent length scales must be positive");
    fxx_ = features(X, X);
    fyy_ = features(Y, Y);
    fxy_ = features(X, Y);
  }

  Eigen::Index groups() const noexcept { return agents_; }
  Eigen::Index samples() const noexcept { return n_; }
  const Vector& length_scales() const noexcept { return gamma_sq_; }

  GramBlocks gram(const Vector& w) const {
    const Vector c = coef(w);
    GramBlocks g;
    g.xx = block(fxx_, c, n_, n_);
    g.yy = block(fyy_, c, m_, m_);
    g.xy = block(fxy_, c, n_, m_);
    g.xx.diagonal().setOnes();
    g.yy.diagonal().setOnes();
    detail::mirror_upper(g.xx);
    detail::mirror_upper(g.yy);
    return g;
  }

  Vector backprop(const Vector& w, const GramBlocks& K, const GramBlocks& dK) const {
    Vector dc = Vector::Zero(agents_);
    dc -= contract(fxx_, dK.xx.cwiseProduct(K.xx));
    dc -= contract(fyy_, dK.yy.cwiseProduct(K.yy));
    dc -= contract(fxy_, dK.xy.cwiseProduct(K.xy));
    return (dc.array() * 2.0 * w.array() / (static_cast<double>(agents_) * gamma_sq_.array())).matrix();
  }

 private:
  Vector coef(const Vector& w) const {
    return (w.array().square() / (static_cast<double>(agents_) * gamma_sq_.array())).matrix();
  }

  // Row i*cols + j holds the per-agent features of pair (i, j); column-major
  // reshaping of a cols x rows matrix lines up with that ordering.
  static Matrix features(const AgentSamples& U, const AgentSamples& V) {
    Matrix f(U.rows() * V.rows(), U.agents);
    for (Eigen::Index i = 0; i < U.rows(); ++i)
      for (Eigen::Index j = 0; j < V.rows(); ++j)
        for (int a = 0; a < U.agents; ++a) f(i * V.rows() + j, a) = detail::agent_l1(U, i, V, j, a);
    return f;
  }

  static Matrix block(const Matrix& f, const Vector& c, Eigen::Index rows, Eigen::Index cols) {
    const Vector s = f * c;
    const Eigen::Map<const Matrix> st(s.data(), cols, rows);
    return (-st.transpose()).array().exp().matrix();
  }

  static Vector contract(const Matrix& f, const Matrix& M) {
    const Matrix Mt = M.transpose();
    const Eigen::Map<const Vector> flat(Mt.data(), Mt.size());
    return f.transpose() * flat;
  }

  Eigen::Index n_, m_;
  int agents_;
  Vector gamma_sq_;
  Matrix fxx_, fyy_, fxy_;
};

static_assert(KernelModel<ArdModel>);
static_assert(KernelModel<AgentModel>);

}  // namespace tsvarsel
