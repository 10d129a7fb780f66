#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "tsvarsel/optimize.hpp"
#include "tsvarsel/stats.hpp"
#include "tsvarsel/threshold.hpp"

namespace tsvarsel {

/// Output of every variable selector.
struct Selection {
  WeightVector weights;
  VariableSet selected;
  /// The MMD optimizer gave up on a non-positive power ratio (or every
  /// candidate did); callers report p = 1.
  bool h0_accepted = false;
  std::optional<double> lambda;
  Json diagnostics = Json::object();
};

/// Range and budget of the regularisation-parameter search.
struct LambdaSearchSpace {
  double lower = 1e-6;
  double upper = 2.0;
  int n_search = 20;
  int n_lambda_grid = 10;

  void validate() const {
    detail::require(lower >= 0.0 && lower < upper, "lambda search space needs 0 <= lower < upper");
    detail::require(n_search >= 1 && n_lambda_grid >= 1, "lambda search budget must be positive");
  }
};

namespace detail {


inline Vector normalized_to_max(const Vector& w) {
  const double mx = w.size() > 0 ? w.maxCoeff() : 0.0;
  return mx > 0.0 ? Vector(w / mx) : Vector(Vector::Zero(w.size()));
}

/// lambda drawn log-uniformly from [max(lo, 1e-6), hi].
inline std::vector<double> log_uniform_candidates(double lo, double hi, int count, std::uint64_t seed,
                                                  std::string_view tag) {
  const double a = std::log(std::max(lo, 1e-6));
  const double b = std::log(std::max(hi, std::max(lo, 1e-6)));
  auto rng = make_engine(seed, tag);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (auto& x : out) x = std::exp(a + (b - a) * u(rng));
  return out;
}

inline std::vector<int> shuffled_rows(Eigen::Index n, std::uint64_t seed, std::string_view tag) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_engine(seed, tag);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline Matrix take_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

inline void check_train(const Matrix& X, const Matrix& Y, Eigen::Index min_rows) {
  require(X.cols() == Y.cols(), "train samples dimension mismatch");
  require(X.rows() == Y.rows(), "train samples must have equal sizes");
  require(X.rows() >= min_rows, "not enough train samples: need at least " + std::to_string(min_rows));
}

inline Json outcome_json(const OptimizeOutcome& o) {
  return Json{{"epochs_run", o.epochs_run},
              {"stop_reason", std::string(to_string(o.stop_reason))},
              {"mmd2", o.final_stats.mmd2},
              {"ratio", o.final_stats.ratio}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MMD-based selectors
// ---------------------------------------------------------------------------

/// Unregularised optimization followed by thresholding.
inline Selection select_mmd_vanilla(const Matrix& X_tr, const Matrix& Y_tr, const Vector& gamma,
                                    const OptimizeConfig& config = {}) {
  detail::check_train(X_tr, Y_tr, 2);
  const OptimizeOutcome o = optimize_ard(X_tr, Y_tr, gamma, 0.0, config);
  Selection s;
  s.weights = WeightVector(o.ard_weights);
  s.h0_accepted = o.h0_accepted();
  s.selected = s.h0_accepted ? VariableSet{} : threshold_weights(o.ard_weights);
  s.lambda = 0.0;
  s.diagnostics = detail::outcome_json(o);
  s.diagnostics["lambda"] = 0.0;
  return s;
}

struct MmdSelectionConfig {
  LambdaSearchSpace space{1e-6, 2.0, 20, 10};
  OptimizeConfig optimize;
  double inner_train_ratio = 0.8;
  int inner_permutations = 100;
  int inner_projections = 100;
};

/// Regularisation search scoring each candidate lambda by
/// (1 - p_lambda) * max(ratio on validation, 0), where p_lambda is a
/// permutation test on the validation split restricted to the candidate's
/// selection. Candidates are drawn log-uniformly; ties go to larger lambda.
inline Selection select_mmd_selection(const Matrix& X_tr, const Matrix& Y_tr, const Vector& gamma,
                                      const MmdSelectionConfig& config, std::uint64_t seed) {
  config.space.validate();
  detail::check_train(X_tr, Y_tr, 2);
  const Eigen::Index n = X_tr.rows();
  const auto n_inner = static_cast<Eigen::Index>(std::lround(static_cast<double>(n) * config.inner_train_ratio));
  detail::require(n_inner >= 2 && n - n_inner >= 2,
                  "MMD-Selection needs at least two inner-train and two validation rows");

  const auto rows = detail::shuffled_rows(n, seed, "mmd-selection-split");
  const std::span<const int> inner(rows.data(), static_cast<std::size_t>(n_inner));
  const std::span<const int> val(rows.data() + n_inner, static_cast<std::size_t>(n - n_inner));
  const Matrix X_in = detail::take_rows(X_tr, inner), Y_in = detail::take_rows(Y_tr, inner);
  const Matrix X_val = detail::take_rows(X_tr, val), Y_val = detail::take_rows(Y_tr, val);
  const ArdModel train_model(X_in, Y_in, gamma);
  const ArdModel val_model(X_val, Y_val, gamma);

  const auto lambdas =
      detail::log_uniform_candidates(config.space.lower, config.space.upper, config.space.n_search, seed, "mmd-selection-lambda");

  struct Candidate {
    double lambda = 0.0;
    double score = 0.0;
    Vector weights;
    VariableSet selected;
  };
  std::optional<Candidate> best;
  Json trials = Json::array();
  bool any_selected = false;

  for (std::size_t c = 0; c < lambdas.size(); ++c) {
    const double lambda = lambdas[c];
    const OptimizeOutcome o = optimize_weights(train_model, lambda, config.optimize);
    VariableSet sel = o.h0_accepted() ? VariableSet{} : threshold_weights(o.ard_weights);
    double ell_val = 0.0, p = 1.0;
    if (!sel.empty()) {
      any_selected = true;
      ell_val = power_ratio(val_model.gram(o.ard_weights)).ratio;
      PermutationTestConfig pt{config.inner_permutations, config.inner_projections,
                               derive_seed(seed, "mmd-selection-perm", {c})};
      p = permutation_test(X_val, Y_val, sel, pt);
    }
    const double score = (1.0 - p) * std::max(ell_val, 0.0);

    Json t = detail::outcome_json(o);
    t["lambda"] = lambda;
    t["score"] = score;
    t["p_value"] = p;
    t["ratio_val"] = ell_val;
    t["selected"] = sel;
    trials.push_back(std::move(t));

    if (!best || score > best->score || (score == best->score && lambda > best->lambda))
      best = Candidate{lambda, score, o.ard_weights, std::move(sel)};
  }

  Selection s;
  s.diagnostics["trials"] = std::move(trials);
  if (!any_selected) {
    s.weights = WeightVector::zeros(X_tr.cols());
    s.h0_accepted = true;
    s.lambda = lambdas.back();
  } else {
    s.weights = WeightVector(best->weights);
    s.selected = best->selected;
    s.lambda = best->lambda;
    s.diagnostics["score"] = best->score;
  }
  s.diagnostics["lambda"] = *s.lambda;
  return s;
}

struct MmdCvAggConfig {
  double upper_search_lo = 0.01;
  double upper_search_hi = 2.0;
  double lower_search_lo = 1e-6;
  double lower_search_hi = 0.01;
  int n_search = 20;
  int n_lambda_grid = 10;
  int n_folds = 5;
  OptimizeConfig optimize;

  void validate() const {
    detail::require(0.0 <= upper_search_lo && upper_search_lo <= upper_search_hi, "invalid lambda_upper range");
    detail::require(0.0 <= lower_search_lo && lower_search_lo <= lower_search_hi, "invalid lambda_lower range");
    detail::require(n_search >= 1 && n_lambda_grid >= 1, "lambda search budget must be positive");
    detail::require(n_folds >= 2, "cross-validation needs at least two folds");
  }
};

namespace detail {

/// Search result of one lambda-bound search.
struct BoundSearch {
  double lambda = 0.0;
  int selected_count = 0;
  Json trials = Json::array();
};

/// Seeded search for a lambda bound. `prefer(candidate_count, best_count)`
/// returns whether a strictly better count was found; equal counts keep the
/// lambda favoured by `tie_prefers_larger`.
template <class Better>
BoundSearch search_lambda_bound(const ArdModel& model, double lo, double hi, int trials, const OptimizeConfig& opt,
                                std::uint64_t seed, std::string_view tag, Better better, bool tie_prefers_larger) {
  BoundSearch out;
  bool have = false;
  for (double lambda : log_uniform_candidates(lo, hi, trials, seed, tag)) {
    const OptimizeOutcome o = optimize_weights(model, lambda, opt);
    const int count = o.h0_accepted() ? 0 : static_cast<int>(threshold_weights(o.ard_weights).size());
    out.trials.push_back(Json{{"lambda", lambda}, {"selected_count", count}});
    const bool tie_wins = count == out.selected_count && (tie_prefers_larger ? lambda > out.lambda : lambda < out.lambda);
    if (!have || better(count, out.selected_count) || tie_wins) {
      out.lambda = lambda;
      out.selected_count = count;
      have = true;
    }
  }
  return out;
}

}  // namespace detail

/// Cross-validated aggregation of ARD weights over a lambda grid between a
/// searched lower and upper bound: the selection thresholds the mean of the
/// max-normalized fold/lambda weight vectors.
inline Selection select_mmd_cv_agg(const Matrix& X_tr, const Matrix& Y_tr, const Vector& gamma,
                                   const MmdCvAggConfig& config, std::uint64_t seed) {
  config.validate();
  detail::check_train(X_tr, Y_tr, 2 * config.n_folds);
  const ArdModel full(X_tr, Y_tr, gamma);

  // Upper bound: the sparsest non-empty selection, smallest lambda on ties.
  auto upper_better = [](int c, int best) { return c > 0 && (best == 0 || c < best); };
  auto upper = detail::search_lambda_bound(full, config.upper_search_lo, config.upper_search_hi, config.n_search,
                                           config.optimize, seed, "cv-agg-upper", upper_better, false);
  // Lower bound: the densest selection, largest lambda on ties.
  auto lower_better = [](int c, int best) { return c > best; };
  auto lower = detail::search_lambda_bound(full, config.lower_search_lo, config.lower_search_hi, config.n_search,
                                           config.optimize, seed, "cv-agg-lower", lower_better, true);

  Selection s;
  double lam_lo = lower.lambda, lam_hi = upper.lambda;
  if (lam_lo > lam_hi) {
    std::swap(lam_lo, lam_hi);
    s.diagnostics["swapped_lambda_bounds"] = true;
  }
  std::vector<double> grid(static_cast<std::size_t>(config.n_lambda_grid));
  for (int k = 0; k < config.n_lambda_grid; ++k)
    grid[static_cast<std::size_t>(k)] =
        config.n_lambda_grid == 1 ? lam_lo : lam_lo + (lam_hi - lam_lo) * k / (config.n_lambda_grid - 1);

  const Eigen::Index n = X_tr.rows();
  const auto rows = detail::shuffled_rows(n, seed, "cv-agg-folds");
  Vector aggregate = Vector::Zero(X_tr.cols());
  int runs = 0, h0_runs = 0;
  for (int f = 0; f < config.n_folds; ++f) {
    const Eigen::Index lo = n * f / config.n_folds;
    const Eigen::Index hi = n * (f + 1) / config.n_folds;
    std::vector<int> train;
    train.reserve(static_cast<std::size_t>(n - (hi - lo)));
    for (Eigen::Index i = 0; i < n; ++i)
      if (i < lo || i >= hi) train.push_back(rows[static_cast<std::size_t>(i)]);
    const ArdModel fold(detail::take_rows(X_tr, train), detail::take_rows(Y_tr, train), gamma);
    for (double lambda : grid) {
      const OptimizeOutcome o = optimize_weights(fold, lambda, config.optimize);
      ++runs;
      if (o.h0_accepted()) {
        ++h0_runs;
        continue;
      }
      aggregate += detail::normalized_to_max(o.ard_weights);
    }
  }
  aggregate /= static_cast<double>(runs);

  s.weights = WeightVector(aggregate);
  s.selected = threshold_weights(aggregate);
  s.h0_accepted = h0_runs == runs;
  s.diagnostics["lambda_lower"] = lam_lo;
  s.diagnostics["lambda_upper"] = lam_hi;
  s.diagnostics["lambda_grid"] = grid;
  s.diagnostics["runs"] = runs;
  s.diagnostics["h0_runs"] = h0_runs;
  s.diagnostics["upper_search"] = std::move(upper.trials);
  s.diagnostics["lower_search"] = std::move(lower.trials);
  return s;
}

// ---------------------------------------------------------------------------
// Marginal-distance selectors
// ---------------------------------------------------------------------------

/// w_d = W1 between the d-th marginals of the two samples.
inline Vector marginal_wasserstein_weights(const Matrix& X, const Matrix& Y) {
  detail::require(X.cols() == Y.cols(), "sample dimension mismatch");
  Vector w(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) w[d] = wasserstein1_1d(Vector(X.col(d)), Vector(Y.col(d)));
  return w;
}

inline Selection select_wasserstein(const Matrix& X_tr, const Matrix& Y_tr) {
  detail::require(X_tr.rows() >= 1 && Y_tr.rows() >= 1, "Wasserstein selection needs samples on both sides");
  Selection s;
  const Vector w = marginal_wasserstein_weights(X_tr, Y_tr);
  s.weights = WeightVector(w);
  s.selected = threshold_weights(w);
  return s;
}

/// Linear-time MMD estimate per dimension with a Gaussian kernel
/// exp(-(u - v)^2 / gamma_d^2), gamma_d from the median heuristic.
inline Vector linear_mmd_per_dimension(const Matrix& X, const Matrix& Y) {
  detail::require(X.cols() == Y.cols(), "sample dimension mismatch");
  const Eigen::Index n = std::min(X.rows(), Y.rows()) / 2 * 2;
  detail::require(n >= 2, "linear-time MMD needs at least two samples per side");
  const Vector gamma = dimensionwise_length_scales(X.topRows(n), Y.topRows(n), LengthScaleMode::Median);
  Vector est(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const double g2 = gamma[d] * gamma[d];
    auto k = [g2](double u, double v) { return std::exp(-(u - v) * (u - v) / g2); };
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; i += 2) {
      const double x1 = X(i, d), x2 = X(i + 1, d), y1 = Y(i, d), y2 = Y(i + 1, d);
      sum += k(x1, x2) + k(y1, y2) - k(x1, y2) - k(x2, y1);
    }
    est[d] = sum / static_cast<double>(n / 2);
  }
  return est;
}

/// Top-k variables by per-dimension linear-time MMD (ties to the lower index).
inline Selection select_mskernel_lite(const Matrix& X_tr, const Matrix& Y_tr, int k_top) {
  detail::require(k_top >= 1 && k_top <= X_tr.cols(), "k_top must lie in [1, D]");
  const Vector est = linear_mmd_per_dimension(X_tr, Y_tr);
  std::vector<int> order(static_cast<std::size_t>(est.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return est[a] > est[b]; });

  Selection s;
  s.weights = WeightVector(est.cwiseMax(0.0));
  for (int k = 0; k < k_top; ++k) s.selected.push_back(order[static_cast<std::size_t>(k)] + 1);
  std::sort(s.selected.begin(), s.selected.end());
  s.diagnostics["k_top"] = k_top;
  s.diagnostics["raw_estimates"] = std::vector<double>(est.data(), est.data() + est.size());
  return s;
}

}  // namespace tsvarsel
