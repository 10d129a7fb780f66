#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tsvarsel/select.hpp"

namespace tsvarsel {

enum class GammaMode { PerBucket, Global };
enum class HeuristicMode { Median, Mean, Auto };

inline std::string_view to_string(GammaMode m) { return m == GammaMode::Global ? "global" : "per-bucket"; }

inline std::string_view to_string(HeuristicMode m) {
  switch (m) {
    case HeuristicMode::Median: return "median";
    case HeuristicMode::Mean: return "mean";
    case HeuristicMode::Auto: return "auto";
  }
  return "auto";
}

inline GammaMode parse_gamma_mode(std::string_view s) {
  if (s == "per-bucket") return GammaMode::PerBucket;
  if (s == "global") return GammaMode::Global;
  throw InputError("unknown gamma mode: " + std::string(s));
}

inline HeuristicMode parse_heuristic(std::string_view s) {
  if (s == "median") return HeuristicMode::Median;
  if (s == "mean") return HeuristicMode::Mean;
  if (s == "auto") return HeuristicMode::Auto;
  throw InputError("unknown heuristic: " + std::string(s));
}

inline LengthScaleMode resolve_heuristic(HeuristicMode h, const Matrix& X, const Matrix& Y) {
  switch (h) {
    case HeuristicMode::Median: return LengthScaleMode::Median;
    case HeuristicMode::Mean: return LengthScaleMode::Mean;
    case HeuristicMode::Auto: return auto_length_scale_mode(X, Y);
  }
  return LengthScaleMode::Median;
}

/// Everything that parameterizes one pipeline run besides the data and plan.
struct PipelineConfig {
  MethodId method = MethodId::MmdSelection;
  OptimizeConfig optimize;
  LambdaSearchSpace lambda_space{1e-6, 2.0, 20, 10};
  int inner_permutations = 100;
  MmdCvAggConfig cv_agg;
  int k_top = 1;
  PermutationTestConfig test;  // seed is derived per bucket from the plan seed
  GammaMode gamma_mode = GammaMode::PerBucket;
  HeuristicMode heuristic = HeuristicMode::Auto;
  bool keep_going = false;
};

// ---------------------------------------------------------------------------
// JSON snapshots of the configuration
// ---------------------------------------------------------------------------

inline void to_json(Json& j, const OptimizeConfig& c) {
  j = Json{{"initial_lr", c.initial_lr},
           {"lr_floor", c.lr_floor},
           {"lr_factor", c.lr_factor},
           {"lr_check_every", c.lr_check_every},
           {"lr_min_rel_improvement", c.lr_min_rel_improvement},
           {"max_epochs", c.max_epochs},
           {"conv_warmup", c.conv_warmup},
           {"conv_window", c.conv_window},
           {"conv_ratio", c.conv_ratio},
           {"varstop_warmup", c.varstop_warmup},
           {"varstop_check_every", c.varstop_check_every},
           {"varstop_window", c.varstop_window},
           {"negative_patience", c.negative_patience},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"seed", c.seed}};
}

inline void from_json(const Json& j, OptimizeConfig& c) {
  OptimizeConfig d;
  c.initial_lr = j.value("initial_lr", d.initial_lr);
  c.lr_floor = j.value("lr_floor", d.lr_floor);
  c.lr_factor = j.value("lr_factor", d.lr_factor);
  c.lr_check_every = j.value("lr_check_every", d.lr_check_every);
  c.lr_min_rel_improvement = j.value("lr_min_rel_improvement", d.lr_min_rel_improvement);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.conv_warmup = j.value("conv_warmup", d.conv_warmup);
  c.conv_window = j.value("conv_window", d.conv_window);
  c.conv_ratio = j.value("conv_ratio", d.conv_ratio);
  c.varstop_warmup = j.value("varstop_warmup", d.varstop_warmup);
  c.varstop_check_every = j.value("varstop_check_every", d.varstop_check_every);
  c.varstop_window = j.value("varstop_window", d.varstop_window);
  c.negative_patience = j.value("negative_patience", d.negative_patience);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.seed = j.value("seed", d.seed);
}

inline Json config_snapshot(const PipelineConfig& c) {
  Json j;
  j["method"] = std::string(to_string(c.method));
  j["optimize"] = c.optimize;
  j["lambda_space"] = Json{{"lower", c.lambda_space.lower},
                           {"upper", c.lambda_space.upper},
                           {"n_search", c.lambda_space.n_search},
                           {"n_lambda_grid", c.lambda_space.n_lambda_grid}};
  j["inner_permutations"] = c.inner_permutations;
  j["cv_agg"] = Json{{"upper_search", {c.cv_agg.upper_search_lo, c.cv_agg.upper_search_hi}},
                     {"lower_search", {c.cv_agg.lower_search_lo, c.cv_agg.lower_search_hi}},
                     {"n_search", c.cv_agg.n_search},
                     {"n_lambda_grid", c.cv_agg.n_lambda_grid},
                     {"n_folds", c.cv_agg.n_folds}};
  j["k_top"] = c.k_top;
  j["permutations"] = c.test.n_permutations;
  j["projections"] = c.test.n_projections ? Json(*c.test.n_projections) : Json("auto");
  j["gamma"] = std::string(to_string(c.gamma_mode));
  j["heuristic"] = std::string(to_string(c.heuristic));
  j["keep_going"] = c.keep_going;
  return j;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace detail {

/// Runs `body` for every bucket in order. Errors abort the run with the
/// bucket index attached, unless keep_going is set, in which case the bucket
/// is reported with an empty selection, p = 1 and the error message.
inline std::vector<SelectionResult> for_each_bucket(const BucketPlan& plan, Eigen::Index dims, bool keep_going,
                                                    const std::function<SelectionResult(const BucketSplit&)>& body) {
  std::vector<SelectionResult> out;
  out.reserve(static_cast<std::size_t>(plan.bucket_count()));
  for (int b = 1; b <= plan.bucket_count(); ++b) {
    const BucketSplit split = split_bucket(plan, b);
    try {
      out.push_back(body(split));
    } catch (const NumericalError& e) {
      if (!keep_going) throw e.with_bucket(b);
      SelectionResult r;
      r.bucket_index = b;
      r.weights = WeightVector::zeros(dims);
      r.diagnostics["error"] = e.what();
      out.push_back(std::move(r));
    } catch (const InputError& e) {
      if (!keep_going) throw InputError("bucket " + std::to_string(b) + ": " + e.what());
      SelectionResult r;
      r.bucket_index = b;
      r.weights = WeightVector::zeros(dims);
      r.diagnostics["error"] = e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace detail

/// Runs the configured selector on one bucket's train split.
inline Selection run_selector(const PipelineConfig& config, const Matrix& X_tr, const Matrix& Y_tr,
                              const Vector& gamma, std::uint64_t seed) {
  switch (config.method) {
    case MethodId::MmdVanilla: return select_mmd_vanilla(X_tr, Y_tr, gamma, config.optimize);
    case MethodId::MmdSelection: {
      MmdSelectionConfig c;
      c.space = config.lambda_space;
      c.optimize = config.optimize;
      c.inner_permutations = config.inner_permutations;
      c.inner_projections = config.test.n_projections.value_or(100);
      return select_mmd_selection(X_tr, Y_tr, gamma, c, seed);
    }
    case MethodId::MmdCvAgg: {
      MmdCvAggConfig c = config.cv_agg;
      c.optimize = config.optimize;
      return select_mmd_cv_agg(X_tr, Y_tr, gamma, c, seed);
    }
    case MethodId::Wasserstein: return select_wasserstein(X_tr, Y_tr);
    case MethodId::MskernelLite: return select_mskernel_lite(X_tr, Y_tr, config.k_top);
    default: throw InputError("method " + std::string(to_string(config.method)) + " is not a time-series selector");
  }
}

inline bool uses_length_scales(MethodId m) {
  return m == MethodId::MmdVanilla || m == MethodId::MmdSelection || m == MethodId::MmdCvAgg;
}

/// Time-sliced variable selection: per bucket, select variables on the train
/// split and test the selection on the held-out split.
inline RunReport run_pipeline(const TimeSeriesPair& pair, const BucketPlan& plan, const PipelineConfig& config) {
  detail::require(plan.total_length() == pair.length(),
                  "bucket plan covers " + std::to_string(plan.total_length()) + " steps but the series has " +
                      std::to_string(pair.length()));
  const Matrix& x = pair.x();
  const Matrix& y = pair.y();

  std::optional<Vector> global_gamma;
  if (config.gamma_mode == GammaMode::Global && uses_length_scales(config.method)) {
    const Matrix xs = x.transpose(), ys = y.transpose();
    global_gamma = dimensionwise_length_scales(xs, ys, resolve_heuristic(config.heuristic, xs, ys));
  }

  RunReport report{{}, plan, config.method, config_snapshot(config), pair.labels()};
  report.per_bucket = detail::for_each_bucket(plan, pair.dims(), config.keep_going, [&](const BucketSplit& split) {
    const int b = split.bucket_index;
    const Matrix X_tr = samples_at(x, split.train), Y_tr = samples_at(y, split.train);
    const Matrix X_te = samples_at(x, split.test), Y_te = samples_at(y, split.test);

    SelectionResult r;
    r.bucket_index = b;
    Vector gamma;
    if (uses_length_scales(config.method)) {
      if (global_gamma) {
        gamma = *global_gamma;
      } else {
        const LengthScaleMode mode = resolve_heuristic(config.heuristic, X_tr, Y_tr);
        gamma = dimensionwise_length_scales(X_tr, Y_tr, mode);
        r.diagnostics["heuristic"] = mode == LengthScaleMode::Mean ? "mean" : "median";
      }
      r.diagnostics["length_scales"] = detail::vector_json(gamma);
    }

    Selection sel = run_selector(config, X_tr, Y_tr, gamma, derive_seed(plan.seed(), "selector", {std::uint64_t(b)}));
    r.weights = sel.weights;
    r.selected = sel.selected;
    r.h0_accepted_by_fallback = sel.h0_accepted && sel.selected.empty();
    r.diagnostics["selector"] = std::move(sel.diagnostics);
    r.diagnostics["n_train"] = split.train.size();
    r.diagnostics["n_test"] = split.test.size();

    if (r.h0_accepted_by_fallback) {
      r.p_value = 1.0;
    } else {
      PermutationTestConfig test = config.test;
      test.seed = derive_seed(plan.seed(), "bucket-test", {std::uint64_t(b)});
      const auto res = permutation_test_detailed(X_te, Y_te, r.selected, test);
      r.p_value = res.p_value;
      r.diagnostics["statistic"] = res.statistic;
      r.diagnostics["n_projections"] = res.n_projections;
    }
    return r;
  });
  return report;
}

/// Per-bucket union of the selections of several runs over the same plan.
inline std::vector<VariableSet> merge_multi_pair(const std::vector<RunReport>& reports) {
  detail::require(!reports.empty(), "nothing to merge");
  const RunReport& first = reports.front();
  for (const auto& r : reports) {
    detail::require(r.plan.split_points() == first.plan.split_points(), "reports use different bucket plans");
    detail::require(r.method == first.method, "reports use different methods");
    detail::require(r.per_bucket.size() == first.per_bucket.size(), "reports have different bucket counts");
  }
  std::vector<VariableSet> merged(first.per_bucket.size());
  for (const auto& r : reports)
    for (std::size_t b = 0; b < r.per_bucket.size(); ++b) {
      VariableSet u;
      std::set_union(merged[b].begin(), merged[b].end(), r.per_bucket[b].selected.begin(),
                     r.per_bucket[b].selected.end(), std::back_inserter(u));
      merged[b] = std::move(u);
    }
  return merged;
}

}  // namespace tsvarsel
