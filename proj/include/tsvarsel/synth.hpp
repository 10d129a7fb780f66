#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tsvarsel/timeslice.hpp"

namespace tsvarsel {

inline constexpr int kSynthDims = 5;
inline constexpr int kSynthLength = 1000;
inline constexpr double kSynthNoiseSd = 0.1;  // variance 0.01
inline constexpr int kChangedVariable = 4;
inline constexpr int kChangeBegin = 251;
inline constexpr int kChangeEnd = 500;

struct GroundTruth {
  VariableSet changed_variables;
  int interval_begin = 0;  // inclusive, 1-based
  int interval_end = 0;    // inclusive
};

enum class Setting { One = 1, Two = 2 };

namespace detail {

/// Independent N(0, sd^2) draw for one (series, t, d) cell.
inline double cell_noise(std::uint64_t seed, std::string_view series, int t, int d) {
  auto rng = make_engine(seed, series, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(d)});
  return std::normal_distribution<double>(0.0, kSynthNoiseSd)(rng);
}

/// Noiseless value of y_{t,4} inside the changed period.
inline double changed_mean(Setting s, int t) {
  return s == Setting::One ? 0.25 : 0.5 - static_cast<double>(t - 250) / kSynthLength;
}

}  // namespace detail

/// x_{t,d} = t/T + eps; y equals x in law except y_{t,4} on t = 251..500,
/// which is 0.25 + eps' (Setting 1) or 0.5 - (t - 250)/T + eps' (Setting 2).
inline std::pair<TimeSeriesPair, GroundTruth> generate_setting(Setting setting, std::uint64_t seed) {
  Matrix x(kSynthDims, kSynthLength), y(kSynthDims, kSynthLength);
  for (int t = 1; t <= kSynthLength; ++t) {
    const double trend = static_cast<double>(t) / kSynthLength;
    for (int d = 1; d <= kSynthDims; ++d) {
      x(d - 1, t - 1) = trend + detail::cell_noise(seed, "synth-x", t, d);
      const bool changed = d == kChangedVariable && t >= kChangeBegin && t <= kChangeEnd;
      const double mean = changed ? detail::changed_mean(setting, t) : trend;
      y(d - 1, t - 1) = mean + detail::cell_noise(seed, "synth-y", t, d);
    }
  }
  std::vector<std::string> labels;
  for (int d = 1; d <= kSynthDims; ++d) labels.push_back("var_" + std::to_string(d));
  return {TimeSeriesPair(std::move(x), std::move(y), std::move(labels)),
          GroundTruth{{kChangedVariable}, kChangeBegin, kChangeEnd}};
}

inline std::pair<TimeSeriesPair, GroundTruth> generate_setting1(std::uint64_t seed) {
  return generate_setting(Setting::One, seed);
}

inline std::pair<TimeSeriesPair, GroundTruth> generate_setting2(std::uint64_t seed) {
  return generate_setting(Setting::Two, seed);
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision |S^ n S| / |S^| (0 when S^ is empty), recall |S^ n S| / |S|.
inline PrecisionRecall precision_recall(const VariableSet& selected, const VariableSet& truth) {
  detail::require(!truth.empty(), "ground truth must be non-empty");
  VariableSet a = selected, b = truth;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  VariableSet common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  PrecisionRecall pr;
  const auto hit = static_cast<double>(common.size());
  pr.precision = a.empty() ? 0.0 : hit / static_cast<double>(a.size());
  pr.recall = hit / static_cast<double>(b.size());
  pr.f1 = pr.precision > 0.0 && pr.recall > 0.0 ? 2.0 * pr.precision * pr.recall / (pr.precision + pr.recall) : 0.0;
  return pr;
}

/// Whether 1-based bucket b of the plan intersects the changed period.
inline bool bucket_overlaps(const BucketPlan& plan, int b, const GroundTruth& truth) {
  return plan.start(b) + 1 <= truth.interval_end && plan.end(b) >= truth.interval_begin;
}

struct ExperimentRow {
  MethodId method = MethodId::MmdSelection;
  int bucket = 0;
  bool overlaps_change = false;
  double p_mean = 0.0, p_std = 0.0;
  // Only meaningful when overlaps_change.
  double precision_mean = 0.0, precision_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
};

struct ExperimentResult {
  Setting setting = Setting::One;
  int buckets = 10;
  int repeats = 0;
  std::vector<MethodId> methods;
  /// runs[method][realization]
  std::vector<std::vector<RunReport>> runs;
  std::vector<ExperimentRow> rows;
  GroundTruth truth;
};

namespace detail {

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace detail

/// Repeats the full pipeline on fresh realizations of a setting and tabulates
/// mean/std of p-values, precision and recall per method and bucket.
/// Realization r uses data seed derive_seed(seed, "realization", {r}).
inline ExperimentResult run_experiment(Setting setting, int buckets, const std::vector<MethodId>& methods,
                                       int n_repeats, std::uint64_t seed, PipelineConfig base = {},
                                       double train_ratio = 0.8) {
  detail::require(n_repeats >= 1, "need at least one repeat");
  detail::require(!methods.empty(), "need at least one method");
  ExperimentResult res;
  res.setting = setting;
  res.buckets = buckets;
  res.repeats = n_repeats;
  res.methods = methods;
  res.runs.resize(methods.size());

  for (int r = 0; r < n_repeats; ++r) {
    const std::uint64_t data_seed = derive_seed(seed, "realization", {static_cast<std::uint64_t>(r)});
    auto [pair, truth] = generate_setting(setting, data_seed);
    res.truth = truth;
    const BucketPlan plan = make_equal_bucket_plan(pair.length(), buckets, train_ratio, data_seed);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      PipelineConfig cfg = base;
      cfg.method = methods[m];
      res.runs[m].push_back(run_pipeline(pair, plan, cfg));
    }
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    const BucketPlan& plan = res.runs[m].front().plan;
    for (int b = 1; b <= buckets; ++b) {
      ExperimentRow row;
      row.method = methods[m];
      row.bucket = b;
      row.overlaps_change = bucket_overlaps(plan, b, res.truth);
      std::vector<double> ps, precs, recs;
      for (const auto& rep : res.runs[m]) {
        const auto& br = rep.per_bucket[static_cast<std::size_t>(b - 1)];
        ps.push_back(br.p_value);
        if (row.overlaps_change) {
          const auto pr = precision_recall(br.selected, res.truth.changed_variables);
          precs.push_back(pr.precision);
          recs.push_back(pr.recall);
        }
      }
      std::tie(row.p_mean, row.p_std) = detail::mean_std(ps);
      if (row.overlaps_change) {
        std::tie(row.precision_mean, row.precision_std) = detail::mean_std(precs);
        std::tie(row.recall_mean, row.recall_std) = detail::mean_std(recs);
      }
      res.rows.push_back(row);
    }
  }
  return res;
}

}  // namespace tsvarsel
