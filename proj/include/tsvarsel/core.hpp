#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tsvarsel/rng.hpp"

namespace tsvarsel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Json = nlohmann::json;

/// Sorted set of 1-based variable (or agent) indices.
using VariableSet = std::vector<int>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: shapes, files, parameters. Maps to CLI exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite objective or similar breakdown. Maps to CLI exit code 3.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, int epoch = -1, int bucket = -1)
      : Error(what), epoch_(epoch), bucket_(bucket) {}

  int epoch() const noexcept { return epoch_; }
  int bucket() const noexcept { return bucket_; }

  NumericalError with_bucket(int bucket) const {
    return NumericalError(std::string(what()), epoch_, bucket);
  }

 private:
  int epoch_;
  int bucket_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InputError(msg);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// TimeSeriesPair
// ---------------------------------------------------------------------------

/// Two D x T series under comparison. Row d is variable d+1, column t is time t+1.
class TimeSeriesPair {
 public:
  TimeSeriesPair(Matrix x, Matrix y, std::vector<std::string> labels = {})
      : x_(std::move(x)), y_(std::move(y)), labels_(std::move(labels)) {
    detail::require(x_.rows() == y_.rows() && x_.cols() == y_.cols(),
                    "time series shapes differ: " + shape(x_) + " vs " + shape(y_));
    detail::require(x_.rows() >= 1, "time series needs at least one variable");
    detail::require(x_.cols() >= 2, "time series needs at least two time steps");
    detail::require(detail::all_finite(x_) && detail::all_finite(y_),
                    "time series contains non-finite values");
    detail::require(labels_.empty() || static_cast<Eigen::Index>(labels_.size()) == x_.rows(),
                    "variable label count does not match D");
    if (labels_.empty())
      for (Eigen::Index d = 1; d <= x_.rows(); ++d) labels_.push_back("var_" + std::to_string(d));
  }

  const Matrix& x() const noexcept { return x_; }
  const Matrix& y() const noexcept { return y_; }
  int dims() const noexcept { return static_cast<int>(x_.rows()); }
  int length() const noexcept { return static_cast<int>(x_.cols()); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

 private:
  static std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

  Matrix x_;
  Matrix y_;
  std::vector<std::string> labels_;
};

/// Rows of the result are the columns of `series` at the given 1-based times.
inline Matrix samples_at(const Matrix& series, std::span<const int> times) {
  Matrix out(static_cast<Eigen::Index>(times.size()), series.rows());
  for (std::size_t i = 0; i < times.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = series.col(times[i] - 1).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Bucket plans
// ---------------------------------------------------------------------------

inline int train_size(int bucket_length, double train_ratio) {
  return static_cast<int>(std::lround(bucket_length * train_ratio));
}

/// Split points t_1 < ... < t_B = T (t_0 = 0 implicit) plus the train ratio and
/// the seed that drives every random split of the run.
class BucketPlan {
 public:
  BucketPlan(std::vector<int> split_points, double train_ratio, std::uint64_t seed)
      : splits_(std::move(split_points)), train_ratio_(train_ratio), seed_(seed) {
    detail::require(!splits_.empty(), "bucket plan needs at least one split point");
    detail::require(train_ratio_ > 0.0 && train_ratio_ < 1.0, "train ratio must lie in (0,1)");
    int prev = 0;
    for (std::size_t b = 0; b < splits_.size(); ++b) {
      const int len = splits_[b] - prev;
      const std::string where = "bucket " + std::to_string(b + 1);
      detail::require(len >= 2, where + " has fewer than 2 time steps");
      const int n_train = train_size(len, train_ratio_);
      detail::require(n_train >= 1 && len - n_train >= 1,
                      where + " cannot be split into non-empty train and test sets");
      prev = splits_[b];
    }
  }

  const std::vector<int>& split_points() const noexcept { return splits_; }
  double train_ratio() const noexcept { return train_ratio_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int bucket_count() const noexcept { return static_cast<int>(splits_.size()); }
  int total_length() const noexcept { return splits_.back(); }

  /// t_{b-1}; buckets are 1-based.
  int start(int b) const { return b == 1 ? 0 : splits_.at(b - 2); }
  /// t_b.
  int end(int b) const { return splits_.at(b - 1); }
  int length(int b) const { return end(b) - start(b); }

  bool operator==(const BucketPlan&) const = default;

 private:
  std::vector<int> splits_;
  double train_ratio_;
  std::uint64_t seed_;
};

/// Equally spaced plan with t_b = round(b T / B).
inline BucketPlan make_equal_bucket_plan(int T, int B, double train_ratio, std::uint64_t seed) {
  detail::require(T >= 2 && B >= 1, "need T >= 2 and B >= 1");
  detail::require(2 * B <= T, "B must not exceed T/2");
  std::vector<int> splits(static_cast<std::size_t>(B));
  for (int b = 1; b <= B; ++b)
    splits[static_cast<std::size_t>(b - 1)] =
        static_cast<int>(std::lround(static_cast<double>(b) * T / B));
  return BucketPlan(std::move(splits), train_ratio, seed);
}

/// 1-based time indices of one bucket, partitioned into train and test.
struct BucketSplit {
  int bucket_index = 0;
  std::vector<int> train;
  std::vector<int> test;
};

inline BucketSplit split_bucket(const BucketPlan& plan, int bucket_index) {
  detail::require(bucket_index >= 1 && bucket_index <= plan.bucket_count(),
                  "bucket index out of range: " + std::to_string(bucket_index));
  std::vector<int> times(static_cast<std::size_t>(plan.length(bucket_index)));
  std::iota(times.begin(), times.end(), plan.start(bucket_index) + 1);

  auto rng = make_engine(plan.seed(), "bucket-split", {static_cast<std::uint64_t>(bucket_index)});
  std::shuffle(times.begin(), times.end(), rng);

  const auto n_train =
      static_cast<std::ptrdiff_t>(train_size(plan.length(bucket_index), plan.train_ratio()));
  BucketSplit split;
  split.bucket_index = bucket_index;
  split.train.assign(times.begin(), times.begin() + n_train);
  split.test.assign(times.begin() + n_train, times.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Selection outputs
// ---------------------------------------------------------------------------

/// Nonnegative, finite importance per variable.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(Vector w) : w_(std::move(w)) {
    detail::require(w_.allFinite(), "weights must be finite");
    detail::require((w_.array() >= 0.0).all(), "weights must be nonnegative");
  }
  static WeightVector zeros(Eigen::Index n) { return WeightVector(Vector::Zero(n)); }

  const Vector& values() const noexcept { return w_; }
  Eigen::Index size() const noexcept { return w_.size(); }
  double operator[](Eigen::Index i) const { return w_[i]; }

  friend bool operator==(const WeightVector& a, const WeightVector& b) {
    return a.w_.size() == b.w_.size() && (a.w_.array() == b.w_.array()).all();
  }

 private:
  Vector w_;
};

enum class MethodId {
  MmdVanilla,
  MmdSelection,
  MmdCvAgg,
  Wasserstein,
  MskernelLite,
  TrajectoryMmd,
  TrajectorySlicedWasserstein,
};

inline std::string_view to_string(MethodId m) {
  switch (m) {
    case MethodId::MmdVanilla: return "mmd-vanilla";
    case MethodId::MmdSelection: return "mmd-selection";
    case MethodId::MmdCvAgg: return "mmd-cv-agg";
    case MethodId::Wasserstein: return "wasserstein";
    case MethodId::MskernelLite: return "mskernel-lite";
    case MethodId::TrajectoryMmd: return "trajectory-mmd";
    case MethodId::TrajectorySlicedWasserstein: return "trajectory-sliced-wasserstein";
  }
  return "unknown";
}

inline MethodId parse_method(std::string_view s) {
  for (auto m : {MethodId::MmdVanilla, MethodId::MmdSelection, MethodId::MmdCvAgg,
                 MethodId::Wasserstein, MethodId::MskernelLite, MethodId::TrajectoryMmd,
                 MethodId::TrajectorySlicedWasserstein})
    if (to_string(m) == s) return m;
  throw InputError("unknown method: " + std::string(s));
}

struct SelectionResult {
  int bucket_index = 0;
  VariableSet selected;
  WeightVector weights;
  double p_value = 1.0;
  bool h0_accepted_by_fallback = false;
  Json diagnostics = Json::object();

  bool operator==(const SelectionResult&) const = default;
};

struct RunReport {
  std::vector<SelectionResult> per_bucket;
  BucketPlan plan;
  MethodId method = MethodId::MmdSelection;
  Json config = Json::object();
  std::vector<std::string> variable_labels;

  bool operator==(const RunReport&) const = default;
};

}  // namespace tsvarsel
