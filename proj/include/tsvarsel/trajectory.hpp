#pragma once

#include <optional>
#include <vector>

#include "tsvarsel/timeslice.hpp"

namespace tsvarsel {

/// Positions of A agents over T steps in C coordinates, stored [a][t][c].
class Trajectory {
 public:
  Trajectory(int agents, int steps, int coords)
      : Trajectory(agents, steps, coords,
                   std::vector<double>(static_cast<std::size_t>(agents) * steps * coords, 0.0)) {}

  Trajectory(int agents, int steps, int coords, std::vector<double> values)
      : A_(agents), T_(steps), C_(coords), v_(std::move(values)) {
    detail::require(A_ >= 1 && T_ >= 1 && C_ >= 1, "trajectory needs A, T, C >= 1");
    detail::require(v_.size() == static_cast<std::size_t>(A_) * T_ * C_, "trajectory value count must be A*T*C");
  }

  int agents() const noexcept { return A_; }
  int steps() const noexcept { return T_; }
  int coords() const noexcept { return C_; }

  double& operator()(int a, int t, int c) { return v_[index(a, t, c)]; }
  double operator()(int a, int t, int c) const { return v_[index(a, t, c)]; }

  const std::vector<double>& values() const noexcept { return v_; }
  bool all_finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
  }

  bool operator==(const Trajectory&) const = default;

 private:
  std::size_t index(int a, int t, int c) const {
    return (static_cast<std::size_t>(a) * T_ + static_cast<std::size_t>(t)) * C_ + static_cast<std::size_t>(c);
  }

  int A_, T_, C_;
  std::vector<double> v_;
};

struct TrajectoryPair {
  Trajectory x;
  Trajectory y;

  TrajectoryPair(Trajectory a, Trajectory b) : x(std::move(a)), y(std::move(b)) {
    detail::require(x.agents() == y.agents() && x.steps() == y.steps() && x.coords() == y.coords(),
                    "trajectory shapes differ");
    detail::require(x.all_finite() && y.all_finite(), "trajectories contain non-finite values");
  }
};

/// Per-step displacement: out(a, t, c) = traj(a, t + 1, c) - traj(a, t, c).
inline Trajectory direction_difference(const Trajectory& traj) {
  detail::require(traj.steps() >= 2, "direction differencing needs at least two steps");
  Trajectory out(traj.agents(), traj.steps() - 1, traj.coords());
  for (int a = 0; a < traj.agents(); ++a)
    for (int t = 0; t + 1 < traj.steps(); ++t)
      for (int c = 0; c < traj.coords(); ++c) out(a, t, c) = traj(a, t + 1, c) - traj(a, t, c);
  return out;
}

/// Inverse of direction_difference given the first position of every agent
/// (a T' = 1 trajectory).
inline Trajectory integrate_directions(const Trajectory& directions, const Trajectory& start) {
  detail::require(start.steps() == 1 && start.agents() == directions.agents() && start.coords() == directions.coords(),
                  "start must hold one position per agent");
  Trajectory out(directions.agents(), directions.steps() + 1, directions.coords());
  for (int a = 0; a < out.agents(); ++a)
    for (int c = 0; c < out.coords(); ++c) {
      out(a, 0, c) = start(a, 0, c);
      for (int t = 0; t < directions.steps(); ++t) out(a, t + 1, c) = out(a, t, c) + directions(a, t, c);
    }
  return out;
}

/// One row per (1-based) time index, columns a*C + c.
inline AgentSamples agent_samples_at(const Trajectory& traj, std::span<const int> times) {
  Matrix m(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(traj.agents()) * traj.coords());
  for (std::size_t i = 0; i < times.size(); ++i)
    for (int a = 0; a < traj.agents(); ++a)
      for (int c = 0; c < traj.coords(); ++c)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a) * traj.coords() + c) = traj(a, times[i] - 1, c);
  return AgentSamples(std::move(m), traj.agents(), traj.coords());
}

/// Columns of agent `a` (0-based) as an n x C matrix.
inline Matrix agent_block(const AgentSamples& s, int a) {
  return s.data.middleCols(static_cast<Eigen::Index>(a) * s.coords, s.coords);
}

/// MMD optimization over per-agent weights with the agent-wise kernel.
inline Selection select_agents_mmd(const AgentSamples& X, const AgentSamples& Y, double lambda,
                                   const OptimizeConfig& config = {},
                                   LengthScaleMode mode = LengthScaleMode::Median) {
  detail::require(X.rows() == Y.rows() && X.rows() >= 2, "agent selection needs equal sample sizes of at least two");
  const AgentModel model(X, Y, agent_length_scales(X, Y, mode));
  const OptimizeOutcome o = optimize_weights(model, lambda, config);
  Selection s;
  s.weights = WeightVector(o.ard_weights);
  s.h0_accepted = o.h0_accepted();
  s.selected = s.h0_accepted ? VariableSet{} : threshold_weights(o.ard_weights);
  s.lambda = lambda;
  s.diagnostics = detail::outcome_json(o);
  s.diagnostics["lambda"] = lambda;
  return s;
}

/// Projection count for per-agent sliced Wasserstein, chosen once on the
/// samples of all agents stacked as points in R^C.
inline int choose_agent_projection_count(const AgentSamples& X, const AgentSamples& Y, std::uint64_t seed) {
  Matrix xs(X.rows() * X.agents, X.coords), ys(Y.rows() * Y.agents, Y.coords);
  for (int a = 0; a < X.agents; ++a) {
    xs.middleRows(static_cast<Eigen::Index>(a) * X.rows(), X.rows()) = agent_block(X, a);
    ys.middleRows(static_cast<Eigen::Index>(a) * Y.rows(), Y.rows()) = agent_block(Y, a);
  }
  return choose_projection_count(xs, ys, seed);
}

/// w_i = sliced Wasserstein between the samples of agent i, thresholded.
/// All agents share one set of projection directions.
inline Selection select_agents_sliced_wasserstein(const AgentSamples& X, const AgentSamples& Y,
                                                  std::optional<int> n_projections, std::uint64_t seed) {
  detail::check_agents(X, Y);
  detail::require(X.rows() >= 1 && Y.rows() >= 1, "agent selection needs samples on both sides");
  const int L = n_projections ? *n_projections : choose_agent_projection_count(X, Y, derive_seed(seed, "agent-proj-count"));
  detail::require(L >= 1, "need at least one projection");
  const Matrix theta = random_directions(X.coords, L, derive_seed(seed, "agent-directions"));
  Vector w(X.agents);
  for (int a = 0; a < X.agents; ++a) w[a] = sliced_wasserstein(agent_block(X, a), agent_block(Y, a), theta);
  Selection s;
  s.weights = WeightVector(w);
  s.selected = threshold_weights(w);
  s.diagnostics["n_projections"] = L;
  return s;
}

struct TrajectoryConfig {
  MethodId method = MethodId::TrajectorySlicedWasserstein;
  double lambda = 0.01;
  OptimizeConfig optimize;
  std::optional<int> selector_projections;  // nullopt: automatic
  PermutationTestConfig test;
  HeuristicMode heuristic = HeuristicMode::Median;
  bool keep_going = false;
};

/// Time-sliced agent selection on direction-differenced trajectories. The
/// plan covers T - 1 steps; agent a occupies variables a*C+1 .. (a+1)*C of the
/// flattened samples used by the permutation test.
inline RunReport run_trajectory_pipeline(const TrajectoryPair& pair, const BucketPlan& plan,
                                         const TrajectoryConfig& config) {
  const Trajectory dx = direction_difference(pair.x);
  const Trajectory dy = direction_difference(pair.y);
  detail::require(plan.total_length() == dx.steps(),
                  "bucket plan must cover the " + std::to_string(dx.steps()) + " differenced steps");
  detail::require(config.method == MethodId::TrajectoryMmd || config.method == MethodId::TrajectorySlicedWasserstein,
                  "trajectory pipeline needs a trajectory method");

  Json snapshot{{"method", std::string(to_string(config.method))},
                {"lambda", config.lambda},
                {"optimize", config.optimize},
                {"selector_projections", config.selector_projections ? Json(*config.selector_projections) : Json("auto")},
                {"permutations", config.test.n_permutations},
                {"projections", config.test.n_projections ? Json(*config.test.n_projections) : Json("auto")},
                {"heuristic", std::string(to_string(config.heuristic))},
                {"keep_going", config.keep_going}};
  std::vector<std::string> labels;
  for (int a = 1; a <= dx.agents(); ++a) labels.push_back("agent_" + std::to_string(a));

  RunReport report{{}, plan, config.method, std::move(snapshot), std::move(labels)};
  report.per_bucket = detail::for_each_bucket(plan, dx.agents(), config.keep_going, [&](const BucketSplit& split) {
    const int b = split.bucket_index;
    const AgentSamples X_tr = agent_samples_at(dx, split.train), Y_tr = agent_samples_at(dy, split.train);
    const AgentSamples X_te = agent_samples_at(dx, split.test), Y_te = agent_samples_at(dy, split.test);
    const auto sel_seed = derive_seed(plan.seed(), "selector", {std::uint64_t(b)});

    Selection sel;
    if (config.method == MethodId::TrajectoryMmd) {
      const Matrix& xs = X_tr.data;
      const Matrix& ys = Y_tr.data;
      sel = select_agents_mmd(X_tr, Y_tr, config.lambda, config.optimize, resolve_heuristic(config.heuristic, xs, ys));
    } else {
      sel = select_agents_sliced_wasserstein(X_tr, Y_tr, config.selector_projections, sel_seed);
    }

    SelectionResult r;
    r.bucket_index = b;
    r.weights = sel.weights;
    r.selected = sel.selected;
    r.h0_accepted_by_fallback = sel.h0_accepted && sel.selected.empty();
    r.diagnostics["selector"] = std::move(sel.diagnostics);
    if (r.h0_accepted_by_fallback) return r;

    VariableSet columns;
    for (int a : r.selected)
      for (int c = 1; c <= dx.coords(); ++c) columns.push_back((a - 1) * dx.coords() + c);
    PermutationTestConfig test = config.test;
    test.seed = derive_seed(plan.seed(), "bucket-test", {std::uint64_t(b)});
    const auto res = permutation_test_detailed(X_te.data, Y_te.data, columns, test);
    r.p_value = res.p_value;
    r.diagnostics["statistic"] = res.statistic;
    r.diagnostics["n_projections"] = res.n_projections;
    return r;
  });
  return report;
}

}  // namespace tsvarsel
