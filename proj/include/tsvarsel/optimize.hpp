#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>

#include "tsvarsel/mmd.hpp"
#include "tsvarsel/threshold.hpp"

namespace tsvarsel {

struct OptimizeConfig {
  double initial_lr = 0.01;
  double lr_floor = 0.001;
  double lr_factor = 0.5;
  int lr_check_every = 10;
  double lr_min_rel_improvement = 1e-4;
  int max_epochs = 9999;
  int conv_warmup = 200;
  int conv_window = 100;
  double conv_ratio = 0.001;
  int varstop_warmup = 400;
  int varstop_check_every = 10;
  int varstop_window = 100;
  int negative_patience = 3000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool record_trace = false;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(initial_lr > 0 && lr_floor > 0 && lr_floor <= initial_lr, "invalid learning rates");
    detail::require(lr_factor > 0 && lr_factor < 1, "lr_factor must lie in (0,1)");
    detail::require(lr_check_every > 0 && max_epochs > 0 && conv_window > 0 && varstop_check_every > 0 &&
                        varstop_window > 0 && negative_patience > 0 && conv_warmup >= 0 && varstop_warmup >= 0,
                    "optimizer epoch counts must be positive");
    detail::require(conv_ratio > 0, "conv_ratio must be positive");
    detail::require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0, "invalid Adam constants");
  }
};

enum class StopReason { Converged, VariablesStable, MaxEpochs, H0Accepted };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::VariablesStable: return "variables_stable";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::H0Accepted: return "h0_accepted";
  }
  return "unknown";
}

struct OptimizeOutcome {
  Vector ard_weights;
  int epochs_run = 0;
  StopReason stop_reason = StopReason::MaxEpochs;
  MmdStats final_stats;
  std::vector<double> trace;

  bool h0_accepted() const noexcept { return stop_reason == StopReason::H0Accepted; }
};

/// Called once per epoch with the weights the objective was evaluated at.
using EpochObserver = std::function<void(int epoch, const Vector& weights, const ObjectiveResult& eval)>;

/// Full-batch Adam on the regularised objective, starting from all-ones
/// weights and projecting onto a >= 0 after every step.
///
/// Early stopping: the convergence and variable-set stoppers only look at
/// epochs where the power ratio is positive; a run of `negative_patience`
/// consecutive non-positive ratios ends the optimization with H0 accepted.
template <KernelModel Model>
OptimizeOutcome optimize_weights(const Model& model, double lambda, const OptimizeConfig& config,
                                 const EpochObserver& observer = {}) {
  config.validate();
  detail::require(lambda >= 0.0, "regularisation constant must be nonnegative");
  detail::require(model.samples() >= 2, "optimization needs at least two samples per side");

  const Eigen::Index D = model.groups();
  Vector a = Vector::Ones(D);
  Vector m1 = Vector::Zero(D);
  Vector m2 = Vector::Zero(D);
  double lr = config.initial_lr;
  double b1t = 1.0, b2t = 1.0;

  double best = std::numeric_limits<double>::infinity();
  double best_at_check = best;
  int negative_streak = 0;
  std::deque<double> window;
  VariableSet last_selection;
  int stable_since = -1;

  OptimizeOutcome out;
  auto finish = [&](int epoch, StopReason reason, const MmdStats& stats) {
    out.epochs_run = epoch;
    out.stop_reason = reason;
    out.final_stats = stats;
    out.ard_weights = reason == StopReason::H0Accepted ? Vector::Zero(D) : a;
    return out;
  };

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const ObjectiveResult eval = objective_and_gradient(model, a, lambda);
    if (!std::isfinite(eval.objective) || !eval.gradient.allFinite())
      throw NumericalError("non-finite objective at epoch " + std::to_string(epoch), epoch);
    if (config.record_trace) out.trace.push_back(eval.objective);
    if (observer) observer(epoch, a, eval);

    const bool positive = eval.stats.ratio > 0.0;
    if (positive) {
      negative_streak = 0;
    } else {
      ++negative_streak;
      window.clear();
      stable_since = -1;
      if (negative_streak >= config.negative_patience) return finish(epoch, StopReason::H0Accepted, eval.stats);
    }

    best = std::min(best, eval.objective);
    if (epoch % config.lr_check_every == 0) {
      const double scale = std::max(std::abs(best_at_check), 1e-12);
      const bool stalled = !std::isfinite(best_at_check) ? false
                                                          : (best_at_check - best) / scale < config.lr_min_rel_improvement;
      if (stalled) lr = std::max(lr * config.lr_factor, config.lr_floor);
      best_at_check = best;
    }

    if (positive) {
      window.push_back(eval.objective);
      if (static_cast<int>(window.size()) > config.conv_window) window.pop_front();
      if (epoch > config.conv_warmup && static_cast<int>(window.size()) == config.conv_window) {
        const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
        // min/max of the window shifted so that its minimum sits at 1.
        const double ratio = 1.0 / (1.0 + (*hi - *lo));
        if (1.0 - ratio < config.conv_ratio) return finish(epoch, StopReason::Converged, eval.stats);
      }

      if (epoch >= config.varstop_warmup && epoch % config.varstop_check_every == 0) {
        VariableSet sel = threshold_weights(a);
        if (stable_since < 0 || sel != last_selection) {
          last_selection = std::move(sel);
          stable_since = epoch;
        } else if (epoch - stable_since >= config.varstop_window) {
          return finish(epoch, StopReason::VariablesStable, eval.stats);
        }
      }
    }

    if (epoch == config.max_epochs) return finish(epoch, StopReason::MaxEpochs, eval.stats);

    b1t *= config.beta1;
    b2t *= config.beta2;
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * eval.gradient;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * eval.gradient.cwiseProduct(eval.gradient);
    const Vector step = (m1.array() / (1.0 - b1t)) / ((m2.array() / (1.0 - b2t)).sqrt() + config.adam_eps);
    a = (a - lr * step).cwiseMax(0.0);
  }
  return out;  // unreachable: the last epoch always returns
}

inline OptimizeOutcome optimize_ard(const Matrix& X_tr, const Matrix& Y_tr, const Vector& gamma, double lambda,
                                    const OptimizeConfig& config, const EpochObserver& observer = {}) {
  detail::require(X_tr.rows() == Y_tr.rows(), "optimization needs equal train sizes");
  return optimize_weights(ArdModel(X_tr, Y_tr, gamma), lambda, config, observer);
}

}  // namespace tsvarsel
