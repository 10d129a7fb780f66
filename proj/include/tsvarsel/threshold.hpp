#pragma once

#include <algorithm>
#include <numeric>

#include "tsvarsel/core.hpp"

namespace tsvarsel {

/// Smallest normalized gap that counts as a separation between selected and
/// discarded variables.
inline constexpr double kMinSelectionGap = 0.1;

/// Largest-gap thresholding: normalize to max 1, sort descending and keep the
/// variables above the widest gap between neighbours. Returns the empty set
/// when all weights are zero or the widest gap is below `min_gap`.
inline VariableSet threshold_weights(const Vector& w, double min_gap = kMinSelectionGap) {
  detail::require(w.allFinite() && (w.array() >= 0.0).all(), "weights must be finite and nonnegative");
  const double mx = w.size() > 0 ? w.maxCoeff() : 0.0;
  if (mx <= 0.0 || w.size() < 2) return {};

  std::vector<int> order(static_cast<std::size_t>(w.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });

  double best_gap = -1.0;
  std::size_t cut = 0;  // number of variables above the widest gap
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const double gap = (w[order[k]] - w[order[k + 1]]) / mx;
    if (gap > best_gap) {
      best_gap = gap;
      cut = k + 1;
    }
  }
  if (best_gap < min_gap) return {};

  VariableSet selected;
  selected.reserve(cut);
  for (std::size_t k = 0; k < cut; ++k) selected.push_back(order[k] + 1);
  std::sort(selected.begin(), selected.end());
  return selected;
}

inline VariableSet threshold_weights(const WeightVector& w, double min_gap = kMinSelectionGap) {
  return threshold_weights(w.values(), min_gap);
}

}  // namespace tsvarsel
