#pragma once

// Numerical building blocks shared by the benchmark and guarantee solvers:
// monotone bisection, budget-face grids over commodity bundles, and a
// step-halving pattern search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "fairdiv/errors.hpp"
#include "fairdiv/model.hpp"

namespace fairdiv::numeric {

/// Smallest x in [lo, hi] with pred(x) true, for a predicate that is false
/// then true. Returns hi when pred(hi) is the first true value.
template <typename Pred>
double bisect_first(Pred pred, double lo, double hi, double tol = 1e-12) {
  if (pred(lo)) return lo;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (pred(mid)) hi = mid; else lo = mid;
  }
  return hi;
}

enum class Sense { Minimize, Maximize };

inline bool better(double candidate, double incumbent, Sense sense) {
  return sense == Sense::Maximize ? candidate > incumbent : candidate < incumbent;
}

/// Bundles S with 0 <= S <= upper and price . S = budget.
///
/// The coordinate with the largest price is solved from the budget; the other
/// coordinates are free, each ranging over the interval that keeps the
/// remaining budget absorbable by the coordinates after it.
struct BudgetFace {
  Bundle upper;
  Bundle price;
  double budget = 0.0;

  std::size_t dimension() const { return upper.size(); }

  std::size_t pivot() const {
    return static_cast<std::size_t>(std::max_element(price.begin(), price.end()) - price.begin());
  }

  double capacity() const {
    double acc = 0.0;
    for (std::size_t a = 0; a < upper.size(); ++a) acc += price[a] * upper[a];
    return acc;
  }

  /// Budget outside [0, capacity] collapses to the nearest end.
  double clamped_budget() const { return std::clamp(budget, 0.0, capacity()); }

  std::vector<std::size_t> free_coords() const {
    std::vector<std::size_t> out;
    const std::size_t p = pivot();
    for (std::size_t a = 0; a < upper.size(); ++a) {
      if (a != p) out.push_back(a);
    }
    return out;
  }

  /// Feasible range of free coordinate `index` given earlier free values.
  std::pair<double, double> range(const std::vector<double>& free_values, std::size_t index) const {
    const auto coords = free_coords();
    const std::size_t a = coords[index];
    double remaining = clamped_budget();
    for (std::size_t i = 0; i < index; ++i) remaining -= price[coords[i]] * free_values[i];
    double cap_after = price[pivot()] * upper[pivot()];
    for (std::size_t i = index + 1; i < coords.size(); ++i) cap_after += price[coords[i]] * upper[coords[i]];
    if (price[a] <= 0.0) return {0.0, upper[a]};
    const double lo = std::max(0.0, (remaining - cap_after) / price[a]);
    const double hi = std::min(upper[a], remaining / price[a]);
    return {std::min(lo, std::max(hi, 0.0)), std::max(hi, 0.0)};
  }

  /// Completes free values into a bundle; nullopt when the pivot leaves its box.
  std::optional<Bundle> complete(const std::vector<double>& free_values, double tol = 1e-12) const {
    const auto coords = free_coords();
    const std::size_t p = pivot();
    Bundle s(upper.size(), 0.0);
    double remaining = clamped_budget();
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double v = free_values[i];
      if (v < -tol || v > upper[coords[i]] + tol) return std::nullopt;
      s[coords[i]] = std::clamp(v, 0.0, upper[coords[i]]);
      remaining -= price[coords[i]] * s[coords[i]];
    }
    const double pv = remaining / price[p];
    if (pv < -tol * std::max(1.0, upper[p]) || pv > upper[p] * (1.0 + tol) + tol) return std::nullopt;
    s[p] = std::clamp(pv, 0.0, upper[p]);
    return s;
  }

  /// Grid with `steps` intervals per free coordinate, each over its feasible range.
  std::vector<std::vector<double>> grid(std::size_t steps) const {
    std::vector<std::vector<double>> out;
    const std::size_t dims = free_coords().size();
    std::vector<double> cur(dims, 0.0);
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
      if (i == dims) {
        out.push_back(cur);
        return;
      }
      const auto [lo, hi] = range(cur, i);
      const std::size_t count = hi > lo ? steps : 0;
      for (std::size_t k = 0; k <= count; ++k) {
        cur[i] = count == 0 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count);
        rec(i + 1);
      }
    };
    rec(0);
    return out;
  }
};

struct FaceOptimum {
  Bundle point;
  double value = 0.0;
};

/// Grid steps per free coordinate for a face of the given free dimension.
inline std::size_t face_steps(std::size_t free_dims, double resolution) {
  const double base = std::ceil(1.0 / resolution);
  if (free_dims <= 1) return static_cast<std::size_t>(base);
  // Coarser grid in two or more free dimensions; the pattern search refines.
  return static_cast<std::size_t>(std::max(8.0, std::ceil(base / (2.5 * static_cast<double>(free_dims - 1)))));
}

/// Optimizes `objective` over a budget face: grid at `resolution`, then
/// pattern search down to `min_step`.
template <typename Objective>
FaceOptimum optimize_face(const BudgetFace& face, Objective&& objective, Sense sense, double resolution = 0.02,
                          double min_step = 1e-10) {
  const auto coords = face.free_coords();
  const std::size_t dims = coords.size();
  FaceOptimum best;
  best.value = sense == Sense::Maximize ? -std::numeric_limits<double>::infinity()
                                        : std::numeric_limits<double>::infinity();
  std::vector<double> best_free;
  for (const auto& free : face.grid(face_steps(dims, resolution))) {
    auto point = face.complete(free);
    if (!point) continue;
    const double v = objective(*point);
    if (best_free.empty() || better(v, best.value, sense)) {
      best.value = v;
      best.point = *point;
      best_free = free;
    }
  }
  if (best_free.empty()) {
    // Only reachable for zero-dimensional faces with an infeasible pivot.
    Bundle s(face.upper.size(), 0.0);
    best.point = s;
    best.value = objective(s);
    return best;
  }
  if (dims == 0) return best;

  // Directions: coordinate axes and pairwise diagonals.
  std::vector<std::vector<double>> dirs;
  for (std::size_t i = 0; i < dims; ++i) {
    for (double sgn : {1.0, -1.0}) {
      std::vector<double> d(dims, 0.0);
      d[i] = sgn;
      dirs.push_back(d);
    }
    for (std::size_t j = i + 1; j < dims; ++j) {
      for (double si : {1.0, -1.0}) {
        for (double sj : {1.0, -1.0}) {
          std::vector<double> d(dims, 0.0);
          d[i] = si;
          d[j] = sj;
          dirs.push_back(d);
        }
      }
    }
  }
  double scale = 0.0;
  for (auto a : coords) scale = std::max(scale, face.upper[a]);
  double step = scale * resolution;
  while (step > min_step * std::max(1.0, scale)) {
    bool improved = false;
    for (const auto& d : dirs) {
      std::vector<double> cand = best_free;
      for (std::size_t i = 0; i < dims; ++i) cand[i] += step * d[i];
      auto point = face.complete(cand);
      if (!point) continue;
      const double v = objective(*point);
      if (better(v, best.value, sense)) {
        best.value = v;
        best.point = *point;
        best_free = cand;
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace fairdiv::numeric
