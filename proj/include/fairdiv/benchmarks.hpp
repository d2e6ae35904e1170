#pragma once

// Worst-case welfare benchmarks: minMax, Maxmin, equipartitions, and the
// Equal Split utility.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fairdiv/errors.hpp"
#include "fairdiv/model.hpp"
#include "fairdiv/optimize.hpp"

namespace fairdiv {

enum class Method { Analytic, Grid, Equalization };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Analytic: return "analytic";
    case Method::Grid: return "grid";
    case Method::Equalization: return "equalization";
  }
  return "unknown";
}

/// A benchmark value with an attained witness partition.
struct BenchmarkResult {
  double value = 0.0;
  Partition witness;
  Method method = Method::Grid;
  double tolerance = 0.0;
};

/// Cuts 0 = x0 <= x1 <= ... <= xn = 1 along a knife path whose segments
/// share a common utility.
struct Equipartition {
  std::vector<double> cuts;
  double common_value = 0.0;
  Partition shares;
  double spread = 0.0;  // max - min of the segment utilities
};

struct BenchmarkOptions {
  double resolution = 0.02;          // lattice step as a fraction of each endowment
  double refine_to = 1e-9;           // smallest pattern-search step
  std::size_t lattice_budget = 20'000'000;
  bool allow_analytic = true;
  double tol = 1e-6;
};

struct EquipartitionOptions {
  double tol = 1e-6;
  std::size_t restarts = 32;  // multistart count for non-monotone utilities
  std::uint64_t seed = 42;
};

namespace detail {

inline std::vector<double> segment_values(const UtilitySpec& u, const KnifePath& path,
                                          const std::vector<double>& cuts) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) out.push_back(eval_utility(u, path.segment(cuts[i], cuts[i + 1])));
  return out;
}

inline double spread_of(const std::vector<double>& values) {
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo;
}

inline Equipartition make_equipartition(const UtilitySpec& u, const KnifePath& path, std::vector<double> cuts) {
  Equipartition e;
  const auto values = segment_values(u, path, cuts);
  e.spread = spread_of(values);
  e.common_value = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) e.shares.shares.push_back(path.segment(cuts[i], cuts[i + 1]));
  e.cuts = std::move(cuts);
  return e;
}

/// Pattern search over sorted cut vectors minimizing sum of squared deviations.
inline std::vector<double> polish_cuts(const UtilitySpec& u, const KnifePath& path, std::vector<double> cuts,
                                       double initial_step = 0.05, double min_step = 1e-13) {
  auto objective = [&](const std::vector<double>& c) {
    const auto v = segment_values(u, path, c);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc;
  };
  const std::size_t inner = cuts.size() - 2;
  if (inner == 0) return cuts;
  std::vector<std::vector<double>> dirs;
  for (std::size_t i = 0; i < inner; ++i) {
    for (double s : {1.0, -1.0}) {
      std::vector<double> d(inner, 0.0);
      d[i] = s;
      dirs.push_back(d);
    }
    for (std::size_t j = i + 1; j < inner; ++j) {
      for (double si : {1.0, -1.0}) {
        for (double sj : {1.0, -1.0}) {
          std::vector<double> d(inner, 0.0);
          d[i] = si;
          d[j] = sj;
          dirs.push_back(d);
        }
      }
    }
  }
  double best = objective(cuts);
  double step = initial_step;
  std::size_t evaluations = 0;
  while (step > min_step && best > 0.0 && evaluations < 200000) {
    bool improved = false;
    for (const auto& d : dirs) {
      std::vector<double> cand = cuts;
      bool ok = true;
      for (std::size_t i = 0; i < inner; ++i) {
        cand[i + 1] = std::clamp(cand[i + 1] + step * d[i], 0.0, 1.0);
      }
      for (std::size_t i = 1; i < cand.size(); ++i) ok = ok && cand[i] >= cand[i - 1];
      if (!ok) continue;
      ++evaluations;
      const double v = objective(cand);
      if (v < best) {
        best = v;
        cuts = std::move(cand);
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return cuts;
}

/// Equipartition of an increasing segment function g along [0,1].
///
/// Bisection on the common value lambda; each cut is the first point where
/// the running segment reaches lambda. Plateaus are resolved by sliding each
/// cut within [first reach, last reach] by a common fraction.
inline std::vector<double> monotone_cuts(const std::function<double(double, double)>& g, std::size_t n,
                                         double tol) {
  constexpr double kCutTol = 1e-14;
  auto greedy = [&](double lambda, double alpha, std::vector<double>& cuts) {
    cuts.assign(1, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      const double start = cuts.back();
      if (g(start, 1.0) < lambda) return false;
      const double first = numeric::bisect_first([&](double x) { return g(start, x) >= lambda; }, start, 1.0, kCutTol);
      double cut = first;
      if (alpha > 0.0) {
        const double last = numeric::bisect_first([&](double x) { return g(start, x) > lambda; }, first, 1.0, kCutTol);
        cut = first + alpha * (last - first);
      }
      cuts.push_back(cut);
    }
    cuts.push_back(1.0);
    return g(cuts[n - 1], 1.0) >= lambda;
  };

  double lo = 0.0, hi = g(0.0, 1.0);
  std::vector<double> cuts;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (greedy(mid, 0.0, cuts)) lo = mid; else hi = mid;
  }
  const double lambda = lo;
  greedy(lambda, 0.0, cuts);
  auto remainder_gap = [&](double alpha) {
    std::vector<double> c;
    greedy(lambda, alpha, c);
    return g(c[n - 1], 1.0) - lambda;
  };
  if (remainder_gap(0.0) > tol) {
    // Slide cuts along plateaus until the last segment comes down to lambda.
    const double alpha = numeric::bisect_first([&](double a) { return remainder_gap(a) <= tol * 0.5; }, 0.0, 1.0, 1e-13);
    greedy(lambda, alpha, cuts);
  }
  return cuts;
}

}  // namespace detail

/// An n-equipartition of the share swept by `path`.
///
/// Monotone utilities use bisection on the common value; others minimize the
/// spread with a seeded multistart local search and throw NoConvergence when
/// every restart stays above `tol`.
inline Equipartition equipartition(const UtilitySpec& u, const KnifePath& path, std::size_t n,
                                   const EquipartitionOptions& opts = {}) {
  if (n < 2) throw Error(ErrorCode::InvalidSpec, "equipartition needs n >= 2");
  if (u.monotone != Monotonicity::None) {
    const double sign = u.monotone == Monotonicity::Increasing ? 1.0 : -1.0;
    auto g = [&](double a, double b) { return sign * eval_utility(u, path.segment(a, b)); };
    auto cuts = detail::monotone_cuts(g, n, opts.tol);
    auto e = detail::make_equipartition(u, path, cuts);
    if (e.spread > opts.tol) {
      e = detail::make_equipartition(u, path, detail::polish_cuts(u, path, std::move(cuts), 1e-3));
    }
    if (e.spread > opts.tol) throw NoConvergence("monotone equipartition did not equalize", e.spread);
    return e;
  }

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Equipartition best;
  bool have_best = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, opts.restarts); ++r) {
    std::vector<double> cuts{0.0};
    if (r == 0) {
      for (std::size_t i = 1; i < n; ++i) cuts.push_back(static_cast<double>(i) / static_cast<double>(n));
    } else {
      std::vector<double> inner(n - 1);
      for (auto& x : inner) x = unit(rng);
      std::sort(inner.begin(), inner.end());
      cuts.insert(cuts.end(), inner.begin(), inner.end());
    }
    cuts.push_back(1.0);
    auto e = detail::make_equipartition(u, path, detail::polish_cuts(u, path, std::move(cuts)));
    if (!have_best || e.spread < best.spread) {
      best = std::move(e);
      have_best = true;
    }
    if (best.spread <= opts.tol) break;
  }
  if (best.spread > opts.tol) throw NoConvergence("no equipartition found after all restarts", best.spread);
  return best;
}

/// All converged equipartitions from the multistart search (non-monotone
/// exploration; duplicates within tol are merged).
inline std::vector<Equipartition> equipartition_candidates(const UtilitySpec& u, const KnifePath& path,
                                                           std::size_t n, const EquipartitionOptions& opts = {}) {
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Equipartition> out;
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    std::vector<double> inner(n - 1);
    for (auto& x : inner) x = unit(rng);
    std::sort(inner.begin(), inner.end());
    std::vector<double> cuts{0.0};
    cuts.insert(cuts.end(), inner.begin(), inner.end());
    cuts.push_back(1.0);
    auto e = detail::make_equipartition(u, path, detail::polish_cuts(u, path, std::move(cuts)));
    if (e.spread > opts.tol) continue;
    const bool dup = std::any_of(out.begin(), out.end(), [&](const Equipartition& o) {
      return std::abs(o.common_value - e.common_value) <= opts.tol;
    });
    if (!dup) out.push_back(std::move(e));
  }
  return out;
}

/// u(omega / n).
inline double equal_split(const UtilitySpec& u, const Manna& manna, std::size_t n) {
  if (manna.kind() != MannaKind::Commodity || u.manna_kind() != MannaKind::Commodity) {
    throw Error(ErrorCode::ShapeMismatch, "equal split is defined for commodity manna");
  }
  if (n == 0) throw Error(ErrorCode::InvalidSpec, "n must be positive");
  Bundle z = manna.omega();
  for (double& x : z) x /= static_cast<double>(n);
  return eval_utility(u, z);
}

namespace detail {

enum class Objective { MinMax, MaxMin };

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  double acc = 1.0;
  for (std::size_t i = 1; i <= k; ++i) acc = acc * static_cast<double>(n - k + i) / static_cast<double>(i);
  return static_cast<std::size_t>(std::llround(acc));
}

/// Compositions of `total` into `parts` nonnegative integers, lexicographic.
inline std::vector<std::vector<int>> compositions(int total, std::size_t parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(parts, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == parts) {
      cur[i] = left;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      cur[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, total);
  return out;
}

/// Sorted share values: ascending for MaxMin (leximin), descending for MinMax.
inline std::vector<double> ranked(std::vector<double> values, Objective obj) {
  if (obj == Objective::MaxMin) std::sort(values.begin(), values.end());
  else std::sort(values.begin(), values.end(), std::greater<>());
  return values;
}

/// True when `cand` strictly improves on `inc` in the lexicographic order
/// induced by the objective.
inline bool lex_better(const std::vector<double>& cand, const std::vector<double>& inc, Objective obj) {
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (cand[i] == inc[i]) continue;
    return obj == Objective::MaxMin ? cand[i] > inc[i] : cand[i] < inc[i];
  }
  return false;
}

/// amounts[a][i]: quantity of commodity a in share i.
using Allocation = std::vector<std::vector<double>>;

inline Partition to_partition(const Allocation& alloc, std::size_t n) {
  Partition p;
  for (std::size_t i = 0; i < n; ++i) {
    Bundle z(alloc.size());
    for (std::size_t a = 0; a < alloc.size(); ++a) z[a] = alloc[a][i];
    p.shares.push_back(std::move(z));
  }
  return p;
}

inline std::vector<double> share_values(const UtilitySpec& u, const Allocation& alloc, std::size_t n) {
  std::vector<double> v(n);
  Bundle z(alloc.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < alloc.size(); ++a) z[a] = alloc[a][i];
    v[i] = eval_utility(u, z);
  }
  return v;
}

/// Pattern search over transfers of one commodity between two shares, and
/// pairs of such transfers, with the lexicographic objective.
inline Allocation refine_allocation(const UtilitySpec& u, const Bundle& omega, std::size_t n, Allocation alloc,
                                    Objective obj, double initial_step, double min_step) {
  struct Move {
    std::size_t a, from, to;
  };
  std::vector<Move> moves;
  for (std::size_t a = 0; a < omega.size(); ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) moves.push_back({a, i, j});
      }
    }
  }
  std::vector<std::vector<std::size_t>> dirs;
  for (std::size_t m = 0; m < moves.size(); ++m) dirs.push_back({m});
  for (std::size_t m = 0; m < moves.size(); ++m) {
    for (std::size_t k = m + 1; k < moves.size(); ++k) {
      if (moves[m].a == moves[k].a && moves[m].from == moves[k].to && moves[m].to == moves[k].from) continue;
      dirs.push_back({m, k});
    }
  }
  const double scale = *std::max_element(omega.begin(), omega.end());
  auto best = ranked(share_values(u, alloc, n), obj);
  double step = initial_step * scale;
  std::size_t evaluations = 0;
  while (step > min_step * scale && evaluations < 400000) {
    bool improved = false;
    for (const auto& dir : dirs) {
      Allocation cand = alloc;
      bool ok = true;
      for (std::size_t m : dir) {
        const Move& mv = moves[m];
        cand[mv.a][mv.from] -= step;
        cand[mv.a][mv.to] += step;
      }
      for (std::size_t a = 0; a < omega.size() && ok; ++a) {
        for (std::size_t i = 0; i < n; ++i) ok = ok && cand[a][i] >= 0.0 && cand[a][i] <= omega[a];
      }
      if (!ok) continue;
      ++evaluations;
      auto v = ranked(share_values(u, cand, n), obj);
      if (lex_better(v, best, obj)) {
        best = std::move(v);
        alloc = std::move(cand);
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  return alloc;
}

inline BenchmarkResult grid_benchmark(const UtilitySpec& u, const Manna& manna, std::size_t n, Objective obj,
                                      const BenchmarkOptions& opts) {
  const std::size_t k = manna.dimension();
  if (k > 3 || n > 4) {
    throw Error(ErrorCode::Unsupported, "grid benchmark supports K <= 3 and n <= 4 (got K=" + std::to_string(k) +
                                            ", n=" + std::to_string(n) + ")");
  }
  int m = static_cast<int>(std::llround(1.0 / opts.resolution));
  auto lattice_size = [&](int steps) {
    const double per = static_cast<double>(binomial(static_cast<std::size_t>(steps) + n - 1, n - 1));
    return std::pow(per, static_cast<double>(k));
  };
  while (m > 2 && lattice_size(m) > static_cast<double>(opts.lattice_budget)) --m;
  if (lattice_size(m) > static_cast<double>(opts.lattice_budget)) {
    throw Error(ErrorCode::Unsupported, "division lattice exceeds the grid budget");
  }

  // Every share lies on the (m+1)^K sub-lattice: tabulate u there once.
  std::size_t table_size = 1;
  for (std::size_t a = 0; a < k; ++a) table_size *= static_cast<std::size_t>(m + 1);
  std::vector<double> table(table_size);
  {
    Bundle z(k);
    for (std::size_t idx = 0; idx < table_size; ++idx) {
      std::size_t rest = idx;
      for (std::size_t a = 0; a < k; ++a) {
        const auto j = rest % static_cast<std::size_t>(m + 1);
        rest /= static_cast<std::size_t>(m + 1);
        z[a] = manna.omega()[a] * static_cast<double>(j) / static_cast<double>(m);
      }
      table[idx] = eval_utility(u, z);
    }
  }
  const auto comps = compositions(m, n);
  std::vector<std::size_t> choice(k, 0);
  std::vector<std::size_t> best_choice;
  double best_value = obj == Objective::MinMax ? std::numeric_limits<double>::infinity()
                                               : -std::numeric_limits<double>::infinity();
  for (;;) {
    double agg = obj == Objective::MinMax ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t idx = 0, stride = 1;
      for (std::size_t a = 0; a < k; ++a) {
        idx += static_cast<std::size_t>(comps[choice[a]][i]) * stride;
        stride *= static_cast<std::size_t>(m + 1);
      }
      const double v = table[idx];
      agg = obj == Objective::MinMax ? std::max(agg, v) : std::min(agg, v);
    }
    if (best_choice.empty() || (obj == Objective::MinMax ? agg < best_value : agg > best_value)) {
      best_value = agg;
      best_choice = choice;
    }
    std::size_t a = 0;
    while (a < k && ++choice[a] == comps.size()) choice[a++] = 0;
    if (a == k) break;
  }

  Allocation alloc(k, std::vector<double>(n));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      alloc[a][i] = manna.omega()[a] * static_cast<double>(comps[best_choice[a]][i]) / static_cast<double>(m);
    }
  }
  alloc = refine_allocation(u, manna.omega(), n, std::move(alloc), obj, 1.0 / static_cast<double>(m),
                            opts.refine_to);
  const auto values = share_values(u, alloc, n);
  BenchmarkResult r;
  r.value = obj == Objective::MinMax ? *std::max_element(values.begin(), values.end())
                                     : *std::min_element(values.begin(), values.end());
  r.witness = to_partition(alloc, n);
  r.method = Method::Grid;
  r.tolerance = opts.tol;
  return r;
}

inline BenchmarkResult benchmark(const UtilitySpec& u, const Manna& manna, std::size_t n, Objective obj,
                                 const BenchmarkOptions& opts) {
  if (n < 1) throw Error(ErrorCode::InvalidSpec, "n must be positive");
  if (u.manna_kind() != manna.kind()) throw Error(ErrorCode::ShapeMismatch, "utility does not match the manna");
  if (opts.allow_analytic && u.is_additive()) {
    // Additive utilities: both benchmarks equal u(whole)/n, attained by an equipartition.
    BenchmarkResult r;
    r.method = Method::Analytic;
    r.tolerance = opts.tol;
    if (manna.kind() == MannaKind::Commodity) {
      Bundle z = manna.omega();
      for (double& x : z) x /= static_cast<double>(n);
      r.witness.shares.assign(n, Share(z));
      r.value = eval_utility(u, z);
    } else {
      r.value = eval_utility(u, manna.whole()) / static_cast<double>(n);
      r.witness = equipartition(u, default_path(manna), n, {opts.tol}).shares;
    }
    return r;
  }
  if (manna.kind() == MannaKind::Knife) {
    throw Error(ErrorCode::Unsupported, "minMax/Maxmin on the knife manna need an additive density utility");
  }
  return grid_benchmark(u, manna, n, obj, opts);
}

}  // namespace detail

/// minMax(u;n): the best share in the worst n-partition.
inline BenchmarkResult min_max(const UtilitySpec& u, const Manna& manna, std::size_t n,
                               const BenchmarkOptions& opts = {}) {
  return detail::benchmark(u, manna, n, detail::Objective::MinMax, opts);
}

/// Maxmin(u;n): the worst share in the best n-partition.
inline BenchmarkResult max_min(const UtilitySpec& u, const Manna& manna, std::size_t n,
                               const BenchmarkOptions& opts = {}) {
  return detail::benchmark(u, manna, n, detail::Objective::MaxMin, opts);
}

/// Exact (minMax, Maxmin) over the division lattice with step `resolution`.
/// Test oracle only: written as plain enumeration, independent of the grid
/// solver's tabulation and refinement. Requires K <= 2 and n <= 3.
inline std::pair<double, double> brute_force_oracle(const UtilitySpec& u, const Manna& manna, std::size_t n,
                                                    double resolution) {
  const std::size_t k = manna.dimension();
  if (manna.kind() != MannaKind::Commodity || k > 2 || n < 2 || n > 3) {
    throw Error(ErrorCode::Unsupported, "brute-force oracle needs commodity manna, K <= 2, 2 <= n <= 3");
  }
  const int m = static_cast<int>(std::llround(1.0 / resolution));
  const Bundle& w = manna.omega();
  auto amount = [&](std::size_t a, int j) { return w[a] * j / m; };
  double min_max = std::numeric_limits<double>::infinity();
  double max_min = -std::numeric_limits<double>::infinity();
  auto visit = [&](const std::vector<Bundle>& shares) {
    double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
    for (const auto& s : shares) {
      const double v = eval_utility(u, s);
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    min_max = std::min(min_max, hi);
    max_min = std::max(max_min, lo);
  };
  const int ys = k == 2 ? m : 0;
  if (n == 2) {
    for (int i = 0; i <= m; ++i) {
      for (int j = 0; j <= ys; ++j) {
        Bundle s1{amount(0, i)}, s2{w[0] - amount(0, i)};
        if (k == 2) {
          s1.push_back(amount(1, j));
          s2.push_back(w[1] - amount(1, j));
        }
        visit({s1, s2});
      }
    }
  } else {
    for (int i1 = 0; i1 <= m; ++i1) {
      for (int i2 = 0; i1 + i2 <= m; ++i2) {
        for (int j1 = 0; j1 <= ys; ++j1) {
          for (int j2 = 0; j1 + j2 <= ys; ++j2) {
            Bundle s1{amount(0, i1)}, s2{amount(0, i2)}, s3{w[0] - amount(0, i1) - amount(0, i2)};
            if (k == 2) {
              s1.push_back(amount(1, j1));
              s2.push_back(amount(1, j2));
              s3.push_back(w[1] - amount(1, j1) - amount(1, j2));
            }
            visit({s1, s2, s3});
          }
        }
      }
    }
  }
  return {min_max, max_min};
}

}  // namespace fairdiv
