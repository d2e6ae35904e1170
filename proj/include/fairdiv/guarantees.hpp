#pragma once

// Moving-Knife and Bid & Choose guarantees.
//
// A clock rule is described by its step utility w(t1, t2): the utility of
// the knife segment K(t2) \ K(t1) for a moving knife, or the indirect
// utility (worst removal of measure t1, best remaining share of measure
// t2 - t1) for Bid & Choose. The guarantee is the max over increasing
// schedules of the min step utility, reached where every step is equal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fairdiv/benchmarks.hpp"
#include "fairdiv/errors.hpp"
#include "fairdiv/model.hpp"
#include "fairdiv/optimize.hpp"

namespace fairdiv {

/// Moving knife along a path, or Bid & Choose over a benchmark measure.
struct ClockRule {
  enum class Kind { MovingKnife, BidAndChoose };

  Kind kind = Kind::BidAndChoose;
  KnifePath path = KnifePath::proportional({1.0});
  MeasureSpec measure = MeasureSpec::lebesgue();

  static ClockRule moving_knife(KnifePath p) {
    ClockRule r;
    r.kind = Kind::MovingKnife;
    r.path = std::move(p);
    return r;
  }
  static ClockRule bid_and_choose(MeasureSpec m) {
    ClockRule r;
    r.kind = Kind::BidAndChoose;
    r.measure = std::move(m);
    return r;
  }

  bool is_knife() const { return kind == Kind::MovingKnife; }
  const char* name() const { return is_knife() ? "mk" : "bnc"; }
};

/// Increasing stopping times t0 = 0 <= t1 <= ... <= tn = 1.
struct BidSchedule {
  std::vector<double> times;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  /// Stop time for the k-th step (k = 1..n-1).
  double stop(std::size_t k) const { return times.at(k); }
  bool valid() const {
    if (times.size() < 2 || times.front() != 0.0 || times.back() != 1.0) return false;
    return std::is_sorted(times.begin(), times.end());
  }
};

struct GuaranteeReport {
  ClockRule rule;
  std::size_t n = 0;
  double value = 0.0;
  BidSchedule schedule;
  std::vector<double> step_utilities;
  double spread = 0.0;
  Method method = Method::Equalization;
  bool via_antisymmetry = false;  // decreasing n=2 value derived from -u
};

struct GuaranteeOptions {
  double tol = 1e-6;
  double resolution = 0.02;
  double refine_to = 1e-10;
  double time_tol = 1e-11;
};

// ---------------------------------------------------------------------------
// Knife-manna additive densities: indirect utilities via ratio ordering

namespace detail {

/// Pieces of [0,1] on which both the utility density and the measure density
/// are (approximately) constant, sorted by utility-per-measure, best first.
struct RatioPiece {
  double lo, hi;
  double theta_mass;
  double utility_mass;
  double ratio() const { return utility_mass / theta_mass; }
};

inline std::vector<RatioPiece> ratio_pieces(const UtilitySpec& u, const MeasureSpec& theta) {
  std::vector<double> mesh = u.density.mesh();
  const auto m2 = theta.density().mesh();
  mesh.insert(mesh.end(), m2.begin(), m2.end());
  std::sort(mesh.begin(), mesh.end());
  mesh.erase(std::unique(mesh.begin(), mesh.end()), mesh.end());
  std::vector<RatioPiece> out;
  for (std::size_t i = 0; i + 1 < mesh.size(); ++i) {
    const double lo = mesh[i], hi = mesh[i + 1];
    if (hi <= lo) continue;
    const double tm = theta.density().cumulative(hi) - theta.density().cumulative(lo);
    const double um = u.scale * (u.density.cumulative(hi) - u.density.cumulative(lo));
    out.push_back({lo, hi, tm, um});
  }
  std::stable_sort(out.begin(), out.end(), [](const RatioPiece& a, const RatioPiece& b) { return a.ratio() > b.ratio(); });
  return out;
}

inline void require_knife_density(const UtilitySpec& u) {
  if (u.family != Family::Density) {
    throw Error(ErrorCode::Unsupported, "Bid & Choose on the knife manna needs an additive density utility");
  }
}

/// Highest-ratio region of measure `mass` inside `within`.
inline IntervalSet top_region(const UtilitySpec& u, const MeasureSpec& theta, const IntervalSet& within, double mass,
                              bool best_first = true) {
  auto pieces = ratio_pieces(u, theta);
  if (!best_first) std::reverse(pieces.begin(), pieces.end());
  std::vector<Interval> taken;
  double left = mass;
  for (const auto& piece : pieces) {
    if (left <= 0.0) break;
    const IntervalSet avail = within.intersect(IntervalSet({{piece.lo, piece.hi}}));
    for (const auto& part : avail.parts()) {
      if (left <= 0.0) break;
      const double pm = theta(IntervalSet({part}));
      if (pm <= left) {
        taken.push_back(part);
        left -= pm;
      } else {
        const double base = theta.density().cumulative(part.lo);
        const double x = numeric::bisect_first(
            [&](double y) { return theta.density().cumulative(y) - base >= left; }, part.lo, part.hi, 1e-15);
        taken.push_back({part.lo, x});
        left = 0.0;
      }
    }
  }
  return IntervalSet(std::move(taken));
}

inline double knife_u_theta(const UtilitySpec& u, const MeasureSpec& theta, double t1, double t2) {
  double acc = 0.0, pos = 0.0;
  for (const auto& piece : ratio_pieces(u, theta)) {
    const double lo = std::max(pos, t1), hi = std::min(pos + piece.theta_mass, t2);
    if (hi > lo) acc += piece.ratio() * (hi - lo);
    pos += piece.theta_mass;
    if (pos >= t2) break;
  }
  return acc;
}

inline void require_co_monotone(const UtilitySpec& u) {
  if (u.monotone == Monotonicity::None) {
    throw Error(ErrorCode::NonMonotone, "Bid & Choose indirect utilities need an increasing or decreasing utility");
  }
}

inline numeric::BudgetFace face(const Bundle& upper, const MeasureSpec& theta, double budget) {
  return numeric::BudgetFace{upper, theta.prices(), budget};
}

inline void require_commodity_dims(const Manna& manna) {
  if (manna.dimension() > 3) {
    throw Error(ErrorCode::Unsupported, "indirect utilities support at most 3 commodities");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Step utilities

/// u(K(t2) \ K(t1)).
inline double u_kappa(const UtilitySpec& u, const KnifePath& path, double t1, double t2) {
  return eval_utility(u, knife_segment(path, t1, t2));
}

/// Best share of measure `budget` inside `remaining` (worst share when
/// `best` is false).
inline Share extreme_share(const UtilitySpec& u, const MeasureSpec& theta, const Share& remaining, double budget,
                           bool best = true, const GuaranteeOptions& opts = {}) {
  if (remaining.is_commodity()) {
    const auto sense = best ? numeric::Sense::Maximize : numeric::Sense::Minimize;
    auto r = numeric::optimize_face(detail::face(remaining.bundle(), theta, budget),
                                    [&](const Bundle& z) { return eval_utility(u, z); }, sense, opts.resolution,
                                    opts.refine_to);
    return r.point;
  }
  detail::require_knife_density(u);
  return detail::top_region(u, theta, remaining.intervals(), budget, best);
}

struct IndirectUtility {
  double value = 0.0;
  Share adversary;  // removal T attaining the outer minimum
  Share best;       // best response S to that removal
};

/// The indirect utility: min over removals T with theta(T) = t1 of the best
/// share S disjoint from T with theta(S) = t2 - t1, with its argmin/argmax.
inline IndirectUtility u_theta_detail(const UtilitySpec& u, const MeasureSpec& theta, const Manna& manna, double t1,
                                      double t2, const GuaranteeOptions& opts = {}) {
  detail::require_co_monotone(u);
  if (!(0.0 <= t1 && t1 <= t2 && t2 <= 1.0)) throw Error(ErrorCode::OutOfRange, "need 0 <= t1 <= t2 <= 1");
  IndirectUtility out;
  if (manna.kind() == MannaKind::Knife) {
    detail::require_knife_density(u);
    out.value = detail::knife_u_theta(u, theta, t1, t2);
    out.adversary = detail::top_region(u, theta, IntervalSet::unit(), t1);
    out.best = detail::top_region(u, theta, IntervalSet::unit().subtract(out.adversary.intervals()), t2 - t1);
    return out;
  }
  detail::require_commodity_dims(manna);
  const Bundle& omega = manna.omega();
  const double budget = t2 - t1;
  auto inner = [&](const Bundle& removed) {
    Bundle rest(omega.size());
    for (std::size_t a = 0; a < omega.size(); ++a) rest[a] = std::max(0.0, omega[a] - removed[a]);
    return numeric::optimize_face(detail::face(rest, theta, budget),
                                  [&](const Bundle& z) { return eval_utility(u, z); }, numeric::Sense::Maximize,
                                  opts.resolution, opts.refine_to);
  };
  auto outer = numeric::optimize_face(detail::face(omega, theta, t1),
                                      [&](const Bundle& removed) { return inner(removed).value; },
                                      numeric::Sense::Minimize, opts.resolution, opts.refine_to);
  out.value = outer.value;
  out.adversary = outer.point;
  out.best = inner(outer.point).point;
  return out;
}

inline double u_theta(const UtilitySpec& u, const MeasureSpec& theta, const Manna& manna, double t1, double t2,
                      const GuaranteeOptions& opts = {}) {
  return u_theta_detail(u, theta, manna, t1, t2, opts).value;
}

/// Step utility of a clock rule.
inline std::function<double(double, double)> step_utility(const UtilitySpec& u, const Manna& manna,
                                                          const ClockRule& rule, const GuaranteeOptions& opts = {}) {
  if (rule.is_knife()) {
    return [u, path = rule.path](double t1, double t2) { return u_kappa(u, path, t1, t2); };
  }
  detail::require_co_monotone(u);
  if (manna.kind() == MannaKind::Commodity && rule.measure.has_zero_price()) {
    // Zero prices make the measure only weakly increasing; results stay
    // defined but budget faces can be unbounded in the free coordinates.
  }
  return [u, manna, theta = rule.measure, opts](double t1, double t2) {
    if (t2 <= t1) return 0.0;
    return u_theta(u, theta, manna, t1, t2, opts);
  };
}

// ---------------------------------------------------------------------------
// Equalization

namespace detail {

struct Tail {
  double value = 0.0;
  std::vector<double> cuts;  // t_{k+1}, ..., t_{n-1}
};

/// Given the last fixed cut `from` (the k-th), finds later cuts equalizing
/// steps k+1..n. The innermost level solves w(t, s) = w(s, 1); each outer
/// level solves w(t, s) = tail(s) for the smallest crossing s.
inline Tail solve_tail(const std::function<double(double, double)>& w, std::size_t remaining_steps, double from,
                       double time_tol) {
  if (remaining_steps == 1) return {w(from, 1.0), {}};
  auto gap = [&](double s) { return w(from, s) - solve_tail(w, remaining_steps - 1, s, time_tol).value; };
  const double g_lo = gap(from), g_hi = gap(1.0);
  double s = from;
  if (g_lo <= 0.0 && g_hi >= 0.0) {
    s = numeric::bisect_first([&](double x) { return gap(x) >= 0.0; }, from, 1.0, time_tol);
  } else if (g_lo >= 0.0 && g_hi <= 0.0) {
    s = numeric::bisect_first([&](double x) { return gap(x) <= 0.0; }, from, 1.0, time_tol);
  } else {
    s = std::abs(g_lo) <= std::abs(g_hi) ? from : 1.0;
  }
  Tail t;
  Tail rest = solve_tail(w, remaining_steps - 1, s, time_tol);
  t.value = w(from, s);
  t.cuts.push_back(s);
  t.cuts.insert(t.cuts.end(), rest.cuts.begin(), rest.cuts.end());
  return t;
}

inline GuaranteeReport report_from_schedule(const std::function<double(double, double)>& w, const ClockRule& rule,
                                            std::size_t n, std::vector<double> times) {
  GuaranteeReport r;
  r.rule = rule;
  r.n = n;
  r.schedule.times = std::move(times);
  for (std::size_t k = 0; k + 1 < r.schedule.times.size(); ++k) {
    r.step_utilities.push_back(w(r.schedule.times[k], r.schedule.times[k + 1]));
  }
  auto [lo, hi] = std::minmax_element(r.step_utilities.begin(), r.step_utilities.end());
  r.value = *lo;
  r.spread = *hi - *lo;
  return r;
}

}  // namespace detail

/// Equalized schedule and guarantee for a clock rule.
inline GuaranteeReport equalize(const UtilitySpec& u, const Manna& manna, const ClockRule& rule, std::size_t n,
                                const GuaranteeOptions& opts = {}) {
  if (n < 2) throw Error(ErrorCode::InvalidSpec, "equalize needs n >= 2");
  if (u.manna_kind() != manna.kind()) throw Error(ErrorCode::ShapeMismatch, "utility does not match the manna");
  const auto w = step_utility(u, manna, rule, opts);
  const detail::Tail tail = detail::solve_tail(w, n, 0.0, opts.time_tol);
  std::vector<double> times{0.0};
  times.insert(times.end(), tail.cuts.begin(), tail.cuts.end());
  times.push_back(1.0);
  auto report = detail::report_from_schedule(w, rule, n, std::move(times));
  if (report.spread > opts.tol) {
    throw NoConvergence(std::string("equalization for ") + rule.name() + " left a spread", report.spread);
  }
  return report;
}

namespace detail {

/// Decreasing utilities with two agents: Gamma(u;2) = -Gamma(-u;2). The
/// Bid & Choose schedule maps t -> 1 - t under the complement change of
/// variables; the knife schedule is unchanged.
inline GuaranteeReport by_antisymmetry(const UtilitySpec& u, const Manna& manna, const ClockRule& rule,
                                       const GuaranteeOptions& opts) {
  const GuaranteeReport mirrored = equalize(u.negated(), manna, rule, 2, opts);
  std::vector<double> times = mirrored.schedule.times;
  if (!rule.is_knife()) times[1] = 1.0 - times[1];
  const auto w = step_utility(u, manna, rule, opts);
  auto report = report_from_schedule(w, rule, 2, std::move(times));
  report.via_antisymmetry = true;
  if (std::abs(report.value + mirrored.value) > opts.tol || report.spread > opts.tol) {
    // The mirrored schedule does not equalize -u numerically; solve directly.
    return equalize(u, manna, rule, 2, opts);
  }
  report.value = -mirrored.value;
  return report;
}

}  // namespace detail

/// Moving-knife guarantee along `path`.
inline GuaranteeReport gamma_kappa(const UtilitySpec& u, const Manna& manna, const KnifePath& path, std::size_t n,
                                   const GuaranteeOptions& opts = {}) {
  const auto rule = ClockRule::moving_knife(path);
  if (u.monotone == Monotonicity::Decreasing && n == 2) return detail::by_antisymmetry(u, manna, rule, opts);
  return equalize(u, manna, rule, n, opts);
}

/// Bid & Choose guarantee for the benchmark measure `theta`.
inline GuaranteeReport gamma_theta(const UtilitySpec& u, const Manna& manna, const MeasureSpec& theta, std::size_t n,
                                   const GuaranteeOptions& opts = {}) {
  detail::require_co_monotone(u);
  const auto rule = ClockRule::bid_and_choose(theta);
  if (u.monotone == Monotonicity::Decreasing && n == 2) return detail::by_antisymmetry(u, manna, rule, opts);
  return equalize(u, manna, rule, n, opts);
}

inline GuaranteeReport guarantee(const UtilitySpec& u, const Manna& manna, const ClockRule& rule, std::size_t n,
                                 const GuaranteeOptions& opts = {}) {
  return rule.is_knife() ? gamma_kappa(u, manna, rule.path, n, opts) : gamma_theta(u, manna, rule.measure, n, opts);
}

/// Two-agent Bid & Choose guarantee by direct bisection on the bid t:
/// best share of measure t against worst complement of a measure-t share.
/// Independent of the nested indirect-utility route used by equalize.
inline std::pair<double, double> gamma_theta_two_agents(const UtilitySpec& u, const Manna& manna,
                                                        const MeasureSpec& theta, const GuaranteeOptions& opts = {}) {
  detail::require_co_monotone(u);
  const Share whole = manna.whole();
  auto best_of = [&](double t) { return eval_utility(u, extreme_share(u, theta, whole, t, true, opts)); };
  auto worst_complement = [&](double t) {
    // min over theta(S)=t of u(whole \ S) = min over theta(R)=1-t of u(R).
    return eval_utility(u, extreme_share(u, theta, whole, 1.0 - t, false, opts));
  };
  const double sign = u.monotone == Monotonicity::Increasing ? 1.0 : -1.0;
  const double t = numeric::bisect_first(
      [&](double x) { return sign * (best_of(x) - worst_complement(x)) >= 0.0; }, 0.0, 1.0, opts.time_tol);
  return {std::min(best_of(t), worst_complement(t)), t};
}

/// Checks Gamma(-u;2) = -Gamma(u;2) by equalizing the negated utility
/// directly (not through the antisymmetry shortcut).
inline bool antisymmetry_check(const UtilitySpec& u, const Manna& manna, const ClockRule& rule,
                               const GuaranteeOptions& opts = {}, double* lhs = nullptr, double* rhs = nullptr) {
  if (u.monotone != Monotonicity::Increasing) {
    throw Error(ErrorCode::NonMonotone, "antisymmetry check expects an increasing utility");
  }
  const double plus = equalize(u, manna, rule, 2, opts).value;
  const double minus = equalize(u.negated(), manna, rule, 2, opts).value;
  if (lhs) *lhs = minus;
  if (rhs) *rhs = -plus;
  return std::abs(minus + plus) <= 10.0 * opts.tol;
}

// ---------------------------------------------------------------------------
// Constructive witnesses for minMax <= Gamma <= Maxmin

/// Greedy sequence: each share is the best available of its scheduled
/// measure; the last agent keeps the rest. min_k u(S_k) equals Gamma.
inline Partition best_share_sequence(const UtilitySpec& u, const Manna& manna, const MeasureSpec& theta,
                                     const BidSchedule& schedule, const GuaranteeOptions& opts = {}) {
  Partition p;
  Share remaining = manna.whole();
  for (std::size_t k = 1; k + 1 < schedule.times.size(); ++k) {
    const double budget = schedule.times[k] - schedule.times[k - 1];
    Share s = extreme_share(u, theta, remaining, budget, true, opts);
    remaining = share_difference(remaining, s);
    p.shares.push_back(std::move(s));
  }
  p.shares.push_back(remaining);
  return p;
}

/// Reverse sequence: the last share is the worst complement of a
/// measure-t_{n-1} removal, and each earlier share avoids the adversarial
/// removal of its step. max_k u(R_k) equals Gamma.
inline Partition worst_remainder_sequence(const UtilitySpec& u, const Manna& manna, const MeasureSpec& theta,
                                          const BidSchedule& schedule, const GuaranteeOptions& opts = {}) {
  const auto& t = schedule.times;
  const std::size_t n = t.size() - 1;
  std::vector<Share> r(n);
  const Share whole = manna.whole();
  const Share last = extreme_share(u, theta, whole, 1.0 - t[n - 1], false, opts);
  r[n - 1] = last;
  Share upper = share_difference(whole, last);  // T_{n-1}
  for (std::size_t k = n - 1; k >= 1; --k) {
    // Build T_{k-1} with (adversary of step k) cap T_k  <=  T_{k-1}  <=  T_k.
    const Share adversary = u_theta_detail(u, theta, manna, t[k - 1], t[k], opts).adversary;
    Share lower;
    if (whole.is_commodity()) {
      Bundle lo(upper.bundle().size());
      for (std::size_t a = 0; a < lo.size(); ++a) lo[a] = std::min(adversary.bundle()[a], upper.bundle()[a]);
      const double need = t[k - 1] - theta(lo);
      const double room = theta(upper) - theta(lo);
      const double lambda = room > 0.0 ? std::clamp(need / room, 0.0, 1.0) : 0.0;
      Bundle mid(lo.size());
      for (std::size_t a = 0; a < lo.size(); ++a) mid[a] = lo[a] + lambda * (upper.bundle()[a] - lo[a]);
      lower = mid;
    } else {
      const IntervalSet core = adversary.intervals().intersect(upper.intervals());
      const IntervalSet extra = upper.intervals().subtract(adversary.intervals());
      const double need = std::max(0.0, t[k - 1] - theta(core));
      const double x = numeric::bisect_first(
          [&](double y) { return theta(extra.intersect(IntervalSet({{0.0, y}}))) >= need; }, 0.0, 1.0, 1e-15);
      lower = core.unite(extra.intersect(IntervalSet({{0.0, x}})));
    }
    r[k - 1] = share_difference(upper, lower);
    upper = lower;
    if (k == 1) break;
  }
  Partition p;
  p.shares = std::move(r);
  return p;
}

}  // namespace fairdiv
