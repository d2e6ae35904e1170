#pragma once

// Manna, shares, partitions, utilities, benchmark measures and knife paths.
//
// Two computable models are supported: the commodity model (a bundle of K
// divisible items, shares are vectors 0 <= z <= omega) and the knife model
// (the unit interval, shares are finite unions of closed intervals).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fairdiv/errors.hpp"
#include "fairdiv/expression.hpp"

namespace fairdiv {

/// Feasibility tolerance for partition closure and containment checks.
inline constexpr double kFeasibilityTol = 1e-9;

enum class MannaKind { Commodity, Knife };

inline const char* to_string(MannaKind kind) {
  return kind == MannaKind::Commodity ? "commodity" : "knife";
}

using Bundle = std::vector<double>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Sorted, pairwise disjoint, nondegenerate closed intervals inside [0,1].
/// Touching intervals are merged so every set has a unique representation.
class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> parts) : parts_(std::move(parts)) { normalize(); }

  static IntervalSet unit() { return IntervalSet({{0.0, 1.0}}); }

  const std::vector<Interval>& parts() const { return parts_; }
  bool empty() const { return parts_.empty(); }

  double length() const {
    double total = 0.0;
    for (const auto& part : parts_) total += part.length();
    return total;
  }

  IntervalSet intersect(const IntervalSet& other) const {
    std::vector<Interval> out;
    std::size_t i = 0, j = 0;
    while (i < parts_.size() && j < other.parts_.size()) {
      const double lo = std::max(parts_[i].lo, other.parts_[j].lo);
      const double hi = std::min(parts_[i].hi, other.parts_[j].hi);
      if (hi > lo) out.push_back({lo, hi});
      if (parts_[i].hi < other.parts_[j].hi) {
        ++i;
      } else {
        ++j;
      }
    }
    return IntervalSet(std::move(out));
  }

  IntervalSet unite(const IntervalSet& other) const {
    std::vector<Interval> all = parts_;
    all.insert(all.end(), other.parts_.begin(), other.parts_.end());
    return IntervalSet(std::move(all));
  }

  IntervalSet subtract(const IntervalSet& other) const {
    std::vector<Interval> out;
    for (const auto& part : parts_) {
      double cursor = part.lo;
      for (const auto& cut : other.parts_) {
        if (cut.hi <= cursor) continue;
        if (cut.lo >= part.hi) break;
        if (cut.lo > cursor) out.push_back({cursor, std::min(cut.lo, part.hi)});
        cursor = std::max(cursor, cut.hi);
        if (cursor >= part.hi) break;
      }
      if (cursor < part.hi) out.push_back({cursor, part.hi});
    }
    return IntervalSet(std::move(out));
  }

  /// Position x such that the part of this set left of x has length `len`.
  double position_at_length(double len) const {
    if (parts_.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& part : parts_) {
      if (acc + part.length() >= len) return part.lo + (len - acc);
      acc += part.length();
    }
    return parts_.back().hi;
  }

  /// Leftmost portion of this set with total length `len`.
  IntervalSet prefix(double len) const {
    if (len <= 0.0) return {};
    return intersect(IntervalSet({{0.0, position_at_length(len)}}));
  }

  friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

 private:
  void normalize() {
    for (const auto& part : parts_) {
      if (!(part.lo <= part.hi) || part.lo < -kFeasibilityTol || part.hi > 1.0 + kFeasibilityTol) {
        throw Error(ErrorCode::OutOfRange, "interval [" + std::to_string(part.lo) + ", " +
                                               std::to_string(part.hi) + "] is not inside [0,1]");
      }
    }
    std::erase_if(parts_, [](const Interval& p) { return p.hi <= p.lo; });
    std::sort(parts_.begin(), parts_.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const auto& part : parts_) {
      if (!merged.empty() && part.lo <= merged.back().hi) {
        merged.back().hi = std::max(merged.back().hi, part.hi);
      } else {
        merged.push_back(part);
      }
    }
    for (auto& part : merged) {
      part.lo = std::clamp(part.lo, 0.0, 1.0);
      part.hi = std::clamp(part.hi, 0.0, 1.0);
    }
    parts_ = std::move(merged);
  }

  std::vector<Interval> parts_;
};

/// A share: a commodity vector or an interval union, never both.
class Share {
 public:
  Share() : value_(Bundle{}) {}
  Share(Bundle bundle) : value_(std::move(bundle)) {}            // NOLINT(implicit)
  Share(IntervalSet intervals) : value_(std::move(intervals)) {}  // NOLINT(implicit)

  MannaKind kind() const { return std::holds_alternative<Bundle>(value_) ? MannaKind::Commodity : MannaKind::Knife; }
  bool is_commodity() const { return kind() == MannaKind::Commodity; }

  const Bundle& bundle() const {
    if (!is_commodity()) throw Error(ErrorCode::ShapeMismatch, "expected a commodity share");
    return std::get<Bundle>(value_);
  }
  const IntervalSet& intervals() const {
    if (is_commodity()) throw Error(ErrorCode::ShapeMismatch, "expected an interval share");
    return std::get<IntervalSet>(value_);
  }

  friend bool operator==(const Share&, const Share&) = default;

 private:
  std::variant<Bundle, IntervalSet> value_;
};

struct Partition {
  std::vector<Share> shares;

  std::size_t size() const { return shares.size(); }
  const Share& operator[](std::size_t i) const { return shares[i]; }
  friend bool operator==(const Partition&, const Partition&) = default;
};

/// The manna: either a commodity endowment omega or the unit interval.
class Manna {
 public:
  static Manna commodity(Bundle omega) {
    if (omega.empty()) throw Error(ErrorCode::InvalidSpec, "commodity manna needs K >= 1");
    for (double w : omega) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw Error(ErrorCode::InvalidSpec, "every endowment coordinate must be positive");
      }
    }
    Manna m;
    m.kind_ = MannaKind::Commodity;
    m.omega_ = std::move(omega);
    return m;
  }
  static Manna knife() {
    Manna m;
    m.kind_ = MannaKind::Knife;
    return m;
  }

  MannaKind kind() const { return kind_; }
  const Bundle& omega() const { return omega_; }
  std::size_t dimension() const { return omega_.size(); }

  Share whole() const {
    if (kind_ == MannaKind::Commodity) return Share(omega_);
    return Share(IntervalSet::unit());
  }
  Share empty_share() const {
    if (kind_ == MannaKind::Commodity) return Share(Bundle(omega_.size(), 0.0));
    return Share(IntervalSet{});
  }

 private:
  MannaKind kind_ = MannaKind::Commodity;
  Bundle omega_;
};

// ---------------------------------------------------------------------------
// Share algebra

inline void require_same_kind(const Share& a, const Share& b) {
  if (a.kind() != b.kind()) throw Error(ErrorCode::ShapeMismatch, "share kinds differ");
  if (a.is_commodity() && a.bundle().size() != b.bundle().size()) {
    throw Error(ErrorCode::ShapeMismatch, "bundle dimensions differ");
  }
}

inline Share share_union(const Share& a, const Share& b) {
  require_same_kind(a, b);
  if (a.is_commodity()) {
    Bundle out = a.bundle();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.bundle()[i];
    return out;
  }
  return a.intervals().unite(b.intervals());
}

/// `a` minus `b`; commodity coordinates are clamped at zero.
inline Share share_difference(const Share& a, const Share& b) {
  require_same_kind(a, b);
  if (a.is_commodity()) {
    Bundle out = a.bundle();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i] - b.bundle()[i]);
    return out;
  }
  return a.intervals().subtract(b.intervals());
}

/// Lebesgue size: sum of coordinates (commodity) or total length (knife).
inline double share_size(const Share& s) {
  if (s.is_commodity()) return std::accumulate(s.bundle().begin(), s.bundle().end(), 0.0);
  return s.intervals().length();
}

inline bool share_within(const Share& part, const Share& whole, double tol = kFeasibilityTol) {
  require_same_kind(part, whole);
  if (part.is_commodity()) {
    for (std::size_t i = 0; i < part.bundle().size(); ++i) {
      if (part.bundle()[i] < -tol || part.bundle()[i] > whole.bundle()[i] + tol) return false;
    }
    return true;
  }
  return part.intervals().subtract(whole.intervals()).length() <= tol;
}

/// Throws MalformedPartition unless `p` exhausts `whole` with negligible overlap.
inline void check_partition(const Share& whole, const Partition& p, std::size_t expected_size,
                            double tol = kFeasibilityTol) {
  if (p.size() != expected_size) {
    throw Error(ErrorCode::MalformedPartition, "expected " + std::to_string(expected_size) + " shares, got " +
                                                   std::to_string(p.size()));
  }
  for (const auto& s : p.shares) {
    if (s.kind() != whole.kind() || (s.is_commodity() && s.bundle().size() != whole.bundle().size())) {
      throw Error(ErrorCode::MalformedPartition, "share shape does not match the manna");
    }
  }
  if (whole.is_commodity()) {
    const Bundle& total = whole.bundle();
    Bundle sum(total.size(), 0.0);
    for (const auto& s : p.shares) {
      for (std::size_t a = 0; a < total.size(); ++a) {
        if (s.bundle()[a] < -tol) throw Error(ErrorCode::MalformedPartition, "negative share coordinate");
        sum[a] += s.bundle()[a];
      }
    }
    for (std::size_t a = 0; a < total.size(); ++a) {
      if (std::abs(sum[a] - total[a]) > tol) {
        throw Error(ErrorCode::MalformedPartition,
                    "shares do not reassemble the manna in coordinate " + std::to_string(a));
      }
    }
    return;
  }
  IntervalSet cover;
  double total_length = 0.0;
  for (const auto& s : p.shares) {
    cover = cover.unite(s.intervals());
    total_length += s.intervals().length();
  }
  if (total_length - cover.length() > tol) throw Error(ErrorCode::MalformedPartition, "shares overlap");
  if (whole.intervals().subtract(cover).length() > tol || cover.subtract(whole.intervals()).length() > tol) {
    throw Error(ErrorCode::MalformedPartition, "shares do not cover the manna exactly");
  }
}

inline Share reassemble(const Partition& p, const Share& zero) {
  Share acc = zero;
  for (const auto& s : p.shares) acc = share_union(acc, s);
  return acc;
}

// ---------------------------------------------------------------------------
// Densities on [0,1]

/// A density on [0,1]: piecewise constant on `breaks` or a polynomial.
struct Density {
  std::vector<double> breaks;  // 0 = b0 < b1 < ... < bm = 1
  std::vector<double> values;  // m values, one per piece
  std::vector<double> poly;    // used when breaks is empty: f(x) = sum poly[k] x^k

  static Density uniform(double value = 1.0) { return Density{{0.0, 1.0}, {value}, {}}; }
  static Density piecewise(std::vector<double> breaks, std::vector<double> values) {
    Density d{std::move(breaks), std::move(values), {}};
    d.validate();
    return d;
  }
  static Density polynomial(std::vector<double> coefficients) {
    Density d{{}, {}, std::move(coefficients)};
    d.validate();
    return d;
  }

  bool is_piecewise() const { return !breaks.empty(); }

  void validate() const {
    if (is_piecewise()) {
      if (breaks.size() != values.size() + 1 || breaks.front() != 0.0 || breaks.back() != 1.0) {
        throw Error(ErrorCode::InvalidSpec, "piecewise density needs breaks 0=b0<...<bm=1 and m values");
      }
      for (std::size_t i = 1; i < breaks.size(); ++i) {
        if (!(breaks[i] > breaks[i - 1])) throw Error(ErrorCode::InvalidSpec, "density breaks must increase");
      }
    } else if (poly.empty()) {
      throw Error(ErrorCode::InvalidSpec, "density needs breaks/values or polynomial coefficients");
    }
  }

  double at(double x) const {
    if (is_piecewise()) {
      auto it = std::upper_bound(breaks.begin(), breaks.end(), x);
      std::size_t idx = it == breaks.begin() ? 0 : static_cast<std::size_t>(it - breaks.begin()) - 1;
      idx = std::min(idx, values.size() - 1);
      return values[idx];
    }
    double acc = 0.0;
    for (std::size_t k = poly.size(); k-- > 0;) acc = acc * x + poly[k];
    return acc;
  }

  /// Integral over [0, x].
  double cumulative(double x) const {
    x = std::clamp(x, 0.0, 1.0);
    if (is_piecewise()) {
      double acc = 0.0;
      for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (x <= breaks[i]) break;
        acc += values[i] * (std::min(x, breaks[i + 1]) - breaks[i]);
      }
      return acc;
    }
    double acc = 0.0;
    for (std::size_t k = poly.size(); k-- > 0;) acc = acc * x + poly[k] / static_cast<double>(k + 1);
    return acc * x;
  }

  double integrate(const IntervalSet& s) const {
    double acc = 0.0;
    for (const auto& part : s.parts()) acc += cumulative(part.hi) - cumulative(part.lo);
    return acc;
  }

  /// Breakpoints where the density may change (pieces) or an even mesh (polynomial).
  std::vector<double> mesh(std::size_t poly_pieces = 512) const {
    if (is_piecewise()) return breaks;
    std::vector<double> out(poly_pieces + 1);
    for (std::size_t i = 0; i <= poly_pieces; ++i) out[i] = static_cast<double>(i) / static_cast<double>(poly_pieces);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Utilities

enum class Monotonicity { Increasing, Decreasing, None };

inline const char* to_string(Monotonicity m) {
  switch (m) {
    case Monotonicity::Increasing: return "increasing";
    case Monotonicity::Decreasing: return "decreasing";
    case Monotonicity::None: return "none";
  }
  return "none";
}

enum class Family {
  Leontief,          // scale * min_a w_a z_a
  CobbDouglas,       // scale * prod_a z_a^e_a
  CES,               // scale * (sum_a w_a z_a^rho)^(1/rho)
  Linear,            // scale * sum_a w_a z_a
  QuadraticNorm,     // scale * sqrt(sum_a w_a z_a^2)
  AntiLeontief,      // scale * max_a w_a z_a
  PolynomialOfSize,  // scale * sum_k c_k s^k, single commodity
  PiecewiseTwoGood,  // the two-good construction with no feasible positive division
  Expression,        // scale * expr(z)
  Density,           // knife: scale * integral of a density
  Segment,           // knife: scale * f(a,b) on single segments
};

inline const char* to_string(Family f) {
  switch (f) {
    case Family::Leontief: return "leontief";
    case Family::CobbDouglas: return "cobb_douglas";
    case Family::CES: return "ces";
    case Family::Linear: return "linear";
    case Family::QuadraticNorm: return "quadratic_norm";
    case Family::AntiLeontief: return "anti_leontief";
    case Family::PolynomialOfSize: return "polynomial";
    case Family::PiecewiseTwoGood: return "piecewise_two_good";
    case Family::Expression: return "expression";
    case Family::Density: return "density";
    case Family::Segment: return "segment";
  }
  return "unknown";
}

inline MannaKind manna_kind_of(Family f) {
  return (f == Family::Density || f == Family::Segment) ? MannaKind::Knife : MannaKind::Commodity;
}

/// A utility over shares: a family tag plus parameters. Every family carries
/// an overall `scale`, so negating a utility flips the scale and the
/// monotonicity flag.
struct UtilitySpec {
  Family family = Family::Linear;
  double scale = 1.0;
  std::vector<double> weights;       // per-coordinate weights (default 1)
  std::vector<double> exponents;     // Cobb-Douglas exponents (default 1/K)
  double rho = 1.0;                  // CES exponent
  std::vector<double> coefficients;  // polynomial in the share size
  int variant = 1;                   // PiecewiseTwoGood agent 1 or 2
  std::optional<fairdiv::Expression> expr;
  fairdiv::Density density = fairdiv::Density::uniform();
  Monotonicity monotone = Monotonicity::None;

  MannaKind manna_kind() const { return manna_kind_of(family); }
  bool is_additive() const { return family == Family::Linear || family == Family::Density; }

  UtilitySpec negated() const {
    UtilitySpec out = *this;
    out.scale = -scale;
    if (monotone == Monotonicity::Increasing) out.monotone = Monotonicity::Decreasing;
    else if (monotone == Monotonicity::Decreasing) out.monotone = Monotonicity::Increasing;
    return out;
  }

  std::string describe() const {
    std::string out = to_string(family);
    if (expr) out += "(" + expr->text() + ")";
    if (scale != 1.0) out += " x" + std::to_string(scale);
    return out;
  }

  // Constructors for the catalog families.

  static UtilitySpec leontief(double scale = 1.0, std::vector<double> w = {}) {
    return make(Family::Leontief, scale, std::move(w), Monotonicity::Increasing);
  }
  static UtilitySpec cobb_douglas(double scale = 1.0, std::vector<double> e = {}) {
    auto u = make(Family::CobbDouglas, scale, {}, Monotonicity::Increasing);
    u.exponents = std::move(e);
    return u;
  }
  static UtilitySpec ces(double scale, double rho, std::vector<double> w = {}) {
    if (rho == 0.0) throw Error(ErrorCode::InvalidSpec, "CES exponent must be nonzero");
    auto u = make(Family::CES, scale, std::move(w), Monotonicity::Increasing);
    u.rho = rho;
    return u;
  }
  static UtilitySpec linear(double scale = 1.0, std::vector<double> w = {}) {
    bool nonneg = std::all_of(w.begin(), w.end(), [](double x) { return x >= 0.0; });
    return make(Family::Linear, scale, std::move(w), nonneg ? Monotonicity::Increasing : Monotonicity::None);
  }
  static UtilitySpec quadratic_norm(double scale = 1.0, std::vector<double> w = {}) {
    return make(Family::QuadraticNorm, scale, std::move(w), Monotonicity::Increasing);
  }
  static UtilitySpec anti_leontief(double scale = 1.0, std::vector<double> w = {}) {
    return make(Family::AntiLeontief, scale, std::move(w), Monotonicity::Increasing);
  }
  static UtilitySpec polynomial(std::vector<double> coefficients, Monotonicity m = Monotonicity::None) {
    if (!coefficients.empty() && coefficients[0] != 0.0) {
      throw Error(ErrorCode::InvalidSpec, "polynomial utility needs a zero constant term (u(empty)=0)");
    }
    auto u = make(Family::PolynomialOfSize, 1.0, {}, m);
    u.coefficients = std::move(coefficients);
    return u;
  }
  static UtilitySpec piecewise_two_good(int which) {
    if (which != 1 && which != 2) throw Error(ErrorCode::InvalidSpec, "piecewise_two_good variant is 1 or 2");
    auto u = make(Family::PiecewiseTwoGood, 1.0, {}, Monotonicity::None);
    u.variant = which;
    return u;
  }
  /// Expression over commodity coordinates; variables x, y, z or x0, x1, ...
  static UtilitySpec expression(std::string_view text, std::size_t dimension,
                                Monotonicity m = Monotonicity::None) {
    std::vector<std::string> vars;
    static const char* kShort[] = {"x", "y", "z"};
    for (std::size_t i = 0; i < dimension; ++i) vars.push_back("x" + std::to_string(i));
    for (std::size_t i = 0; i < dimension && i < 3; ++i) vars.push_back(kShort[i]);
    if (dimension == 1) vars.push_back("s");
    auto u = make(Family::Expression, 1.0, {}, m);
    u.expr = fairdiv::Expression::parse(text, std::move(vars));
    return u;
  }
  static UtilitySpec density_utility(fairdiv::Density d, double scale = 1.0) {
    d.validate();
    auto u = make(Family::Density, scale, {}, Monotonicity::None);
    bool nonneg = true, nonpos = true;
    for (double x : d.mesh(64)) {
      const double v = scale * d.at(std::min(x, 1.0));
      nonneg = nonneg && v >= 0.0;
      nonpos = nonpos && v <= 0.0;
    }
    if (nonneg) u.monotone = Monotonicity::Increasing;
    else if (nonpos) u.monotone = Monotonicity::Decreasing;
    u.density = std::move(d);
    return u;
  }
  /// Segment utility f(a,b) for single-interval shares; requires f(a,a)=0.
  static UtilitySpec segment(std::string_view text, Monotonicity m = Monotonicity::None) {
    auto u = make(Family::Segment, 1.0, {}, m);
    u.expr = fairdiv::Expression::parse(text, {"a", "b"});
    for (int i = 0; i <= 10; ++i) {
      const double a = i / 10.0;
      const double args[2] = {a, a};
      if (std::abs((*u.expr)(args)) > 1e-12) {
        throw Error(ErrorCode::InvalidSpec, "segment utility must satisfy f(a,a)=0");
      }
    }
    return u;
  }

 private:
  static UtilitySpec make(Family f, double scale, std::vector<double> w, Monotonicity m) {
    UtilitySpec u;
    u.family = f;
    u.scale = scale;
    u.weights = std::move(w);
    u.monotone = m;
    if (scale < 0.0) u.monotone = u.negated().monotone;
    return u;
  }
};

namespace detail {

inline double weight(const UtilitySpec& u, std::size_t a) {
  return a < u.weights.size() ? u.weights[a] : 1.0;
}

/// The two-good construction: symmetric in (x,y), written for x <= y.
inline double piecewise_two_good(int which, double x, double y) {
  if (x > y) std::swap(x, y);
  if (which == 1) {
    if (y <= 0.5) return 1.0 - 2.0 * y;
    if (x >= 0.5) return 2.0 * x - 1.0;
    return 0.0;
  }
  if (y <= 0.5 || x >= 0.5) return 0.0;
  if (y <= 1.0 - x) return 2.0 * y - 1.0;
  return 1.0 - 2.0 * x;
}

inline double eval_bundle(const UtilitySpec& u, const Bundle& z) {
  const std::size_t k = z.size();
  if (!u.weights.empty() && u.weights.size() != k) {
    throw Error(ErrorCode::ShapeMismatch, "utility weights do not match the number of commodities");
  }
  switch (u.family) {
    case Family::Leontief: {
      double best = weight(u, 0) * z[0];
      for (std::size_t a = 1; a < k; ++a) best = std::min(best, weight(u, a) * z[a]);
      return u.scale * best;
    }
    case Family::AntiLeontief: {
      double best = weight(u, 0) * z[0];
      for (std::size_t a = 1; a < k; ++a) best = std::max(best, weight(u, a) * z[a]);
      return u.scale * best;
    }
    case Family::CobbDouglas: {
      if (!u.exponents.empty() && u.exponents.size() != k) {
        throw Error(ErrorCode::ShapeMismatch, "Cobb-Douglas exponents do not match the number of commodities");
      }
      double acc = 1.0;
      for (std::size_t a = 0; a < k; ++a) {
        const double e = u.exponents.empty() ? 1.0 / static_cast<double>(k) : u.exponents[a];
        acc *= std::pow(std::max(z[a], 0.0), e);
      }
      return u.scale * acc;
    }
    case Family::CES: {
      double acc = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        const double za = std::max(z[a], 0.0);
        if (u.rho < 0.0 && za == 0.0) return 0.0;
        acc += weight(u, a) * std::pow(za, u.rho);
      }
      if (acc <= 0.0) return 0.0;
      return u.scale * std::pow(acc, 1.0 / u.rho);
    }
    case Family::Linear: {
      double acc = 0.0;
      for (std::size_t a = 0; a < k; ++a) acc += weight(u, a) * z[a];
      return u.scale * acc;
    }
    case Family::QuadraticNorm: {
      double acc = 0.0;
      for (std::size_t a = 0; a < k; ++a) acc += weight(u, a) * z[a] * z[a];
      return u.scale * std::sqrt(acc);
    }
    case Family::PolynomialOfSize: {
      if (k != 1) throw Error(ErrorCode::ShapeMismatch, "polynomial utility needs a single commodity");
      double acc = 0.0;
      for (std::size_t i = u.coefficients.size(); i-- > 0;) acc = acc * z[0] + u.coefficients[i];
      return u.scale * acc;
    }
    case Family::PiecewiseTwoGood:
      if (k != 2) throw Error(ErrorCode::ShapeMismatch, "piecewise_two_good needs two commodities");
      return u.scale * piecewise_two_good(u.variant, z[0], z[1]);
    case Family::Expression: {
      // Slots follow the variable list: x0.., then x, y, z, then s.
      Bundle args = z;
      for (std::size_t i = 0; i < k && i < 3; ++i) args.push_back(z[i]);
      if (k == 1) args.push_back(z[0]);
      return u.scale * (*u.expr)(std::span<const double>(args.data(), args.size()));
    }
    case Family::Density:
    case Family::Segment:
      break;
  }
  throw Error(ErrorCode::ShapeMismatch, std::string("family ") + to_string(u.family) + " needs an interval share");
}

inline double eval_intervals(const UtilitySpec& u, const IntervalSet& s) {
  switch (u.family) {
    case Family::Density:
      return u.scale * u.density.integrate(s);
    case Family::Segment: {
      if (s.empty()) return 0.0;
      if (s.parts().size() != 1) {
        throw Error(ErrorCode::NonSegmentShare, "segment utility is only defined on single intervals");
      }
      const double args[2] = {s.parts()[0].lo, s.parts()[0].hi};
      return u.scale * (*u.expr)(args);
    }
    default:
      throw Error(ErrorCode::ShapeMismatch,
                  std::string("family ") + to_string(u.family) + " needs a commodity share");
  }
}

}  // namespace detail

/// u(s). Deterministic; shares must match the utility's manna kind.
inline double eval_utility(const UtilitySpec& u, const Share& s) {
  if (s.kind() != u.manna_kind()) {
    throw Error(ErrorCode::ShapeMismatch, std::string("utility ") + to_string(u.family) + " cannot evaluate a " +
                                              to_string(s.kind()) + " share");
  }
  if (s.is_commodity()) return detail::eval_bundle(u, s.bundle());
  return detail::eval_intervals(u, s.intervals());
}

// ---------------------------------------------------------------------------
// Benchmark measures

/// An additive benchmark measure normalized to theta(whole manna) = 1.
class MeasureSpec {
 public:
  /// Price vector p >= 0, p != 0, rescaled so that p . omega = 1.
  static MeasureSpec price(Bundle p, const Manna& manna) {
    if (manna.kind() != MannaKind::Commodity || p.size() != manna.dimension()) {
      throw Error(ErrorCode::ShapeMismatch, "price vector must match the commodity manna");
    }
    double total = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (p[a] < 0.0 || !std::isfinite(p[a])) throw Error(ErrorCode::InvalidSpec, "prices must be nonnegative");
      total += p[a] * manna.omega()[a];
    }
    if (!(total > 0.0)) throw Error(ErrorCode::InvalidSpec, "price vector must be nonzero");
    for (double& x : p) x /= total;
    MeasureSpec m;
    m.kind_ = MannaKind::Commodity;
    m.price_ = std::move(p);
    return m;
  }
  /// Equal unit prices, normalized.
  static MeasureSpec uniform(const Manna& manna) {
    if (manna.kind() == MannaKind::Knife) return lebesgue();
    return price(Bundle(manna.dimension(), 1.0), manna);
  }
  static MeasureSpec lebesgue() { return density(Density::uniform()); }
  static MeasureSpec density(Density d) {
    d.validate();
    for (double x : d.mesh(64)) {
      if (!(d.at(std::min(x, 1.0)) > 0.0)) throw Error(ErrorCode::InvalidSpec, "measure density must be positive");
    }
    const double total = d.cumulative(1.0);
    for (double& v : d.values) v /= total;
    for (double& c : d.poly) c /= total;
    MeasureSpec m;
    m.kind_ = MannaKind::Knife;
    m.density_ = std::move(d);
    return m;
  }

  MannaKind kind() const { return kind_; }
  const Bundle& prices() const { return price_; }
  const Density& density() const { return density_; }

  /// True when some price is zero: the measure is then not strictly increasing.
  bool has_zero_price() const {
    return std::any_of(price_.begin(), price_.end(), [](double p) { return p == 0.0; });
  }

  double operator()(const Share& s) const {
    if (s.kind() != kind_) throw Error(ErrorCode::ShapeMismatch, "measure and share kinds differ");
    if (s.is_commodity()) {
      if (s.bundle().size() != price_.size()) throw Error(ErrorCode::ShapeMismatch, "bundle dimension mismatch");
      double acc = 0.0;
      for (std::size_t a = 0; a < price_.size(); ++a) acc += price_[a] * s.bundle()[a];
      return acc;
    }
    return density_.integrate(s.intervals());
  }

  /// Position x with theta([0,x]) = t (knife measures only).
  double quantile(double t) const {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (density_.cumulative(mid) < t) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  MannaKind kind_ = MannaKind::Commodity;
  Bundle price_;
  Density density_ = Density::uniform();
};

/// theta(s); additive, monotone, and equal to 1 on the whole manna.
inline double measure(const MeasureSpec& theta, const Share& s) { return theta(s); }

// ---------------------------------------------------------------------------
// Knife paths

/// An inclusion-increasing path K(t), t in [0,1], from the empty share to a
/// target share.
class KnifePath {
 public:
  /// K(t) = t * target (the default commodity path when target = omega).
  static KnifePath proportional(Bundle target) {
    KnifePath p;
    p.kind_ = Kind::Proportional;
    p.waypoints_ = {Bundle(target.size(), 0.0), std::move(target)};
    return p;
  }
  /// Piecewise-linear path through waypoints at evenly spaced times.
  /// The first waypoint must be 0; legs must be nonnegative and nonzero.
  static KnifePath through(std::vector<Bundle> waypoints) {
    if (waypoints.size() < 2) throw Error(ErrorCode::InvalidSpec, "path needs at least two waypoints");
    for (double x : waypoints.front()) {
      if (x != 0.0) throw Error(ErrorCode::InvalidSpec, "path must start at the empty share");
    }
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      if (waypoints[i].size() != waypoints[0].size()) throw Error(ErrorCode::ShapeMismatch, "waypoint dimension");
      bool moved = false;
      for (std::size_t a = 0; a < waypoints[i].size(); ++a) {
        const double d = waypoints[i][a] - waypoints[i - 1][a];
        if (d < 0.0) throw Error(ErrorCode::InvalidSpec, "path must be inclusion increasing");
        moved = moved || d > 0.0;
      }
      if (!moved) throw Error(ErrorCode::InvalidSpec, "path must be strictly increasing");
    }
    KnifePath p;
    p.kind_ = Kind::Waypoints;
    p.waypoints_ = std::move(waypoints);
    return p;
  }
  /// K(t) = leftmost portion of `over` with length t * |over|.
  static KnifePath sweep(IntervalSet over) {
    KnifePath p;
    p.kind_ = Kind::Sweep;
    p.sweep_ = std::move(over);
    return p;
  }
  /// The default path through a share: proportional scaling or a left-to-right sweep.
  static KnifePath through_share(const Share& s) {
    if (s.is_commodity()) return proportional(s.bundle());
    return sweep(s.intervals());
  }

  MannaKind kind() const { return kind_ == Kind::Sweep ? MannaKind::Knife : MannaKind::Commodity; }
  bool is_proportional() const { return kind_ == Kind::Proportional; }
  const std::vector<Bundle>& waypoints() const { return waypoints_; }

  Share at(double t) const {
    check_time(t);
    if (kind_ == Kind::Sweep) return sweep_.prefix(t * sweep_.length());
    const std::size_t legs = waypoints_.size() - 1;
    const double scaled = t * static_cast<double>(legs);
    std::size_t leg = std::min(static_cast<std::size_t>(scaled), legs - 1);
    const double frac = scaled - static_cast<double>(leg);
    Bundle out(waypoints_[0].size());
    for (std::size_t a = 0; a < out.size(); ++a) {
      out[a] = waypoints_[leg][a] + frac * (waypoints_[leg + 1][a] - waypoints_[leg][a]);
    }
    return out;
  }

  /// K(t2) \ K(t1).
  Share segment(double t1, double t2) const {
    check_time(t1);
    check_time(t2);
    if (t1 > t2) throw Error(ErrorCode::OutOfRange, "knife segment needs t1 <= t2");
    if (kind_ == Kind::Proportional) {
      Bundle out = waypoints_.back();
      for (double& x : out) x *= (t2 - t1);
      return out;
    }
    if (t1 == t2) {
      if (kind_ == Kind::Sweep) return IntervalSet{};
      return Bundle(waypoints_[0].size(), 0.0);
    }
    if (kind_ == Kind::Sweep) {
      const double len = sweep_.length();
      const double lo = sweep_.position_at_length(t1 * len);
      const double hi = sweep_.position_at_length(t2 * len);
      return sweep_.intersect(IntervalSet({{lo, hi}}));
    }
    return share_difference(at(t2), at(t1));
  }

 private:
  enum class Kind { Proportional, Waypoints, Sweep };

  static void check_time(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::OutOfRange, "knife time must lie in [0,1]");
  }

  Kind kind_ = Kind::Proportional;
  std::vector<Bundle> waypoints_;
  IntervalSet sweep_;
};

inline Share knife_segment(const KnifePath& path, double t1, double t2) { return path.segment(t1, t2); }

inline KnifePath default_path(const Manna& manna) { return KnifePath::through_share(manna.whole()); }

// ---------------------------------------------------------------------------
// Declared-monotonicity validation

struct MonotonicityReport {
  bool ok = true;
  std::size_t pairs_checked = 0;
  std::optional<std::pair<Share, Share>> counterexample;  // (smaller, larger)
};

/// Samples nested pairs S <= T and checks the declared direction.
inline MonotonicityReport validate_monotonicity(const UtilitySpec& u, const Manna& manna,
                                                std::size_t pairs = 1000, std::uint64_t seed = 42) {
  MonotonicityReport report;
  if (u.monotone == Monotonicity::None) return report;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sign = u.monotone == Monotonicity::Increasing ? 1.0 : -1.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    Share small, large;
    if (manna.kind() == MannaKind::Commodity) {
      Bundle t(manna.dimension()), s(manna.dimension());
      for (std::size_t a = 0; a < t.size(); ++a) {
        t[a] = unit(rng) * manna.omega()[a];
        s[a] = t[a] * unit(rng);
      }
      small = s;
      large = t;
    } else {
      std::vector<Interval> outer;
      double x = 0.0;
      while (x < 1.0) {
        const double lo = std::min(1.0, x + 0.3 * unit(rng));
        const double hi = std::min(1.0, lo + 0.3 * unit(rng));
        if (hi > lo) outer.push_back({lo, hi});
        x = hi + 1e-3;
      }
      if (u.family == Family::Segment) {
        const double a = unit(rng), b = unit(rng);
        outer = {{std::min(a, b), std::max(a, b)}};
      }
      IntervalSet big(outer);
      std::vector<Interval> inner;
      for (const auto& part : big.parts()) {
        const double lo = part.lo + part.length() * 0.5 * unit(rng);
        const double hi = lo + (part.hi - lo) * unit(rng);
        if (hi > lo) inner.push_back({lo, hi});
        if (u.family == Family::Segment) break;
      }
      small = IntervalSet(inner);
      large = big;
    }
    ++report.pairs_checked;
    const double diff = sign * (eval_utility(u, large) - eval_utility(u, small));
    if (diff < -1e-12) {
      report.ok = false;
      report.counterexample = std::make_pair(small, large);
      return report;
    }
  }
  return report;
}

}  // namespace fairdiv
