#pragma once

// JSON encoding of problems, shares, partitions and utilities.
//
// Problem files look like
//   { "manna": {"kind": "commodity", "omega": [1, 1]},
//     "agents": [ {"name": "A", "utility": {"family": "leontief", "scale": 10}} ],
//     "measure": {"price": [0.5, 0.5]} }
// Errors name the file line and the JSON pointer of the offending value.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairdiv/errors.hpp"
#include "fairdiv/model.hpp"
#include "fairdiv/problem.hpp"

namespace fairdiv::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Source positions

/// Maps JSON pointers to the 1-based line where each value starts. Assumes
/// the text already parsed as valid JSON.
inline std::map<std::string, int> pointer_lines(const std::string& text) {
  std::map<std::string, int> out;
  std::size_t pos = 0;
  int line = 1;
  auto skip_ws = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r')) {
      if (text[pos] == '\n') ++line;
      ++pos;
    }
  };
  auto read_string = [&] {
    std::string s;
    ++pos;  // opening quote
    while (pos < text.size() && text[pos] != '"') {
      if (text[pos] == '\\' && pos + 1 < text.size()) {
        s += text[pos];
        ++pos;
      }
      s += text[pos];
      ++pos;
    }
    ++pos;  // closing quote
    return s;
  };
  auto escape = [](const std::string& key) {
    std::string e;
    for (char c : key) {
      if (c == '~') e += "~0";
      else if (c == '/') e += "~1";
      else e += c;
    }
    return e;
  };
  auto walk = [&](auto&& self, const std::string& ptr) -> void {
    skip_ws();
    if (pos >= text.size()) return;
    out[ptr] = line;
    const char c = text[pos];
    if (c == '{') {
      ++pos;
      for (;;) {
        skip_ws();
        if (pos >= text.size() || text[pos] == '}') break;
        const std::string key = read_string();
        skip_ws();
        ++pos;  // ':'
        self(self, ptr + "/" + escape(key));
        skip_ws();
        if (pos < text.size() && text[pos] == ',') ++pos;
      }
      ++pos;
    } else if (c == '[') {
      ++pos;
      for (std::size_t i = 0;; ++i) {
        skip_ws();
        if (pos >= text.size() || text[pos] == ']') break;
        self(self, ptr + "/" + std::to_string(i));
        skip_ws();
        if (pos < text.size() && text[pos] == ',') ++pos;
      }
      ++pos;
    } else if (c == '"') {
      read_string();
    } else {
      while (pos < text.size() && text[pos] != ',' && text[pos] != '}' && text[pos] != ']' &&
             !std::isspace(static_cast<unsigned char>(text[pos]))) {
        ++pos;
      }
    }
  };
  walk(walk, "");
  return out;
}

/// Reading context: source name, pointer-to-line map, current pointer.
struct Reader {
  std::string source = "<input>";
  std::map<std::string, int> lines;

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    std::string where = source;
    auto it = lines.find(ptr);
    // Missing keys point at the nearest enclosing value.
    std::string p = ptr;
    while (it == lines.end() && !p.empty()) {
      p = p.substr(0, p.rfind('/'));
      it = lines.find(p);
    }
    if (it != lines.end()) where += ":" + std::to_string(it->second);
    throw Error(ErrorCode::InvalidSpec, where + ": " + (ptr.empty() ? "/" : ptr) + ": " + msg);
  }

  const json& at(const json& j, const std::string& ptr, const char* key) const {
    if (!j.is_object()) fail(ptr, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(ptr + "/" + key, "missing field");
    return *it;
  }

  double number(const json& j, const std::string& ptr) const {
    if (!j.is_number()) fail(ptr, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(ptr, "expected a finite number");
    return v;
  }

  std::vector<double> numbers(const json& j, const std::string& ptr) const {
    if (!j.is_array()) fail(ptr, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], ptr + "/" + std::to_string(i)));
    return out;
  }

  std::string string(const json& j, const std::string& ptr) const {
    if (!j.is_string()) fail(ptr, "expected a string");
    return j.get<std::string>();
  }

  /// Runs `fn`, rewrapping model validation errors with the position of `ptr`.
  template <typename Fn>
  auto guarded(const std::string& ptr, Fn&& fn) const -> decltype(fn()) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InvalidSpec && e.code() != ErrorCode::ShapeMismatch &&
          e.code() != ErrorCode::OutOfRange) {
        throw;
      }
      fail(ptr, e.what());
    }
  }
};

/// Parses JSON text; syntax errors report line and column.
inline json parse_json(const std::string& text, const std::string& source = "<input>") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::InvalidSpec,
                source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": JSON syntax error");
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidSpec, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Shares and partitions

inline json to_json(const Share& s) {
  if (s.is_commodity()) return json(s.bundle());
  json arr = json::array();
  for (const auto& part : s.intervals().parts()) arr.push_back({part.lo, part.hi});
  return arr;
}

inline json to_json(const Partition& p) {
  json arr = json::array();
  for (const auto& s : p.shares) arr.push_back(to_json(s));
  return arr;
}

inline Share share_from_json(const json& j, const Manna& manna, const Reader& r = {}, const std::string& ptr = "") {
  if (!j.is_array()) r.fail(ptr, "a share is an array");
  if (manna.kind() == MannaKind::Commodity) {
    Bundle z = r.numbers(j, ptr);
    if (z.size() != manna.dimension()) r.fail(ptr, "share has " + std::to_string(z.size()) + " coordinates, expected " +
                                                       std::to_string(manna.dimension()));
    for (std::size_t a = 0; a < z.size(); ++a) {
      if (z[a] < -kFeasibilityTol || z[a] > manna.omega()[a] + kFeasibilityTol) {
        r.fail(ptr + "/" + std::to_string(a), "coordinate outside [0, omega]");
      }
      z[a] = std::clamp(z[a], 0.0, manna.omega()[a]);
    }
    return z;
  }
  std::vector<Interval> parts;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = ptr + "/" + std::to_string(i);
    const auto pair = r.numbers(j[i], p);
    if (pair.size() != 2) r.fail(p, "an interval is [lo, hi]");
    if (!(0.0 <= pair[0] && pair[0] <= pair[1] && pair[1] <= 1.0)) r.fail(p, "need 0 <= lo <= hi <= 1");
    parts.push_back({pair[0], pair[1]});
  }
  return r.guarded(ptr, [&] { return Share(IntervalSet(std::move(parts))); });
}

inline Partition partition_from_json(const json& j, const Manna& manna, const Reader& r = {},
                                     const std::string& ptr = "") {
  if (!j.is_array()) r.fail(ptr, "a partition is an array of shares");
  Partition p;
  for (std::size_t i = 0; i < j.size(); ++i) p.shares.push_back(share_from_json(j[i], manna, r, ptr + "/" + std::to_string(i)));
  return p;
}

// ---------------------------------------------------------------------------
// Utilities, measures, paths

inline json to_json(const Density& d) {
  if (d.is_piecewise()) return {{"breaks", d.breaks}, {"values", d.values}};
  return {{"poly", d.poly}};
}

inline Density density_from_json(const json& j, const Reader& r, const std::string& ptr) {
  if (!j.is_object()) r.fail(ptr, "a density is an object with breaks/values or poly");
  return r.guarded(ptr, [&] {
    if (j.contains("poly")) return Density::polynomial(r.numbers(j["poly"], ptr + "/poly"));
    return Density::piecewise(r.numbers(r.at(j, ptr, "breaks"), ptr + "/breaks"),
                              r.numbers(r.at(j, ptr, "values"), ptr + "/values"));
  });
}

inline std::optional<Family> family_from_string(const std::string& s) {
  for (Family f : {Family::Leontief, Family::CobbDouglas, Family::CES, Family::Linear, Family::QuadraticNorm,
                   Family::AntiLeontief, Family::PolynomialOfSize, Family::PiecewiseTwoGood, Family::Expression,
                   Family::Density, Family::Segment}) {
    if (s == to_string(f)) return f;
  }
  return std::nullopt;
}

inline json to_json(const UtilitySpec& u) {
  json j = {{"family", to_string(u.family)}, {"scale", u.scale}, {"monotone", to_string(u.monotone)}};
  if (!u.weights.empty()) j["weights"] = u.weights;
  if (!u.exponents.empty()) j["exponents"] = u.exponents;
  if (u.family == Family::CES) j["rho"] = u.rho;
  if (!u.coefficients.empty()) j["coefficients"] = u.coefficients;
  if (u.family == Family::PiecewiseTwoGood) j["variant"] = u.variant;
  if (u.expr) j["expr"] = u.expr->text();
  if (u.family == Family::Density) j["density"] = to_json(u.density);
  return j;
}

inline UtilitySpec utility_from_json(const json& j, const Manna& manna, const Reader& r = {},
                                     const std::string& ptr = "") {
  if (!j.is_object()) r.fail(ptr, "a utility is an object");
  const std::string fam_ptr = ptr + "/family";
  const std::string name = r.string(r.at(j, ptr, "family"), fam_ptr);
  const auto fam = family_from_string(name);
  if (!fam) r.fail(fam_ptr, "unknown utility family '" + name + "'");
  if (manna_kind_of(*fam) != manna.kind()) {
    r.fail(fam_ptr, "family '" + name + "' does not fit a " + to_string(manna.kind()) + " manna");
  }
  auto opt_numbers = [&](const char* key) {
    return j.contains(key) ? r.numbers(j[key], ptr + "/" + key) : std::vector<double>{};
  };
  const double scale = j.contains("scale") ? r.number(j["scale"], ptr + "/scale") : 1.0;
  std::optional<Monotonicity> mono;
  if (j.contains("monotone")) {
    const std::string m = r.string(j["monotone"], ptr + "/monotone");
    if (m == "increasing") mono = Monotonicity::Increasing;
    else if (m == "decreasing") mono = Monotonicity::Decreasing;
    else if (m == "none") mono = Monotonicity::None;
    else r.fail(ptr + "/monotone", "expected increasing, decreasing or none");
  }
  auto weights = opt_numbers("weights");
  if (!weights.empty() && weights.size() != manna.dimension() && manna.kind() == MannaKind::Commodity) {
    r.fail(ptr + "/weights", "weights must have one entry per commodity");
  }
  UtilitySpec u = r.guarded(ptr, [&]() -> UtilitySpec {
    switch (*fam) {
      case Family::Leontief: return UtilitySpec::leontief(scale, weights);
      case Family::CobbDouglas: return UtilitySpec::cobb_douglas(scale, opt_numbers("exponents"));
      case Family::CES: return UtilitySpec::ces(scale, r.number(r.at(j, ptr, "rho"), ptr + "/rho"), weights);
      case Family::Linear: return UtilitySpec::linear(scale, weights);
      case Family::QuadraticNorm: return UtilitySpec::quadratic_norm(scale, weights);
      case Family::AntiLeontief: return UtilitySpec::anti_leontief(scale, weights);
      case Family::PolynomialOfSize: {
        if (manna.dimension() != 1) r.fail(fam_ptr, "polynomial utilities need a single commodity");
        auto u = UtilitySpec::polynomial(r.numbers(r.at(j, ptr, "coefficients"), ptr + "/coefficients"));
        u.scale = scale;
        return u;
      }
      case Family::PiecewiseTwoGood: {
        if (manna.dimension() != 2) r.fail(fam_ptr, "piecewise_two_good needs two commodities");
        const double v = j.contains("variant") ? r.number(j["variant"], ptr + "/variant") : 1.0;
        return UtilitySpec::piecewise_two_good(static_cast<int>(v));
      }
      case Family::Expression: {
        auto u = UtilitySpec::expression(r.string(r.at(j, ptr, "expr"), ptr + "/expr"), manna.dimension());
        u.scale = scale;
        return u;
      }
      case Family::Density:
        return UtilitySpec::density_utility(density_from_json(r.at(j, ptr, "density"), r, ptr + "/density"), scale);
      case Family::Segment: {
        auto u = UtilitySpec::segment(r.string(r.at(j, ptr, "expr"), ptr + "/expr"));
        u.scale = scale;
        return u;
      }
    }
    r.fail(fam_ptr, "unsupported family");
  });
  if (mono) {
    // Catalog families carry their own monotonicity; a declaration may add
    // one where the family has none, or must agree with it.
    if (u.monotone != Monotonicity::None && *mono != u.monotone) {
      r.fail(ptr + "/monotone", std::string("family is ") + to_string(u.monotone));
    }
    u.monotone = *mono;
  }
  return u;
}

inline json to_json(const MeasureSpec& m) {
  if (m.kind() == MannaKind::Commodity) return {{"price", m.prices()}};
  return {{"density", to_json(m.density())}};
}

inline MeasureSpec measure_from_json(const json& j, const Manna& manna, const Reader& r = {},
                                     const std::string& ptr = "") {
  if (!j.is_object()) r.fail(ptr, "a measure is an object");
  if (manna.kind() == MannaKind::Commodity) {
    const std::string p = ptr + "/price";
    return r.guarded(p, [&] { return MeasureSpec::price(r.numbers(r.at(j, ptr, "price"), p), manna); });
  }
  if (!j.contains("density")) return MeasureSpec::lebesgue();
  return r.guarded(ptr + "/density",
                   [&] { return MeasureSpec::density(density_from_json(j["density"], r, ptr + "/density")); });
}

inline json to_json(const KnifePath& p) {
  if (p.kind() == MannaKind::Knife) return {{"kind", "sweep"}};
  if (p.is_proportional()) return {{"kind", "proportional"}, {"target", p.waypoints().back()}};
  return {{"kind", "waypoints"}, {"waypoints", p.waypoints()}};
}

inline KnifePath path_from_json(const json& j, const Manna& manna, const Reader& r = {}, const std::string& ptr = "") {
  if (!j.is_object()) r.fail(ptr, "a path is an object");
  if (manna.kind() == MannaKind::Knife) return default_path(manna);
  if (!j.contains("waypoints")) return default_path(manna);
  const json& w = j["waypoints"];
  if (!w.is_array()) r.fail(ptr + "/waypoints", "expected an array of bundles");
  std::vector<Bundle> pts;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::string p = ptr + "/waypoints/" + std::to_string(i);
    pts.push_back(r.numbers(w[i], p));
    if (pts.back().size() != manna.dimension()) r.fail(p, "waypoint dimension differs from the manna");
  }
  if (pts.empty()) r.fail(ptr + "/waypoints", "need waypoints");
  for (std::size_t a = 0; a < manna.dimension(); ++a) {
    if (std::abs(pts.back()[a] - manna.omega()[a]) > kFeasibilityTol) {
      r.fail(ptr + "/waypoints", "the last waypoint must be the whole manna");
    }
  }
  return r.guarded(ptr + "/waypoints", [&] { return KnifePath::through(pts); });
}

inline json to_json(const Manna& m) {
  if (m.kind() == MannaKind::Knife) return {{"kind", "knife"}};
  return {{"kind", "commodity"}, {"omega", m.omega()}};
}

inline Manna manna_from_json(const json& j, const Reader& r = {}, const std::string& ptr = "") {
  const std::string kind = r.string(r.at(j, ptr, "kind"), ptr + "/kind");
  if (kind == "knife") return Manna::knife();
  if (kind != "commodity") r.fail(ptr + "/kind", "manna kind is commodity or knife");
  const std::string p = ptr + "/omega";
  return r.guarded(p, [&] { return Manna::commodity(r.numbers(r.at(j, ptr, "omega"), p)); });
}

// ---------------------------------------------------------------------------
// Problems

inline json to_json(const Problem& p) {
  json agents = json::array();
  for (const auto& a : p.agents) agents.push_back({{"name", a.name}, {"utility", to_json(a.utility)}});
  json j = {{"manna", to_json(p.manna)}, {"agents", agents}};
  if (p.measure_spec) j["measure"] = to_json(*p.measure_spec);
  if (p.path_spec) j["path"] = to_json(*p.path_spec);
  if (!p.ordering.empty()) j["ordering"] = p.ordering;
  return j;
}

inline Problem problem_from_json(const json& j, const Reader& r = {}) {
  if (!j.is_object()) r.fail("", "a problem is an object");
  Problem p;
  p.manna = manna_from_json(r.at(j, "", "manna"), r, "/manna");
  const json& agents = r.at(j, "", "agents");
  if (!agents.is_array() || agents.empty()) r.fail("/agents", "expected a nonempty array of agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string ptr = "/agents/" + std::to_string(i);
    Agent a;
    a.name = agents[i].contains("name") ? r.string(agents[i]["name"], ptr + "/name") : "agent" + std::to_string(i);
    a.utility = utility_from_json(r.at(agents[i], ptr, "utility"), p.manna, r, ptr + "/utility");
    p.agents.push_back(std::move(a));
  }
  if (j.contains("measure")) p.measure_spec = measure_from_json(j["measure"], p.manna, r, "/measure");
  if (j.contains("path")) p.path_spec = path_from_json(j["path"], p.manna, r, "/path");
  if (j.contains("ordering")) {
    const json& o = j["ordering"];
    if (!o.is_array()) r.fail("/ordering", "expected an array of agent indices or names");
    for (std::size_t i = 0; i < o.size(); ++i) {
      const std::string ptr = "/ordering/" + std::to_string(i);
      if (o[i].is_string()) {
        const std::string name = o[i].get<std::string>();
        std::size_t k = 0;
        while (k < p.agents.size() && p.agents[k].name != name) ++k;
        if (k == p.agents.size()) r.fail(ptr, "unknown agent '" + name + "'");
        p.ordering.push_back(k);
      } else {
        const double v = r.number(o[i], ptr);
        if (v < 0 || v != std::floor(v)) r.fail(ptr, "expected an agent index");
        p.ordering.push_back(static_cast<std::size_t>(v));
      }
    }
  }
  r.guarded("", [&] {
    p.validate();
    return 0;
  });
  return p;
}

inline Problem parse_problem(const std::string& text, const std::string& source = "<input>") {
  const json j = parse_json(text, source);
  Reader r;
  r.source = source;
  r.lines = pointer_lines(text);
  return problem_from_json(j, r);
}

inline Problem load_problem(const std::string& path) { return parse_problem(read_file(path), path); }

}  // namespace fairdiv::io
