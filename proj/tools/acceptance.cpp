// Acceptance run: one PASS/FAIL line per primary criterion. Exit status 0
// only if every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fairdiv/catalog.hpp"
#include "fairdiv/io.hpp"
#include "fairdiv/matching.hpp"
#include "fairdiv/protocols.hpp"

using namespace fairdiv;

namespace {

constexpr double kTol = 1e-6;
const Manna kSquare = Manna::commodity({1.0, 1.0});
const double kR2 = std::sqrt(2.0);

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (failures.size() < 5) failures.push_back(what);
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Problem load(const std::string& name) {
  return io::load_problem(std::string(FAIRDIV_SOURCE_DIR) + "/problems/" + name + ".json");
}

Problem make_problem(const Manna& m, const std::vector<UtilitySpec>& us) {
  Problem p;
  p.manna = m;
  for (std::size_t i = 0; i < us.size(); ++i) p.agents.push_back({"agent" + std::to_string(i), us[i]});
  return p;
}

double best_of(const UtilitySpec& u, const Partition& p) {
  double v = -1e300;
  for (const auto& s : p.shares) v = std::max(v, eval_utility(u, s));
  return v;
}

double worst_of(const UtilitySpec& u, const Partition& p) {
  double v = 1e300;
  for (const auto& s : p.shares) v = std::min(v, eval_utility(u, s));
  return v;
}

// -- Tables -----------------------------------------------------------------

struct TableSpec {
  std::size_t n;
  // Per utility in catalog order: minMax, Gamma_p, equal split, Maxmin.
  std::vector<std::array<double, 4>> closed;
  std::vector<std::array<const char*, 4>> printed;
  double budget_s;
};

const TableSpec kTwo{2,
                     {{0, 10.0 / 3, 5, 5},
                      {0, 10 * (kR2 - 1), 5, 5},
                      {2.5, 40.0 / 9, 5, 5},
                      {5, 5, 5, 5},
                      {5, 10 * (2 - kR2), 5, 5 * kR2},
                      {5, 20.0 / 3, 5, 10}},
                     {{"0", "3.3", "5", "5"},
                      {"0", "4.1", "5", "5"},
                      {"2.5", "4.4", "5", "5"},
                      {"5", "5", "5", "5"},
                      {"5", "5.9", "5", "7.1"},
                      {"5", "6.7", "5", "10"}},
                     60.0};

const TableSpec kThree{3,
                       {{0, 2, 10.0 / 3, 10.0 / 3},
                        {0, 10 * (std::sqrt(5.0) - 2), 10.0 / 3, 10.0 / 3},
                        {2, 2.5, 10.0 / 3, 10.0 / 3},
                        {10.0 / 3, 10.0 / 3, 10.0 / 3, 10.0 / 3},
                        {10.0 / 3, 10 * (kR2 - 1), 10.0 / 3, 10 * (kR2 - 1)},
                        {10.0 / 3, 5, 10.0 / 3, 5}},
                       {{"0", "2", "3.3", "3.3"},
                        {"0", "2.4", "3.3", "3.3"},
                        {"2", "2.5", "3.3", "3.3"},
                        {"3.3", "3.3", "3.3", "3.3"},
                        {"3.3", "4.1", "3.3", "4.1"},
                        {"3.3", "5", "3.3", "5"}},
                       300.0};

Outcome table_criterion(const TableSpec& spec) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = catalog::table(spec.n);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double got[4] = {rows[i].min_max, rows[i].gamma_p, rows[i].equal_split, rows[i].max_min};
    for (int c = 0; c < 4; ++c) {
      const double err = std::abs(got[c] - spec.closed[i][c]);
      worst = std::max(worst, err);
      o.check(err <= 5e-3, rows[i].name + " cell " + std::to_string(c) + " = " + fmt(got[c]));
      o.check(catalog::round1(got[c]) == spec.printed[i][c],
              rows[i].name + " cell " + std::to_string(c) + " rounds to " + catalog::round1(got[c]));
    }
  }
  if (spec.n == 3) {
    // The symmetric witnesses {(x,0),(0,x),(1-x,1-x)}.
    const auto table = catalog::table_utilities();
    const UtilitySpec ces = table[2].utility;
    const UtilitySpec quad = table[4].utility;
    auto sym = [](double x) {
      return Partition{{Share(Bundle{x, 0.0}), Share(Bundle{0.0, x}), Share(Bundle{1.0 - x, 1.0 - x})}};
    };
    o.check(std::abs(best_of(ces, sym(0.8)) - 2.0) < 1e-12 && std::abs(rows[2].min_max - 2.0) < 1e-3,
            "CES minMax witness x=4/5");
    o.check(std::abs(worst_of(quad, sym(2.0 - kR2)) - 10 * (kR2 - 1)) < 1e-12 &&
                std::abs(rows[4].max_min - 10 * (kR2 - 1)) < 1e-3,
            "quadratic Maxmin witness x=2-sqrt2");
    o.check(std::abs(best_of(ces, rows[2].min_max_witness) - rows[2].min_max) < 1e-9, "CES witness attains minMax");
    o.check(std::abs(worst_of(quad, rows[4].max_min_witness) - rows[4].max_min) < 1e-9,
            "quadratic witness attains Maxmin");
  }
  o.check(elapsed < spec.budget_s, "runtime " + fmt(elapsed) + " s");
  o.detail = "24 cells, max error " + fmt(worst) + ", " + fmt(elapsed) + " s";
  return o;
}

// -- Worked examples ----------------------------------------------------------

Outcome single_commodity_example() {
  Outcome o;
  Problem p = load("ann_bob");
  const double expect[2][2] = {{20, 35}, {-5, 0}};
  for (std::size_t i = 0; i < 2; ++i) {
    const double lo = min_max(p.agents[i].utility, p.manna, 2).value;
    const double hi = max_min(p.agents[i].utility, p.manna, 2).value;
    o.check(std::abs(lo - expect[i][0]) <= 1e-3 && std::abs(hi - expect[i][1]) <= 1e-3,
            p.agents[i].name + " (" + fmt(lo) + ", " + fmt(hi) + ")");
  }
  const auto a = run_dnc(p, truthful_strategies(p, RuleSpec::dnc()));
  o.check(std::abs(a.utilities[0] - 35) < 1e-3 && std::abs(a.utilities[1] + 5) < 1e-3, "Ann divides: (35, -5)");
  p.ordering = {1, 0};
  const auto b = run_dnc(p, truthful_strategies(p, RuleSpec::dnc()));
  o.check(std::abs(b.utilities[0] - 20) < 1e-3 && std::abs(b.utilities[1]) < 1e-3, "Bob divides: (20, 0)");
  o.detail = "Ann divides (" + fmt(a.utilities[0]) + ", " + fmt(a.utilities[1]) + "), Bob divides (" +
             fmt(b.utilities[0]) + ", " + fmt(b.utilities[1]) + ")";
  return o;
}

Outcome two_good_example() {
  Outcome o;
  const Problem p = load("two_good");
  for (const auto& a : p.agents) {
    const double lo = min_max(a.utility, p.manna, 2).value;
    const double hi = max_min(a.utility, p.manna, 2).value;
    o.check(std::abs(lo) <= 1e-3 && std::abs(hi - 1) <= 1e-3, a.name + " (" + fmt(lo) + ", " + fmt(hi) + ")");
  }
  const int m = 200;
  double best = -1e300;
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      const Bundle z{double(i) / m, double(j) / m};
      best = std::max(best, std::min(eval_utility(p.agents[0].utility, z),
                                     eval_utility(p.agents[1].utility, Bundle{1 - z[0], 1 - z[1]})));
    }
  }
  o.check(std::abs(best) < 1e-12, "grid certification max min = " + fmt(best));
  o.detail = "(0, 1) for both; max over 201x201 divisions of min(u1(z), u2(w-z)) = " + fmt(best);
  return o;
}

Outcome leontief_example() {
  Outcome o;
  Problem p = load("leontief_anti");
  const double expect[2][2] = {{0, 0.5}, {0.5, 1}};
  for (std::size_t i = 0; i < 2; ++i) {
    const double lo = min_max(p.agents[i].utility, p.manna, 2).value;
    const double hi = max_min(p.agents[i].utility, p.manna, 2).value;
    o.check(std::abs(lo - expect[i][0]) <= 1e-3 && std::abs(hi - expect[i][1]) <= 1e-3,
            p.agents[i].name + " (" + fmt(lo) + ", " + fmt(hi) + ")");
  }
  const auto a = run_dnc(p, truthful_strategies(p, RuleSpec::dnc()));
  p.ordering = {1, 0};
  const auto b = run_dnc(p, truthful_strategies(p, RuleSpec::dnc()));
  o.check(std::abs(a.utilities[0] - 0.5) < 1e-6 && std::abs(a.utilities[1] - 0.5) < 1e-6, "Leontief divides");
  o.check(std::abs(b.utilities[0]) < 1e-6 && std::abs(b.utilities[1] - 1) < 1e-6, "anti-Leontief divides");
  o.detail = "Leontief divides (" + fmt(a.utilities[0]) + ", " + fmt(a.utilities[1]) + "), anti-Leontief divides (" +
             fmt(b.utilities[0]) + ", " + fmt(b.utilities[1]) + ")";
  return o;
}

// -- Property suite -----------------------------------------------------------

struct Item {
  std::string name;
  UtilitySpec u;
  Manna manna;
};

std::vector<Item> catalog_items() {
  std::vector<Item> out;
  for (const auto& e : catalog::table_utilities()) {
    out.push_back({e.name, e.utility, kSquare});
    out.push_back({"neg_" + e.name, e.utility.negated(), kSquare});
  }
  out.push_back({"single_peaked", UtilitySpec::polynomial({0, 12, -1}), Manna::commodity({10.0})});
  out.push_back({"single_dipped", UtilitySpec::polynomial({0, -6, 1}), Manna::commodity({10.0})});
  out.push_back({"two_good_1", UtilitySpec::piecewise_two_good(1), kSquare});
  out.push_back({"two_good_2", UtilitySpec::piecewise_two_good(2), kSquare});
  return out;
}

KnifePath random_path(const Manna& m, std::mt19937_64& rng) {
  if (m.dimension() == 1) return default_path(m);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  Bundle mid(m.dimension());
  for (std::size_t a = 0; a < mid.size(); ++a) mid[a] = unit(rng) * m.omega()[a];
  return KnifePath::through({Bundle(m.dimension(), 0.0), mid, m.omega()});
}

MeasureSpec random_prices(const Manna& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.2, 1.0);
  Bundle p(m.dimension());
  for (auto& x : p) x = unit(rng);
  return MeasureSpec::price(p, m);
}

Density random_density(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.1, 3.0);
  const int pieces = 2 + static_cast<int>(rng() % 4);
  std::vector<double> breaks{0.0}, values;
  for (int i = 1; i < pieces; ++i) breaks.push_back(double(i) / pieces + 0.05 * (unit(rng) - 1.5) / 3.0);
  breaks.push_back(1.0);
  for (int i = 0; i < pieces; ++i) values.push_back(unit(rng));
  return Density::piecewise(breaks, values);
}

KnifePath path_through(const Partition& p, const Manna& m) {
  std::vector<Bundle> pts{Bundle(m.dimension(), 0.0)};
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    Bundle b = pts.back();
    for (std::size_t a = 0; a < b.size(); ++a) b[a] += p[i].bundle()[a];
    pts.push_back(b);
  }
  pts.push_back(m.omega());
  return KnifePath::through(pts);
}

Outcome property_suite() {
  Outcome o;
  std::map<std::string, std::size_t> counts;
  auto check = [&](const char* prop, bool ok, const std::string& what) {
    ++counts[prop];
    o.check(ok, std::string(prop) + ": " + what);
  };
  const auto items = catalog_items();
  std::map<std::pair<std::string, std::size_t>, std::pair<BenchmarkResult, BenchmarkResult>> bench;
  std::map<std::pair<std::string, std::size_t>, double> gamma_equal;
  for (std::size_t n : {2u, 3u}) {
    for (const auto& it : items) {
      bench[{it.name, n}] = {min_max(it.u, it.manna, n), max_min(it.u, it.manna, n)};
    }
  }
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (std::size_t n : {2u, 3u}) {
      std::mt19937_64 rng(seed * 1000 + n);
      const std::string tag = " n=" + std::to_string(n) + " seed=" + std::to_string(seed);
      for (const auto& it : items) {
        const auto& [lo, hi] = bench[{it.name, n}];
        const bool monotone = it.u.monotone != Monotonicity::None;
        // minMax <= equipartition value <= Maxmin.
        EquipartitionOptions eo;
        eo.seed = seed;
        for (int k = 0; k < 4; ++k) {
          const KnifePath path = k == 0 ? default_path(it.manna) : random_path(it.manna, rng);
          for (const auto& e : equipartition_candidates(it.u, path, n, eo)) {
            check("chain", e.common_value >= lo.value - 2 * kTol && e.common_value <= hi.value + 2 * kTol,
                  it.name + tag);
          }
        }
        if (!monotone) continue;
        // Monotone: the benchmarks are attained by equipartitions.
        for (const auto* r : {&lo, &hi}) {
          const double spread = best_of(it.u, r->witness) - worst_of(it.u, r->witness);
          const double v = spread <= 1e-5 ? worst_of(it.u, r->witness)
                                           : equipartition(it.u, path_through(r->witness, it.manna), n).common_value;
          check("monotone equality", std::abs(v - r->value) <= 1e-5, it.name + tag);
        }
        for (int k = 0; k < 10; ++k) {
          const double v = equipartition(it.u, random_path(it.manna, rng), n).common_value;
          check("monotone equality", v >= lo.value - kTol && v <= hi.value + kTol, it.name + tag);
        }
        // minMax <= Gamma <= Maxmin for both clock rules.
        const auto mk = gamma_kappa(it.u, it.manna, random_path(it.manna, rng), n);
        const auto bc = gamma_theta(it.u, it.manna, random_prices(it.manna, rng), n);
        for (const auto* g : {&mk, &bc}) {
          check("gamma bounds", g->value >= lo.value - kTol && g->value <= hi.value + kTol,
                it.name + " " + g->rule.name() + tag);
        }
      }
      // Additive collapse.
      std::uniform_real_distribution<double> unit(0.2, 2.0);
      const Manna m = Manna::commodity({unit(rng), unit(rng)});
      const auto lin = UtilitySpec::linear(unit(rng), {unit(rng), unit(rng)});
      const auto cake = UtilitySpec::density_utility(random_density(rng));
      for (const auto& [u, manna] : {std::pair{lin, m}, std::pair{cake, Manna::knife()}}) {
        const double share = eval_utility(u, manna.whole()) / double(n);
        check("additive collapse",
              std::abs(min_max(u, manna, n).value - share) <= kTol && std::abs(max_min(u, manna, n).value - share) <= kTol,
              tag);
      }
      // Equal-split comparison at equal prices.
      const std::vector<std::string> convex{"leontief", "cobb_douglas", "ces", "linear"};
      const std::vector<std::string> concave{"linear", "quadratic_norm", "anti_leontief"};
      for (const auto& e : catalog::table_utilities()) {
        auto& g = gamma_equal[{e.name, n}];
        if (g == 0.0) g = gamma_theta(e.utility, kSquare, MeasureSpec::uniform(kSquare), n).value;
        const double es = equal_split(e.utility, kSquare, n);
        if (std::count(convex.begin(), convex.end(), e.name)) check("equal split", g <= es + kTol, e.name + tag);
        if (std::count(concave.begin(), concave.end(), e.name)) check("equal split", es <= g + kTol, e.name + tag);
      }
      // Knife: every 2-equipartition of a density utility has one value.
      const auto dens = UtilitySpec::density_utility(random_density(rng));
      const double cut = equipartition(dens, default_path(Manna::knife()), 2).common_value;
      std::uniform_real_distribution<double> where(0.0, 1.0);
      for (int k = 0; k < 5; ++k) {
        const double a = where(rng);
        auto window = [&](double len) {
          return a + len <= 1.0 ? IntervalSet({{a, a + len}}) : IntervalSet({{a, 1.0}, {0.0, a + len - 1.0}});
        };
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 200; ++i) {
          const double mid = 0.5 * (lo + hi);
          const IntervalSet w = window(mid);
          const double gap = eval_utility(dens, Share(w)) - eval_utility(dens, Share(IntervalSet::unit().subtract(w)));
          (gap < 0 ? lo : hi) = mid;
        }
        check("knife equipartitions", std::abs(eval_utility(dens, Share(window(lo))) - cut) <= kTol, tag);
      }
      // Antisymmetry for two agents.
      if (n == 2) {
        for (const auto& e : catalog::table_utilities()) {
          for (const auto& rule : {ClockRule::moving_knife(random_path(kSquare, rng)),
                                   ClockRule::bid_and_choose(random_prices(kSquare, rng))}) {
            check("antisymmetry", antisymmetry_check(e.utility, kSquare, rule, {}), e.name + " " + rule.name() + tag);
          }
        }
      }
    }
  }
  std::size_t total = 0;
  for (const auto& [k, v] : counts) {
    total += v;
    o.detail += (o.detail.empty() ? "" : ", ") + k + " " + std::to_string(v);
  }
  o.detail = std::to_string(total) + " checks (" + o.detail + ")";
  return o;
}

// -- Soundness ---------------------------------------------------------------

std::vector<std::vector<std::size_t>> orderings(std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> out;
  do out.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

// Agent 0 is truthful with each table utility in turn; the others take the
// remaining catalog entries and play at random, under every ordering.
std::vector<Problem> catalog_profiles(bool negate, std::mt19937_64& rng) {
  const auto table = catalog::table_utilities();
  std::vector<Problem> out;
  for (std::size_t n : {2u, 3u}) {
    for (std::size_t i = 0; i < table.size(); ++i) {
      std::vector<UtilitySpec> us;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& u = table[(i + 2 * k) % table.size()].utility;
        us.push_back(negate ? u.negated() : u);
      }
      Problem base = make_problem(kSquare, us);
      base.measure_spec = random_prices(kSquare, rng);
      base.path_spec = random_path(kSquare, rng);
      for (const auto& ord : orderings(n)) {
        Problem p = base;
        p.ordering = ord;
        out.push_back(p);
      }
    }
  }
  return out;
}

Outcome soundness() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::map<std::string, std::size_t> runs;
  double worst_gap = 1e300;
  auto random_team = [&](const Problem& p) {
    std::vector<StrategyPtr> s;
    for (std::size_t k = 0; k < p.n(); ++k) s.push_back(std::make_shared<RandomStrategy>(rng(), p.measure()));
    return s;
  };

  // Divide & Choose, including the non-monotone and knife examples.
  auto dnc = catalog_profiles(false, rng);
  for (const char* extra : {"ann_bob", "two_good", "cake"}) {
    const Problem p = load(extra);
    for (const auto& ord : orderings(p.n())) {
      Problem q = p;
      q.ordering = ord;
      dnc.push_back(q);
    }
  }
  for (const auto& p : dnc) {
    for (std::size_t who = 0; who < (p.agents.size() && p.agents[0].utility.family == Family::Leontief ? 1u : p.n());
         ++who) {
      auto truthful = std::make_shared<TruthfulDncStrategy>(p.agents[who].utility, p.manna, p.n(), kTol);
      for (int seed = 0; seed < 3; ++seed) {
        auto s = random_team(p);
        s[who] = truthful;
        const double got = run_dnc(p, s).utilities[who];
        worst_gap = std::min(worst_gap, got - truthful->threshold());
        o.check(got >= truthful->threshold() - 10 * kTol, "dnc below minMax: " + fmt(got));
        ++runs["dnc"];
      }
    }
  }

  // Clock rules, both directions.
  for (const RuleKind kind : {RuleKind::MovingKnife, RuleKind::BidAndChoose}) {
    for (const Direction dir : {Direction::Increasing, Direction::Decreasing}) {
      const RuleSpec rule = kind == RuleKind::MovingKnife ? RuleSpec::mk(dir) : RuleSpec::bnc(dir);
      auto profiles = catalog_profiles(dir == Direction::Decreasing, rng);
      if (dir == Direction::Increasing) profiles.push_back(load("cake"));
      std::map<std::string, std::shared_ptr<TruthfulClockStrategy>> cache;
      for (const auto& p : profiles) {
        Problem key_problem = p;
        key_problem.ordering.clear();
        auto& truthful = cache[io::to_json(key_problem).dump()];
        if (!truthful) truthful = std::make_shared<TruthfulClockStrategy>(p.agents[0].utility, p, rule);
        for (int seed = 0; seed < 5; ++seed) {
          auto s = random_team(p);
          s[0] = truthful;
          const double got = run_clock(p, rule, s).utilities[0];
          worst_gap = std::min(worst_gap, got - truthful->report().value);
          o.check(got >= truthful->report().value - 10 * kTol, std::string(to_string(kind)) + " below Gamma");
          ++runs[std::string(to_string(kind)) + "_" + to_string(dir)];
        }
      }
    }
  }
  for (const auto& [rule, count] : runs) o.check(count >= 200, rule + " only " + std::to_string(count) + " runs");

  // Tightness: the first Divider offers the chooser's minMax witness and the
  // others accept everything.
  double tight = 0.0;
  std::vector<Problem> tight_problems;
  for (const auto& e : catalog::table_utilities()) {
    for (std::size_t n : {2u, 3u}) tight_problems.push_back(make_problem(kSquare, std::vector<UtilitySpec>(n, e.utility)));
  }
  tight_problems.push_back(load("ann_bob"));
  tight_problems.push_back(load("cake"));
  for (const auto& p : tight_problems) {
    const auto& u = p.agents[1].utility;
    const auto lo = min_max(u, p.manna, p.n());
    std::vector<StrategyPtr> s;
    for (std::size_t k = 0; k < p.n(); ++k) {
      auto c = std::make_shared<CallbackStrategy>();
      c->on_propose = [&](const Observation& ob) {
        return ob.active_count == p.n() ? lo.witness : detail::equipartition_of(u, ob.remaining, ob.active_count);
      };
      c->on_accept = [](const Observation& ob) {
        std::vector<std::size_t> all(ob.offered.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
      };
      s.push_back(c);
    }
    s[1] = std::make_shared<TruthfulDncStrategy>(u, p.manna, p.n(), kTol);
    const double got = run_dnc(p, s).utilities[1];
    tight = std::max(tight, std::abs(got - lo.value));
    o.check(std::abs(got - lo.value) <= 10 * kTol, "tightness " + fmt(got) + " vs " + fmt(lo.value));
  }

  for (const auto& [rule, count] : runs) o.detail += rule + " " + std::to_string(count) + " runs, ";
  o.detail += "worst margin " + fmt(worst_gap) + ", tightness gap " + fmt(tight);
  return o;
}

// -- Matching oracle ----------------------------------------------------------

bool is_proper(const BipartiteGraph& g, const std::vector<std::size_t>& agents, const std::vector<std::size_t>& shares) {
  std::vector<bool> inside(g.n, false);
  for (std::size_t a : agents) inside[a] = true;
  for (std::size_t k = 0; k < agents.size(); ++k) {
    if (!g.likes[agents[k]][shares[k]]) return false;
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    if (inside[i]) continue;
    for (std::size_t r : shares) {
      if (g.likes[i][r]) return false;
    }
  }
  return true;
}

/// Largest properly matchable agent set and its lexicographically smallest
/// proper assignment, by enumeration.
bool agrees_with_enumeration(const BipartiteGraph& g) {
  std::vector<std::size_t> best_agents, best_shares;
  for (unsigned mask = 1; mask < (1u << g.n); ++mask) {
    std::vector<std::size_t> agents;
    for (std::size_t i = 0; i < g.n; ++i) {
      if (mask & (1u << i)) agents.push_back(i);
    }
    if (agents.size() < best_agents.size()) continue;
    std::vector<std::size_t> perm(g.n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::optional<std::vector<std::size_t>> smallest;
    do {
      std::vector<std::size_t> shares(perm.begin(), perm.begin() + long(agents.size()));
      if (is_proper(g, agents, shares) && (!smallest || shares < *smallest)) smallest = shares;
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (smallest && agents.size() > best_agents.size()) {
      best_agents = agents;
      best_shares = *smallest;
    }
  }
  const ProperMatch pm = proper_match(g);
  if (pm.matched_agents != best_agents) return false;
  for (std::size_t k = 0; k < best_agents.size(); ++k) {
    if (pm.assignment[k] != std::pair{best_agents[k], best_shares[k]}) return false;
  }
  return true;
}

BipartiteGraph graph_of(std::size_t n, std::size_t divider, const std::vector<unsigned>& masks) {
  BipartiteGraph g;
  g.n = n;
  g.divider = divider;
  g.likes.assign(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < n; ++r) g.likes[i][r] = (masks[i] >> r) & 1u;
  }
  return g;
}

Outcome matching_oracle() {
  Outcome o;
  std::size_t exhaustive = 0, sampled = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const unsigned full = (1u << n) - 1;
    for (std::size_t d = 0; d < n; ++d) {
      std::vector<unsigned> masks(n, 1u);
      masks[d] = full;
      while (true) {
        o.check(agrees_with_enumeration(graph_of(n, d, masks)), "n=" + std::to_string(n));
        ++exhaustive;
        std::size_t i = 0;
        for (; i < n; ++i) {
          if (i == d) continue;
          if (masks[i] < full) {
            ++masks[i];
            break;
          }
          masks[i] = 1u;
        }
        if (i == n) break;
      }
    }
  }
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<unsigned> masks(5);
    const std::size_t d = rng() % 5;
    for (std::size_t i = 0; i < 5; ++i) masks[i] = i == d ? 31u : 1u + unsigned(rng() % 31);
    o.check(agrees_with_enumeration(graph_of(5, d, masks)), "n=5 trial " + std::to_string(trial));
    ++sampled;
  }
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 6 + trial % 2;
    std::vector<unsigned> masks(n);
    const std::size_t d = rng() % n;
    for (std::size_t i = 0; i < n; ++i) {
      unsigned m = 0;
      while (m == 0) {
        for (std::size_t r = 0; r < n; ++r) {
          if (rng() % 4 == 0) m |= 1u << r;
        }
      }
      masks[i] = i == d ? (1u << n) - 1 : m;
    }
    o.check(agrees_with_enumeration(graph_of(n, d, masks)), "n=" + std::to_string(n) + " trial");
    ++sampled;
  }
  o.detail = std::to_string(exhaustive) + " exhaustive (n<=4), " + std::to_string(sampled) + " sampled (n=5..7)";
  return o;
}

// -- Replay -------------------------------------------------------------------

Outcome replay_determinism() {
  Outcome o;
  std::mt19937_64 rng(77);
  const std::vector<Problem> problems{load("ann_bob"), load("two_good"), load("leontief_anti_10"), load("additive"),
                                      load("cake")};
  for (int trial = 0; trial < 100; ++trial) {
    const Problem& p = problems[trial % problems.size()];
    const bool monotone = std::all_of(p.agents.begin(), p.agents.end(),
                                      [](const Agent& a) { return a.utility.monotone == Monotonicity::Increasing; });
    RuleSpec rule = RuleSpec::dnc();
    if (monotone && trial % 3 == 1) rule = RuleSpec::mk();
    if (monotone && trial % 3 == 2) rule = RuleSpec::bnc();
    std::vector<StrategyPtr> s;
    for (std::size_t k = 0; k < p.n(); ++k) s.push_back(std::make_shared<RandomStrategy>(rng(), p.measure()));
    Engine e(p, rule);
    const auto t = run(e, s);
    const Engine again = replay(io::json::parse(t.document.dump()));
    bool same = again.done();
    for (std::size_t i = 0; same && i < p.n(); ++i) {
      same = io::to_json(*again.allocation()[i]).dump() == io::to_json(t.allocation[i]).dump() &&
             again.utilities()[i] == t.utilities[i];
    }
    o.check(same && again.transcript().dump() == t.document.dump(), "trial " + std::to_string(trial));
  }
  o.detail = "100 randomized runs over dnc, mk, bnc";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"two-agent table", [] { return table_criterion(kTwo); }},
      {"three-agent table", [] { return table_criterion(kThree); }},
      {"single-commodity example", single_commodity_example},
      {"two-good example", two_good_example},
      {"Leontief/anti-Leontief example", leontief_example},
      {"property suite", property_suite},
      {"guarantee soundness and tightness", soundness},
      {"matching oracle equivalence", matching_oracle},
      {"replay determinism", replay_determinism},
  };
  bool all = true;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), seconds_since(t0));
    for (const auto& f : o.failures) std::printf("  %s\n", f.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
