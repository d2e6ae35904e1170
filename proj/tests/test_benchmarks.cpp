#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fairdiv/benchmarks.hpp"
#include "fairdiv/catalog.hpp"

using namespace fairdiv;

namespace {

const Manna kSquare = Manna::commodity({1.0, 1.0});

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

struct Expected {
  const char* name;
  double min_max;
  double max_min;
};

// Closed forms on omega = (1,1): Leontief and Cobb-Douglas lose everything
// when one share holds all of one good; CES and the quadratic norm are
// derived from the symmetric witnesses below.
const double kR2 = std::sqrt(2.0);
const Expected kTwo[] = {{"leontief", 0.0, 5.0},     {"cobb_douglas", 0.0, 5.0}, {"ces", 2.5, 5.0},
                         {"linear", 5.0, 5.0},       {"quadratic_norm", 5.0, 5.0 * kR2},
                         {"anti_leontief", 5.0, 10.0}};
const Expected kThree[] = {{"leontief", 0.0, 10.0 / 3},    {"cobb_douglas", 0.0, 10.0 / 3},
                           {"ces", 2.0, 10.0 / 3},         {"linear", 10.0 / 3, 10.0 / 3},
                           {"quadratic_norm", 10.0 / 3, 10.0 * (kR2 - 1.0)},
                           {"anti_leontief", 10.0 / 3, 5.0}};

UtilitySpec catalog_utility(const std::string& name) {
  for (const auto& e : catalog::table_utilities()) {
    if (e.name == name) return e.utility;
  }
  throw std::runtime_error("no catalog entry " + name);
}

}  // namespace

class CatalogBenchmarks : public ::testing::TestWithParam<std::pair<std::size_t, Expected>> {};

TEST_P(CatalogBenchmarks, MatchClosedForms) {
  const auto [n, ex] = GetParam();
  const auto u = catalog_utility(ex.name);
  const auto lo = min_max(u, kSquare, n);
  const auto hi = max_min(u, kSquare, n);
  EXPECT_NEAR(lo.value, ex.min_max, 1e-4);
  EXPECT_NEAR(hi.value, ex.max_min, 1e-4);
  // The witnesses attain the reported values and are partitions.
  EXPECT_NO_THROW(check_partition(kSquare.whole(), lo.witness, n, 1e-7));
  EXPECT_NO_THROW(check_partition(kSquare.whole(), hi.witness, n, 1e-7));
  EXPECT_NEAR(best_of(u, lo.witness), lo.value, 1e-9);
  EXPECT_NEAR(worst_of(u, hi.witness), hi.value, 1e-9);
}

TEST_P(CatalogBenchmarks, BracketedByBruteForceGrid) {
  const auto [n, ex] = GetParam();
  const auto u = catalog_utility(ex.name);
  // A coarse lattice restricts the partitions, so it over-estimates minMax
  // and under-estimates Maxmin.
  const auto [grid_lo, grid_hi] = brute_force_oracle(u, kSquare, n, n == 2 ? 0.02 : 0.05);
  EXPECT_LE(min_max(u, kSquare, n).value, grid_lo + 1e-9);
  EXPECT_GE(max_min(u, kSquare, n).value, grid_hi - 1e-9);
  EXPECT_NEAR(grid_lo, ex.min_max, 0.35);
  EXPECT_NEAR(grid_hi, ex.max_min, 0.35);
}

std::vector<std::pair<std::size_t, Expected>> catalog_cases() {
  std::vector<std::pair<std::size_t, Expected>> out;
  for (const auto& e : kTwo) out.emplace_back(2, e);
  for (const auto& e : kThree) out.emplace_back(3, e);
  return out;
}

INSTANTIATE_TEST_SUITE_P(Table, CatalogBenchmarks, ::testing::ValuesIn(catalog_cases()),
                         [](const auto& info) {
                           return std::string(info.param.second.name) + "_n" + std::to_string(info.param.first);
                         });

TEST(Witness, CesThreeAgentsAtFourFifths) {
  const auto u = catalog_utility("ces");
  const double x = 0.8;
  Partition p{{Share(Bundle{x, 0.0}), Share(Bundle{0.0, x}), Share(Bundle{1.0 - x, 1.0 - x})}};
  EXPECT_NEAR(best_of(u, p), 2.0, 1e-12);
  EXPECT_NEAR(worst_of(u, p), 2.0, 1e-12);
  EXPECT_NEAR(min_max(u, kSquare, 3).value, best_of(u, p), 1e-4);
}

TEST(Witness, QuadraticThreeAgentsAtTwoMinusRootTwo) {
  const auto u = catalog_utility("quadratic_norm");
  const double x = 2.0 - kR2;
  Partition p{{Share(Bundle{x, 0.0}), Share(Bundle{0.0, x}), Share(Bundle{1.0 - x, 1.0 - x})}};
  EXPECT_NEAR(worst_of(u, p), 10.0 * (kR2 - 1.0), 1e-12);
  EXPECT_NEAR(best_of(u, p), 10.0 * (kR2 - 1.0), 1e-12);
  EXPECT_NEAR(max_min(u, kSquare, 3).value, worst_of(u, p), 1e-4);
}

TEST(SingleCommodity, AnnAndBob) {
  const Manna m = Manna::commodity({10.0});
  const auto ann = UtilitySpec::polynomial({0, 12, -1});
  const auto bob = UtilitySpec::polynomial({0, -6, 1});
  EXPECT_NEAR(min_max(ann, m, 2).value, 20.0, 1e-6);
  EXPECT_NEAR(max_min(ann, m, 2).value, 35.0, 1e-6);
  EXPECT_NEAR(min_max(bob, m, 2).value, -5.0, 1e-6);
  EXPECT_NEAR(max_min(bob, m, 2).value, 0.0, 1e-6);
  // {0,10} leaves Ann at most 20: u_A(10) = 20 and u_A(0) = 0.
  EXPECT_NEAR(best_of(ann, min_max(ann, m, 2).witness), 20.0, 1e-6);
  EXPECT_NEAR(equal_split(ann, m, 2), 35.0, 1e-12);
  EXPECT_NEAR(equal_split(bob, m, 2), -5.0, 1e-12);
}

TEST(SingleCommodity, PeakedThreeWay) {
  // x(12-x) on [0,10]: splitting into thirds gives 10/3 (12 - 10/3) each.
  const Manna m = Manna::commodity({10.0});
  const auto ann = UtilitySpec::polynomial({0, 12, -1});
  const double third = 10.0 / 3.0 * (12.0 - 10.0 / 3.0);
  EXPECT_NEAR(max_min(ann, m, 3).value, third, 1e-6);
}

TEST(TwoGood, ZeroAndOneForBoth) {
  for (int v : {1, 2}) {
    const auto u = UtilitySpec::piecewise_two_good(v);
    EXPECT_NEAR(min_max(u, kSquare, 2).value, 0.0, 1e-3) << v;
    EXPECT_NEAR(max_min(u, kSquare, 2).value, 1.0, 1e-3) << v;
  }
}

TEST(TwoGood, NoDivisionGivesBothAgentsPositiveUtility) {
  const auto u1 = UtilitySpec::piecewise_two_good(1);
  const auto u2 = UtilitySpec::piecewise_two_good(2);
  const int m = 200;
  double worst_pair = -1e300;
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      const Bundle z{static_cast<double>(i) / m, static_cast<double>(j) / m};
      const Bundle rest{1.0 - z[0], 1.0 - z[1]};
      worst_pair = std::max(worst_pair, std::min(eval_utility(u1, z), eval_utility(u2, rest)));
    }
  }
  EXPECT_NEAR(worst_pair, 0.0, 1e-12);
}

TEST(Additive, MinMaxEqualsMaxminEqualsProportional) {
  const Manna m = Manna::commodity({1.0, 2.0});
  const auto u = UtilitySpec::linear(3.0, {1.0, 2.0});
  const double total = eval_utility(u, m.whole());
  for (std::size_t n : {2u, 3u, 4u}) {
    EXPECT_NEAR(min_max(u, m, n).value, total / n, 1e-9);
    EXPECT_NEAR(max_min(u, m, n).value, total / n, 1e-9);
  }
  const auto cake = UtilitySpec::density_utility(Density::piecewise({0.0, 0.3, 1.0}, {3.0, 1.0}));
  const double cake_total = eval_utility(cake, Manna::knife().whole());
  for (std::size_t n : {2u, 3u}) {
    EXPECT_NEAR(min_max(cake, Manna::knife(), n).value, cake_total / n, 1e-9);
    EXPECT_NEAR(max_min(cake, Manna::knife(), n).value, cake_total / n, 1e-9);
  }
}

TEST(Knife, SegmentUtilitiesAreUnsupported) {
  try {
    min_max(UtilitySpec::segment("(b-a)*(b-a)"), Manna::knife(), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unsupported);
  }
}

TEST(Equipartition, MonotoneCutsAreEqual) {
  const auto u = catalog_utility("cobb_douglas");
  for (std::size_t n : {2u, 3u, 4u}) {
    const auto e = equipartition(u, default_path(kSquare), n);
    ASSERT_EQ(e.shares.size(), n);
    EXPECT_LE(e.spread, 1e-6);
    for (const auto& s : e.shares.shares) EXPECT_NEAR(eval_utility(u, s), e.common_value, 1e-6);
    EXPECT_NO_THROW(check_partition(kSquare.whole(), e.shares, n, 1e-9));
  }
}

TEST(Equipartition, SinglePeakedAlongLine) {
  const Manna m = Manna::commodity({10.0});
  const auto ann = UtilitySpec::polynomial({0, 12, -1});
  const auto e = equipartition(ann, default_path(m), 2);
  EXPECT_NEAR(e.common_value, 35.0, 1e-6);
  EXPECT_NEAR(e.cuts[1], 0.5, 1e-6);
}

TEST(Equipartition, KnifeDensity) {
  const auto u = UtilitySpec::density_utility(Density::polynomial({0.0, 2.0}));
  const auto e = equipartition(u, default_path(Manna::knife()), 2);
  EXPECT_NEAR(e.common_value, 0.5, 1e-6);
  EXPECT_NEAR(e.cuts[1], std::sqrt(0.5), 1e-6);
}

TEST(Equipartition, DeterministicForFixedSeed) {
  const Manna m = Manna::commodity({10.0});
  const auto bob = UtilitySpec::polynomial({0, -6, 1});
  EquipartitionOptions o;
  o.seed = 7;
  const auto a = equipartition(bob, default_path(m), 2, o);
  const auto b = equipartition(bob, default_path(m), 2, o);
  EXPECT_EQ(a.cuts, b.cuts);
  EXPECT_LE(a.spread, 1e-6);
}

TEST(EqualSplit, IsUtilityOfOmegaOverN) {
  EXPECT_NEAR(equal_split(catalog_utility("cobb_douglas"), kSquare, 3), 10.0 / 3, 1e-12);
  EXPECT_NEAR(equal_split(catalog_utility("ces"), kSquare, 2), 5.0, 1e-12);
}
