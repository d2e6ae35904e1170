#include <gtest/gtest.h>

#include <cmath>

#include "fairdiv/benchmarks.hpp"
#include "fairdiv/catalog.hpp"
#include "fairdiv/guarantees.hpp"

using namespace fairdiv;

namespace {

const Manna kSquare = Manna::commodity({1.0, 1.0});
const MeasureSpec kEqual = MeasureSpec::uniform(kSquare);
const double kR2 = std::sqrt(2.0);

UtilitySpec entry(const std::string& name) {
  for (const auto& e : catalog::table_utilities()) {
    if (e.name == name) return e.utility;
  }
  throw std::runtime_error(name);
}

struct Case {
  const char* name;
  std::size_t n;
  double gamma;
  double first_bid;
};

// Bid & Choose at equal prices. Each value solves the two-step balance
// "best share of size t = what is left after the worst removal", e.g. for
// Leontief n=2: 10t = 10(1-2t); for n=3 the last two steps balance first.
const Case kCases[] = {
    {"leontief", 2, 10.0 / 3.0, 1.0 / 3.0},
    {"cobb_douglas", 2, 10.0 * (kR2 - 1.0), -1},
    {"ces", 2, 40.0 / 9.0, -1},
    {"linear", 2, 5.0, 0.5},
    {"quadratic_norm", 2, 10.0 * (2.0 - kR2), kR2 - 1.0},
    {"anti_leontief", 2, 20.0 / 3.0, 1.0 / 3.0},
    {"leontief", 3, 2.0, 0.2},
    {"cobb_douglas", 3, 10.0 * (std::sqrt(5.0) - 2.0), -1},
    {"ces", 3, 2.5, -1},
    {"linear", 3, 10.0 / 3.0, 1.0 / 3.0},
    {"quadratic_norm", 3, 10.0 * (kR2 - 1.0), 1.0 - kR2 / 2.0},
    {"anti_leontief", 3, 5.0, -1},
};

}  // namespace

TEST(UKappa, SegmentsAlongTheDiagonal) {
  const auto path = default_path(kSquare);
  EXPECT_NEAR(u_kappa(entry("linear"), path, 0.0, 0.5), 5.0, 1e-12);
  EXPECT_NEAR(u_kappa(entry("leontief"), path, 0.25, 0.75), 5.0, 1e-12);
  EXPECT_EQ(u_kappa(entry("ces"), path, 0.4, 0.4), 0.0);
  EXPECT_THROW(u_kappa(entry("ces"), path, 0.4, 1.2), Error);
}

TEST(UTheta, ClosedForms) {
  const auto lin = entry("linear");
  EXPECT_NEAR(u_theta(lin, kEqual, kSquare, 0.2, 0.7), 5.0, 1e-6);
  EXPECT_NEAR(u_theta(lin, kEqual, kSquare, 0.3, 0.3), 0.0, 1e-9);
  const auto leo = entry("leontief");
  for (double t : {0.1, 0.25, 0.4, 0.5}) EXPECT_NEAR(u_theta(leo, kEqual, kSquare, 0.0, t), 10.0 * t, 1e-6) << t;
}

TEST(UTheta, MonotoneInBothTimes) {
  const auto u = entry("cobb_douglas");
  const int m = 20;
  std::vector<std::vector<double>> w(m + 1, std::vector<double>(m + 1, 0.0));
  for (int i = 0; i <= m; ++i) {
    for (int j = i; j <= m; ++j) w[i][j] = u_theta(u, kEqual, kSquare, double(i) / m, double(j) / m);
  }
  for (int i = 0; i <= m; ++i) {
    for (int j = i; j <= m; ++j) {
      if (j + 1 <= m) EXPECT_LE(w[i][j], w[i][j + 1] + 1e-7) << i << "," << j;
      if (i + 1 <= j) EXPECT_GE(w[i][j], w[i + 1][j] - 1e-7) << i << "," << j;
    }
  }
}

TEST(UTheta, RejectsNonMonotoneUtilities) {
  try {
    u_theta(UtilitySpec::polynomial({0, 12, -1}), MeasureSpec::uniform(Manna::commodity({10.0})),
            Manna::commodity({10.0}), 0.1, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotone);
  }
}

class BidAndChooseTable : public ::testing::TestWithParam<Case> {};

TEST_P(BidAndChooseTable, EqualizedValue) {
  const Case c = GetParam();
  const auto u = entry(c.name);
  const auto r = gamma_theta(u, kSquare, kEqual, c.n);
  EXPECT_NEAR(r.value, c.gamma, 1e-4);
  if (c.first_bid >= 0) EXPECT_NEAR(r.schedule.times[1], c.first_bid, 1e-4);
  ASSERT_EQ(r.schedule.times.size(), c.n + 1);
  EXPECT_EQ(r.schedule.times.front(), 0.0);
  EXPECT_EQ(r.schedule.times.back(), 1.0);
  for (std::size_t k = 0; k < c.n; ++k) EXPECT_LT(r.schedule.times[k], r.schedule.times[k + 1]);
  EXPECT_LE(r.spread, 1e-6);
  for (double w : r.step_utilities) EXPECT_NEAR(w, r.value, 1e-6);

  // Greedy best shares never fall below the guarantee and reach it; the
  // reverse sequence never rises above it and reaches it.
  const auto best = best_share_sequence(u, kSquare, kEqual, r.schedule);
  const auto worst = worst_remainder_sequence(u, kSquare, kEqual, r.schedule);
  EXPECT_NO_THROW(check_partition(kSquare.whole(), best, c.n, 1e-7));
  EXPECT_NO_THROW(check_partition(kSquare.whole(), worst, c.n, 1e-7));
  double lo = 1e300, hi = -1e300;
  for (const auto& s : best.shares) lo = std::min(lo, eval_utility(u, s));
  for (const auto& s : worst.shares) hi = std::max(hi, eval_utility(u, s));
  EXPECT_NEAR(lo, r.value, 1e-5);
  EXPECT_NEAR(hi, r.value, 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Catalog, BidAndChooseTable, ::testing::ValuesIn(kCases), [](const auto& info) {
  return std::string(info.param.name) + "_n" + std::to_string(info.param.n);
});

TEST(TwoAgents, EqualizationMatchesDirectBisection) {
  for (const auto& e : catalog::table_utilities()) {
    const auto eq = gamma_theta(e.utility, kSquare, kEqual, 2);
    const auto [value, t] = gamma_theta_two_agents(e.utility, kSquare, kEqual);
    EXPECT_NEAR(eq.value, value, 1e-6) << e.name;
    EXPECT_NEAR(eq.schedule.times[1], t, 1e-4) << e.name;
  }
}

TEST(TwoAgents, DirectBisectionWithUnequalPrices) {
  const auto theta = MeasureSpec::price({1.0, 3.0}, kSquare);
  for (const char* name : {"leontief", "ces", "anti_leontief"}) {
    const auto u = entry(name);
    EXPECT_NEAR(gamma_theta(u, kSquare, theta, 2).value, gamma_theta_two_agents(u, kSquare, theta).first, 1e-6)
        << name;
  }
}

TEST(MovingKnife, DiagonalGivesEqualSplit) {
  for (const auto& e : catalog::table_utilities()) {
    for (std::size_t n : {2u, 3u}) {
      EXPECT_NEAR(gamma_kappa(e.utility, kSquare, default_path(kSquare), n).value,
                  equal_split(e.utility, kSquare, n), 1e-6)
          << e.name << " " << n;
    }
  }
}

TEST(MovingKnife, SinglePeakedOnTenUnits) {
  const Manna m = Manna::commodity({10.0});
  const auto r = gamma_kappa(UtilitySpec::polynomial({0, 12, -1}), m, default_path(m), 2);
  EXPECT_NEAR(r.value, 35.0, 1e-6);
  EXPECT_NEAR(r.schedule.times[1], 0.5, 1e-6);
}

TEST(MovingKnife, BentPathChangesTheGuarantee) {
  // All of good 1 first, then good 2: Leontief segments hold at most one
  // good until the knife passes the corner, so the first share is worth 0.
  const auto path = KnifePath::through({{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}});
  EXPECT_NEAR(gamma_kappa(entry("leontief"), kSquare, path, 2).value, 0.0, 1e-9);
  EXPECT_NEAR(gamma_kappa(entry("linear"), kSquare, path, 2).value, 5.0, 1e-6);
}

TEST(Knife, AdditiveDensities) {
  const Manna cake = Manna::knife();
  const auto u = UtilitySpec::density_utility(Density::piecewise({0.0, 0.3, 1.0}, {3.0, 1.0}));
  const double total = eval_utility(u, cake.whole());
  for (std::size_t n : {2u, 3u}) {
    EXPECT_NEAR(gamma_kappa(u, cake, default_path(cake), n).value, total / n, 1e-6);
    EXPECT_NEAR(gamma_theta(u, cake, MeasureSpec::lebesgue(), n).value, total / n, 1e-6);
  }
}

TEST(Knife, IndirectUtilityTakesDensestRegion) {
  // f = 3 on [0,0.3], 1 after: the best measure-0.2 share lies inside the
  // dense part unless the adversary removed it first.
  const auto u = UtilitySpec::density_utility(Density::piecewise({0.0, 0.3, 1.0}, {3.0, 1.0}));
  const auto theta = MeasureSpec::lebesgue();
  EXPECT_NEAR(u_theta(u, theta, Manna::knife(), 0.0, 0.2), 0.6, 1e-9);
  EXPECT_NEAR(u_theta(u, theta, Manna::knife(), 0.3, 0.5), 0.2, 1e-9);
  EXPECT_NEAR(u_theta(u, theta, Manna::knife(), 0.2, 0.4), 0.1 * 3 + 0.1, 1e-9);
}

TEST(Antisymmetry, NegatedUtilities) {
  struct Ex {
    const char* name;
    ClockRule rule;
    double value;
  };
  const Ex examples[] = {{"leontief", ClockRule::bid_and_choose(kEqual), -10.0 / 3.0},
                         {"linear", ClockRule::moving_knife(default_path(kSquare)), -5.0},
                         {"quadratic_norm", ClockRule::bid_and_choose(kEqual), -(20.0 - 10.0 * kR2)}};
  for (const auto& ex : examples) {
    double lhs = 0, rhs = 0;
    EXPECT_TRUE(antisymmetry_check(entry(ex.name), kSquare, ex.rule, {}, &lhs, &rhs)) << ex.name;
    EXPECT_NEAR(lhs, ex.value, 1e-5) << ex.name;
    EXPECT_NEAR(guarantee(entry(ex.name).negated(), kSquare, ex.rule, 2).value, ex.value, 1e-5) << ex.name;
  }
}

TEST(Decreasing, ThreeAgentsRunTheirOwnEqualization) {
  const auto bad = entry("leontief").negated();
  const auto r = gamma_theta(bad, kSquare, kEqual, 3);
  EXPECT_FALSE(r.via_antisymmetry);
  EXPECT_LE(r.spread, 1e-6);
  EXPECT_LE(r.value, max_min(bad, kSquare, 3).value + 1e-6);
  EXPECT_GE(r.value, min_max(bad, kSquare, 3).value - 1e-6);
}

TEST(Guarantee, RejectsMixedSigns) {
  try {
    gamma_theta(UtilitySpec::expression("x - y", 2), kSquare, kEqual, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotone);
  }
}
