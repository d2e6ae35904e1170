#pragma once

// The six two-good utilities of the comparison tables and the table
// computation: minMax, Bid & Choose at equal prices, Equal Split, Maxmin.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fairdiv/benchmarks.hpp"
#include "fairdiv/guarantees.hpp"
#include "fairdiv/model.hpp"

namespace fairdiv::catalog {

struct Entry {
  std::string name;
  std::string formula;
  UtilitySpec utility;
};

inline std::vector<Entry> table_utilities() {
  return {
      {"leontief", "10min{x,y}", UtilitySpec::leontief(10.0)},
      {"cobb_douglas", "10sqrt(xy)", UtilitySpec::cobb_douglas(10.0)},
      {"ces", "2.5(sqrt(x)+sqrt(y))^2", UtilitySpec::ces(2.5, 0.5)},
      {"linear", "5(x+y)", UtilitySpec::linear(5.0)},
      {"quadratic_norm", "5sqrt(2(x^2+y^2))", UtilitySpec::quadratic_norm(5.0, {2.0, 2.0})},
      {"anti_leontief", "10max{x,y}", UtilitySpec::anti_leontief(10.0)},
  };
}

inline Manna table_manna() { return Manna::commodity({1.0, 1.0}); }

struct Row {
  std::string name;
  std::string formula;
  double min_max = 0.0;
  double gamma_p = 0.0;
  double equal_split = 0.0;
  double max_min = 0.0;
  double bid = 0.0;  // first bid t1 of the equalized schedule
  Partition min_max_witness;
  Partition max_min_witness;
};

inline Row table_row(const Entry& e, std::size_t n, const BenchmarkOptions& bopts = {},
                     const GuaranteeOptions& gopts = {}) {
  const Manna m = table_manna();
  Row r;
  r.name = e.name;
  r.formula = e.formula;
  auto lo = min_max(e.utility, m, n, bopts);
  auto hi = max_min(e.utility, m, n, bopts);
  r.min_max = lo.value;
  r.max_min = hi.value;
  r.min_max_witness = lo.witness;
  r.max_min_witness = hi.witness;
  r.equal_split = equal_split(e.utility, m, n);
  auto g = gamma_theta(e.utility, m, MeasureSpec::uniform(m), n, gopts);
  r.gamma_p = g.value;
  r.bid = g.schedule.times.at(1);
  return r;
}

inline std::vector<Row> table(std::size_t n, const BenchmarkOptions& bopts = {}, const GuaranteeOptions& gopts = {}) {
  std::vector<Row> rows;
  for (const auto& e : table_utilities()) rows.push_back(table_row(e, n, bopts, gopts));
  return rows;
}

/// One decimal, integers without a decimal point ("3.3", "5").
inline std::string round1(double v) {
  double r = std::round(v * 10.0) / 10.0;
  if (r == 0.0) r = 0.0;  // no "-0"
  char buf[32];
  if (r == std::round(r)) std::snprintf(buf, sizeof buf, "%.0f", r);
  else std::snprintf(buf, sizeof buf, "%.1f", r);
  return buf;
}

inline std::string rounded_csv(const std::vector<Row>& rows) {
  std::string out = "utility,minMax,Gamma_p,equal_split,Maxmin\n";
  for (const auto& r : rows) {
    out += r.name + "," + round1(r.min_max) + "," + round1(r.gamma_p) + "," + round1(r.equal_split) + "," +
           round1(r.max_min) + "\n";
  }
  return out;
}

}  // namespace fairdiv::catalog
