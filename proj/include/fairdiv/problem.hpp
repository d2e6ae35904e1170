#pragma once

// A fair-division problem: manna, named agents with utilities, a benchmark
// measure for Bid & Choose, a knife path for Moving Knife, and a Divider
// ordering for Divide & Choose.

#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fairdiv/errors.hpp"
#include "fairdiv/model.hpp"

namespace fairdiv {

struct Agent {
  std::string name;
  UtilitySpec utility;
};

struct Problem {
  Manna manna = Manna::commodity({1.0});
  std::vector<Agent> agents;
  std::optional<MeasureSpec> measure_spec;
  std::optional<KnifePath> path_spec;
  std::vector<std::size_t> ordering;  // empty means agent index order

  std::size_t n() const { return agents.size(); }

  MeasureSpec measure() const { return measure_spec ? *measure_spec : MeasureSpec::uniform(manna); }
  KnifePath path() const { return path_spec ? *path_spec : default_path(manna); }

  std::vector<std::size_t> order() const {
    if (!ordering.empty()) return ordering;
    std::vector<std::size_t> out(agents.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }

  void validate() const {
    if (agents.empty()) throw Error(ErrorCode::InvalidSpec, "problem needs at least one agent");
    for (const auto& a : agents) {
      if (a.utility.manna_kind() != manna.kind()) {
        throw Error(ErrorCode::ShapeMismatch, "utility of agent '" + a.name + "' does not fit the manna");
      }
    }
    if (!ordering.empty()) {
      std::vector<bool> seen(agents.size(), false);
      if (ordering.size() != agents.size()) throw Error(ErrorCode::InvalidSpec, "ordering must list every agent once");
      for (std::size_t i : ordering) {
        if (i >= agents.size() || seen[i]) throw Error(ErrorCode::InvalidSpec, "ordering must list every agent once");
        seen[i] = true;
      }
    }
    if (measure_spec && measure_spec->kind() != manna.kind()) {
      throw Error(ErrorCode::ShapeMismatch, "measure does not fit the manna");
    }
    if (path_spec && path_spec->kind() != manna.kind()) {
      throw Error(ErrorCode::ShapeMismatch, "knife path does not fit the manna");
    }
  }
};

}  // namespace fairdiv
