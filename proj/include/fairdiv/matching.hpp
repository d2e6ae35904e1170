#pragma once

// Largest properly matchable agent set for Divide & Choose.
//
// Agents report which shares they like; the Divider likes every share. A
// maximum matching plus alternating-path reachability from unmatched agents
// splits agents into M+ (reachable) and M* (the rest). M* can be matched to
// shares nobody in M+ likes, and no larger agent set can be served that way.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairdiv/errors.hpp"

namespace fairdiv {

struct BipartiteGraph {
  std::size_t n = 0;                    // agents and shares
  std::vector<std::vector<bool>> likes; // likes[agent][share]
  std::size_t divider = 0;

  static BipartiteGraph from_lists(const std::vector<std::vector<std::size_t>>& liked, std::size_t divider = 0) {
    BipartiteGraph g;
    g.n = liked.size();
    g.divider = divider;
    g.likes.assign(g.n, std::vector<bool>(g.n, false));
    for (std::size_t i = 0; i < g.n; ++i) {
      for (std::size_t r : liked[i]) {
        if (r >= g.n) throw Error(ErrorCode::InvariantViolation, "share index out of range");
        g.likes[i][r] = true;
      }
    }
    return g;
  }

  std::vector<std::size_t> liked_by(std::size_t agent) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < n; ++r) {
      if (likes[agent][r]) out.push_back(r);
    }
    return out;
  }

  void validate() const {
    if (likes.size() != n) throw Error(ErrorCode::InvariantViolation, "graph needs as many agents as shares");
    if (divider >= n) throw Error(ErrorCode::InvariantViolation, "divider index out of range");
    for (std::size_t i = 0; i < n; ++i) {
      if (likes[i].size() != n) throw Error(ErrorCode::InvariantViolation, "graph needs as many agents as shares");
      if (std::none_of(likes[i].begin(), likes[i].end(), [](bool b) { return b; })) {
        throw Error(ErrorCode::InvariantViolation, "agent " + std::to_string(i) + " likes no share");
      }
    }
    if (!std::all_of(likes[divider].begin(), likes[divider].end(), [](bool b) { return b; })) {
      throw Error(ErrorCode::InvariantViolation, "the divider must like every share");
    }
  }
};

/// Maximum-cardinality matching by augmenting paths, agents and shares in
/// index order. Entry i is the share of agent i, or nullopt.
inline std::vector<std::optional<std::size_t>> max_matching(const BipartiteGraph& g) {
  std::vector<std::optional<std::size_t>> of_agent(g.n), of_share(g.n);
  std::vector<bool> seen;
  auto augment = [&](auto&& self, std::size_t i) -> bool {
    for (std::size_t r = 0; r < g.n; ++r) {
      if (!g.likes[i][r] || seen[r]) continue;
      seen[r] = true;
      if (!of_share[r] || self(self, *of_share[r])) {
        of_share[r] = i;
        of_agent[i] = r;
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < g.n; ++i) {
    seen.assign(g.n, false);
    augment(augment, i);
  }
  return of_agent;
}

inline std::size_t matching_size(const std::vector<std::optional<std::size_t>>& m) {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](const auto& x) { return x.has_value(); }));
}

struct ProperMatch {
  std::vector<std::size_t> matched_agents;                       // M*, ascending
  std::vector<std::pair<std::size_t, std::size_t>> assignment;   // (agent, share) for M*
  std::vector<std::size_t> plus_agents;                          // M+
  std::vector<std::size_t> plus_shares;                          // R+
  std::vector<std::size_t> unassigned_shares;                    // R \ assigned, ascending

  std::optional<std::size_t> share_of(std::size_t agent) const {
    for (const auto& [a, r] : assignment) {
      if (a == agent) return r;
    }
    return std::nullopt;
  }
};

namespace detail {

/// Whether `agents` can be matched into `shares` using only liked pairs.
inline bool perfectly_matchable(const BipartiteGraph& g, const std::vector<std::size_t>& agents,
                                const std::vector<std::size_t>& shares) {
  BipartiteGraph sub;
  sub.n = std::max(agents.size(), shares.size());
  sub.likes.assign(sub.n, std::vector<bool>(sub.n, false));
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = 0; j < shares.size(); ++j) sub.likes[i][j] = g.likes[agents[i]][shares[j]];
  }
  return matching_size(max_matching(sub)) >= agents.size();
}

}  // namespace detail

inline ProperMatch proper_match(const BipartiteGraph& g) {
  g.validate();
  const auto of_agent = max_matching(g);
  std::vector<std::optional<std::size_t>> of_share(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (of_agent[i]) of_share[*of_agent[i]] = i;
  }

  // Alternating reachability: unmatched agent -> liked share -> its partner.
  std::vector<bool> agent_plus(g.n, false), share_plus(g.n, false);
  std::vector<std::size_t> queue;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!of_agent[i]) {
      agent_plus[i] = true;
      queue.push_back(i);
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t i = queue[head];
    for (std::size_t r = 0; r < g.n; ++r) {
      if (!g.likes[i][r] || share_plus[r]) continue;
      share_plus[r] = true;
      if (!of_share[r]) throw Error(ErrorCode::InvariantViolation, "matching is not maximum");
      const std::size_t j = *of_share[r];
      if (!agent_plus[j]) {
        agent_plus[j] = true;
        queue.push_back(j);
      }
    }
  }

  ProperMatch pm;
  std::vector<std::size_t> free_shares;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (agent_plus[i]) pm.plus_agents.push_back(i); else pm.matched_agents.push_back(i);
  }
  for (std::size_t r = 0; r < g.n; ++r) {
    if (share_plus[r]) pm.plus_shares.push_back(r); else free_shares.push_back(r);
  }
  if (agent_plus[g.divider]) throw Error(ErrorCode::InvariantViolation, "divider fell outside the matched set");

  // Lexicographic assignment: each agent in order takes the smallest share
  // that leaves the later agents perfectly matchable.
  std::vector<std::size_t> pending = pm.matched_agents;
  std::vector<std::size_t> available = free_shares;
  while (!pending.empty()) {
    const std::size_t agent = pending.front();
    const std::vector<std::size_t> later(pending.begin() + 1, pending.end());
    bool placed = false;
    for (std::size_t idx = 0; idx < available.size(); ++idx) {
      const std::size_t r = available[idx];
      if (!g.likes[agent][r]) continue;
      std::vector<std::size_t> rest = available;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(idx));
      if (detail::perfectly_matchable(g, later, rest)) {
        pm.assignment.emplace_back(agent, r);
        available = std::move(rest);
        placed = true;
        break;
      }
    }
    if (!placed) throw Error(ErrorCode::InvariantViolation, "matched agents cannot be assigned properly");
    pending.erase(pending.begin());
  }
  std::vector<bool> used(g.n, false);
  for (const auto& [a, r] : pm.assignment) used[r] = true;
  for (std::size_t r = 0; r < g.n; ++r) {
    if (!used[r]) pm.unassigned_shares.push_back(r);
  }
  return pm;
}

}  // namespace fairdiv
