#pragma once

// Divide & Choose, Moving Knife and Bid & Choose as deterministic state
// machines driven by agent actions.
//
// The engine owns the protocol state and an event log. Input events
// (division, acceptance, bid, choice) come from agents; the engine appends
// derived events (matching, stop, assign) itself. Replaying the inputs of a
// transcript through a fresh engine reproduces it exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fairdiv/benchmarks.hpp"
#include "fairdiv/errors.hpp"
#include "fairdiv/guarantees.hpp"
#include "fairdiv/io.hpp"
#include "fairdiv/matching.hpp"
#include "fairdiv/model.hpp"
#include "fairdiv/problem.hpp"

namespace fairdiv {

using io::json;

enum class RuleKind { DivideAndChoose, MovingKnife, BidAndChoose };
enum class Direction { Increasing, Decreasing };

inline const char* to_string(RuleKind k) {
  switch (k) {
    case RuleKind::DivideAndChoose: return "dnc";
    case RuleKind::MovingKnife: return "mk";
    case RuleKind::BidAndChoose: return "bnc";
  }
  return "dnc";
}

inline const char* to_string(Direction d) { return d == Direction::Increasing ? "increasing" : "decreasing"; }

struct RuleSpec {
  RuleKind kind = RuleKind::DivideAndChoose;
  Direction direction = Direction::Increasing;

  static RuleSpec dnc() { return {}; }
  static RuleSpec mk(Direction d = Direction::Increasing) { return {RuleKind::MovingKnife, d}; }
  static RuleSpec bnc(Direction d = Direction::Increasing) { return {RuleKind::BidAndChoose, d}; }

  bool is_clock() const { return kind != RuleKind::DivideAndChoose; }

  /// Clock rule over the problem's knife path or measure.
  ClockRule clock(const Problem& p) const {
    return kind == RuleKind::MovingKnife ? ClockRule::moving_knife(p.path()) : ClockRule::bid_and_choose(p.measure());
  }
};

/// Direction shared by every agent's utility; NonMonotone when they differ.
inline Direction infer_direction(const Problem& p) {
  bool inc = true, dec = true;
  for (const auto& a : p.agents) {
    inc = inc && a.utility.monotone == Monotonicity::Increasing;
    dec = dec && a.utility.monotone == Monotonicity::Decreasing;
  }
  if (inc) return Direction::Increasing;
  if (dec) return Direction::Decreasing;
  throw Error(ErrorCode::NonMonotone, "clock rules need all utilities increasing or all decreasing");
}

inline RuleSpec rule_from_name(const std::string& name, const Problem& p) {
  if (name == "dnc") return RuleSpec::dnc();
  if (name == "mk") return RuleSpec::mk(infer_direction(p));
  if (name == "bnc") return RuleSpec::bnc(infer_direction(p));
  throw Error(ErrorCode::InvalidSpec, "rule must be dnc, mk or bnc");
}

enum class Phase { AwaitDivision, AwaitAcceptances, AwaitBids, AwaitShareChoice, Done };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::AwaitDivision: return "AwaitDivision";
    case Phase::AwaitAcceptances: return "AwaitAcceptances";
    case Phase::AwaitBids: return "AwaitBids";
    case Phase::AwaitShareChoice: return "AwaitShareChoice";
    case Phase::Done: return "Done";
  }
  return "Done";
}

struct Action {
  enum class Kind { Divide, Accept, Bid, Choose };
  Kind kind = Kind::Bid;
  std::size_t agent = 0;
  Partition partition;
  std::vector<std::size_t> accepted;
  double time = 0.0;
  Share share;

  static Action divide(std::size_t agent, Partition p) {
    Action a;
    a.kind = Kind::Divide;
    a.agent = agent;
    a.partition = std::move(p);
    return a;
  }
  static Action accept(std::size_t agent, std::vector<std::size_t> shares) {
    Action a;
    a.kind = Kind::Accept;
    a.agent = agent;
    a.accepted = std::move(shares);
    return a;
  }
  static Action bid(std::size_t agent, double t) {
    Action a;
    a.kind = Kind::Bid;
    a.agent = agent;
    a.time = t;
    return a;
  }
  static Action choose(std::size_t agent, Share s) {
    Action a;
    a.kind = Kind::Choose;
    a.agent = agent;
    a.share = std::move(s);
    return a;
  }
};

struct EngineOptions {
  /// An empty acceptance set takes the best offered share instead of failing.
  bool force_best_on_empty = false;
  /// Clock ties go to the earliest agent in this list; empty means index order.
  std::vector<std::size_t> tie_priority;
  double budget_tol = 1e-6;
  /// Log each remaining agent's Maxmin on the remaining manna after a D&C step.
  bool log_local_maxmin = false;
};

inline json to_json(const EngineOptions& o) {
  json j = {{"force_best_on_empty", o.force_best_on_empty}, {"budget_tol", o.budget_tol},
            {"log_local_maxmin", o.log_local_maxmin}};
  if (!o.tie_priority.empty()) j["tie_priority"] = o.tie_priority;
  return j;
}

inline json to_json(const RuleSpec& r) { return {{"kind", to_string(r.kind)}, {"direction", to_string(r.direction)}}; }

class Engine {
 public:
  Engine(Problem problem, RuleSpec rule, EngineOptions options = {})
      : problem_(std::move(problem)), rule_(rule), options_(std::move(options)) {
    problem_.validate();
    if (rule_.is_clock()) {
      for (const auto& a : problem_.agents) {
        const auto want = rule_.direction == Direction::Increasing ? Monotonicity::Increasing : Monotonicity::Decreasing;
        if (a.utility.monotone != want) {
          throw Error(ErrorCode::NonMonotone, "agent '" + a.name + "' does not have a " + to_string(rule_.direction) +
                                                  " utility");
        }
      }
      if (rule_.kind == RuleKind::BidAndChoose && problem_.manna.kind() == MannaKind::Commodity &&
          problem_.measure().has_zero_price()) {
        warnings_.push_back("measure has a zero price; it is not strictly increasing");
      }
    }
    const std::size_t n = problem_.n();
    if (options_.tie_priority.empty()) {
      for (std::size_t i = 0; i < n; ++i) options_.tie_priority.push_back(i);
    }
    allocation_.assign(n, std::nullopt);
    remaining_ = problem_.manna.whole();
    active_ = problem_.order();
    begin_step();
  }

  const Problem& problem() const { return problem_; }
  const RuleSpec& rule() const { return rule_; }
  const EngineOptions& options() const { return options_; }
  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::Done; }
  std::size_t step() const { return step_; }
  const Share& remaining() const { return remaining_; }
  const std::vector<std::size_t>& active() const { return active_; }
  double last_stop() const { return t_prev_; }
  std::optional<std::size_t> divider() const { return divider_; }
  std::optional<std::size_t> winner() const { return winner_; }
  double budget() const { return budget_; }
  const Partition& offered() const { return offered_; }
  const std::vector<std::optional<Share>>& allocation() const { return allocation_; }
  const std::vector<json>& events() const { return events_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Agents whose action the current phase still waits for.
  std::vector<std::size_t> awaiting() const {
    switch (phase_) {
      case Phase::AwaitDivision: return {*divider_};
      case Phase::AwaitAcceptances:
      case Phase::AwaitBids: {
        std::vector<std::size_t> out;
        for (std::size_t i : active_) {
          if (phase_ == Phase::AwaitAcceptances && i == *divider_) continue;
          if (!submitted_.count(i)) out.push_back(i);
        }
        return out;
      }
      case Phase::AwaitShareChoice: return {*winner_};
      case Phase::Done: return {};
    }
    return {};
  }

  bool has_submitted(std::size_t agent) const { return submitted_.count(agent) > 0; }

  void apply(const Action& a) {
    if (a.agent >= problem_.n()) throw Error(ErrorCode::InvalidAction, "unknown agent " + std::to_string(a.agent));
    switch (a.kind) {
      case Action::Kind::Divide: on_divide(a); break;
      case Action::Kind::Accept: on_accept(a); break;
      case Action::Kind::Bid: on_bid(a); break;
      case Action::Kind::Choose: on_choose(a); break;
    }
  }

  std::vector<double> utilities() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < problem_.n(); ++i) {
      out.push_back(allocation_[i] ? eval_utility(problem_.agents[i].utility, *allocation_[i]) : 0.0);
    }
    return out;
  }

  json transcript() const {
    json alloc = json::array();
    for (const auto& s : allocation_) alloc.push_back(s ? io::to_json(*s) : json(nullptr));
    json j = {{"v", io::kSchemaVersion},
              {"problem", io::to_json(problem_)},
              {"rule", to_json(rule_)},
              {"options", to_json(options_)},
              {"events", events_},
              {"allocation", alloc},
              {"done", done()}};
    if (done()) j["utilities"] = utilities();
    return j;
  }

 private:
  [[noreturn]] void fail(ErrorCode code, const std::string& msg) const {
    throw Error(code, "step " + std::to_string(step_) + " (" + to_string(phase_) + "): " + msg);
  }

  void expect_phase(Phase p) const {
    if (phase_ != p) fail(ErrorCode::WrongPhase, std::string("expected ") + to_string(p));
  }

  bool is_active(std::size_t i) const { return std::find(active_.begin(), active_.end(), i) != active_.end(); }

  void log(json e) {
    e["step"] = step_;
    events_.push_back(std::move(e));
  }

  void assign(std::size_t agent, Share s, const char* reason) {
    log({{"type", "assign"}, {"agent", agent}, {"share", io::to_json(s)}, {"reason", reason}});
    remaining_ = share_difference(remaining_, s);
    allocation_[agent] = std::move(s);
    active_.erase(std::remove(active_.begin(), active_.end(), agent), active_.end());
  }

  void finish_if_single() {
    if (active_.size() == 1) {
      const std::size_t last = active_.front();
      Share rest = remaining_;
      assign(last, std::move(rest), "last");
      remaining_ = problem_.manna.empty_share();
    }
    if (active_.empty()) {
      phase_ = Phase::Done;
      divider_.reset();
      winner_.reset();
    }
  }

  void begin_step() {
    ++step_;
    submitted_.clear();
    acceptances_.clear();
    bids_.clear();
    offered_ = Partition{};
    winner_.reset();
    divider_.reset();
    finish_if_single();
    if (phase_ == Phase::Done) return;
    if (rule_.is_clock()) {
      phase_ = Phase::AwaitBids;
    } else {
      phase_ = Phase::AwaitDivision;
      divider_ = active_.front();
    }
  }

  // -- Divide & Choose --------------------------------------------------------

  void on_divide(const Action& a) {
    expect_phase(Phase::AwaitDivision);
    if (a.agent != *divider_) fail(ErrorCode::NotYourTurn, "only the divider proposes a partition");
    try {
      check_partition(remaining_, a.partition, active_.size());
    } catch (const Error& e) {
      fail(ErrorCode::MalformedPartition, e.message());
    }
    offered_ = a.partition;
    log({{"type", "division"}, {"agent", a.agent}, {"partition", io::to_json(a.partition)}});
    phase_ = Phase::AwaitAcceptances;
  }

  void on_accept(const Action& a) {
    expect_phase(Phase::AwaitAcceptances);
    if (a.agent == *divider_ || !is_active(a.agent)) fail(ErrorCode::NotYourTurn, "agent is not a chooser this step");
    if (submitted_.count(a.agent)) fail(ErrorCode::InvalidAction, "acceptance already submitted");
    std::vector<std::size_t> set = a.accepted;
    std::sort(set.begin(), set.end());
    if (std::adjacent_find(set.begin(), set.end()) != set.end()) fail(ErrorCode::InvalidAction, "duplicate share index");
    for (std::size_t r : set) {
      if (r >= offered_.size()) fail(ErrorCode::InvalidAction, "share index " + std::to_string(r) + " out of range");
    }
    bool forced = false;
    if (set.empty()) {
      if (!options_.force_best_on_empty) fail(ErrorCode::EmptyAcceptance, "an agent must accept at least one share");
      const auto& u = problem_.agents[a.agent].utility;
      std::size_t best = 0;
      for (std::size_t r = 1; r < offered_.size(); ++r) {
        if (eval_utility(u, offered_[r]) > eval_utility(u, offered_[best])) best = r;
      }
      set = {best};
      forced = true;
    }
    json e = {{"type", "acceptance"}, {"agent", a.agent}, {"shares", set}};
    if (forced) e["forced"] = true;
    log(std::move(e));
    acceptances_[a.agent] = std::move(set);
    submitted_.insert(a.agent);
    if (awaiting().empty()) resolve_matching();
  }

  void resolve_matching() {
    // Positions follow the active order; the divider is first.
    const std::size_t m = active_.size();
    std::vector<std::vector<std::size_t>> liked(m);
    for (std::size_t pos = 0; pos < m; ++pos) {
      const std::size_t agent = active_[pos];
      if (agent == *divider_) {
        for (std::size_t r = 0; r < m; ++r) liked[pos].push_back(r);
      } else {
        liked[pos] = acceptances_.at(agent);
      }
    }
    const std::size_t divider_pos = static_cast<std::size_t>(
        std::find(active_.begin(), active_.end(), *divider_) - active_.begin());
    const ProperMatch pm = proper_match(BipartiteGraph::from_lists(liked, divider_pos));
    json assignment = json::array(), plus_agents = json::array(), plus_shares = pm.plus_shares;
    for (const auto& [pos, r] : pm.assignment) assignment.push_back({active_[pos], r});
    for (std::size_t pos : pm.plus_agents) plus_agents.push_back(active_[pos]);
    log({{"type", "matching"}, {"assignment", assignment}, {"plus_agents", plus_agents}, {"plus_shares", plus_shares}});
    const std::vector<std::size_t> snapshot = active_;
    for (const auto& [pos, r] : pm.assignment) assign(snapshot[pos], offered_[r], "matched");
    if (options_.log_local_maxmin) log_local_maxmin();
    begin_step();
  }

  void log_local_maxmin() {
    if (active_.size() < 2 || !remaining_.is_commodity()) return;
    const Bundle& z = remaining_.bundle();
    if (std::any_of(z.begin(), z.end(), [](double x) { return !(x > 0.0); })) return;
    const Manna local = Manna::commodity(z);
    for (std::size_t i : active_) {
      try {
        const double v = max_min(problem_.agents[i].utility, local, active_.size()).value;
        log({{"type", "local_maxmin"}, {"agent", i}, {"value", v}});
      } catch (const Error&) {
        // Informational only.
      }
    }
  }

  // -- Clock rules ------------------------------------------------------------

  void on_bid(const Action& a) {
    expect_phase(Phase::AwaitBids);
    if (!is_active(a.agent)) fail(ErrorCode::NotYourTurn, "agent already left");
    if (submitted_.count(a.agent)) fail(ErrorCode::InvalidAction, "bid already submitted");
    if (!std::isfinite(a.time) || a.time > 1.0) fail(ErrorCode::InvalidAction, "bid must lie in [last stop, 1]");
    if (a.time < t_prev_) {
      fail(ErrorCode::NonIncreasingBid,
           "bid " + std::to_string(a.time) + " is below the last stop time " + std::to_string(t_prev_));
    }
    log({{"type", "bid"}, {"agent", a.agent}, {"time", a.time}});
    bids_[a.agent] = a.time;
    submitted_.insert(a.agent);
    if (awaiting().empty()) resolve_clock();
  }

  void resolve_clock() {
    const bool increasing = rule_.direction == Direction::Increasing;
    double best = increasing ? 2.0 : -1.0;
    for (const auto& [agent, t] : bids_) best = increasing ? std::min(best, t) : std::max(best, t);
    std::vector<std::size_t> tied;
    for (std::size_t i : options_.tie_priority) {
      auto it = bids_.find(i);
      if (it != bids_.end() && it->second == best) tied.push_back(i);
    }
    const std::size_t w = tied.front();
    json e = {{"type", "stop"}, {"winner", w}, {"time", best}};
    if (tied.size() > 1) e["tied"] = tied;
    log(std::move(e));
    if (rule_.kind == RuleKind::MovingKnife) {
      Share seg = problem_.path().segment(t_prev_, best);
      t_prev_ = best;
      assign(w, std::move(seg), "clock");
      begin_step();
      return;
    }
    winner_ = w;
    budget_ = best - t_prev_;
    pending_stop_ = best;
    phase_ = Phase::AwaitShareChoice;
  }

  void on_choose(const Action& a) {
    expect_phase(Phase::AwaitShareChoice);
    if (a.agent != *winner_) fail(ErrorCode::NotYourTurn, "only the clock winner chooses");
    try {
      require_same_kind(a.share, remaining_);
    } catch (const Error& e) {
      fail(ErrorCode::BadBudgetShare, e.message());
    }
    if (!share_within(a.share, remaining_, kFeasibilityTol)) {
      fail(ErrorCode::BadBudgetShare, "chosen share is not inside the remaining manna");
    }
    const double size = problem_.measure()(a.share);
    if (std::abs(size - budget_) > options_.budget_tol) {
      fail(ErrorCode::BadBudgetShare,
           "chosen share has measure " + std::to_string(size) + ", budget is " + std::to_string(budget_));
    }
    log({{"type", "choice"}, {"agent", a.agent}, {"share", io::to_json(a.share)}});
    t_prev_ = pending_stop_;
    assign(a.agent, a.share, "clock");
    begin_step();
  }

  Problem problem_;
  RuleSpec rule_;
  EngineOptions options_;
  Phase phase_ = Phase::AwaitDivision;
  std::size_t step_ = 0;
  Share remaining_;
  std::vector<std::size_t> active_;
  std::vector<std::optional<Share>> allocation_;
  std::optional<std::size_t> divider_, winner_;
  Partition offered_;
  std::map<std::size_t, std::vector<std::size_t>> acceptances_;
  std::map<std::size_t, double> bids_;
  std::set<std::size_t> submitted_;
  double t_prev_ = 0.0;
  double pending_stop_ = 0.0;
  double budget_ = 0.0;
  std::vector<json> events_;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Transcripts and replay

inline Action action_from_event(const json& e, const Manna& manna) {
  const std::string type = e.at("type").get<std::string>();
  const std::size_t agent = e.at("agent").get<std::size_t>();
  if (type == "division") return Action::divide(agent, io::partition_from_json(e.at("partition"), manna));
  if (type == "acceptance") {
    if (e.value("forced", false)) return Action::accept(agent, {});
    return Action::accept(agent, e.at("shares").get<std::vector<std::size_t>>());
  }
  if (type == "bid") return Action::bid(agent, e.at("time").get<double>());
  if (type == "choice") return Action::choose(agent, io::share_from_json(e.at("share"), manna));
  throw Error(ErrorCode::ReplayMismatch, "not an input event: " + type);
}

inline bool is_input_event(const json& e) {
  const std::string t = e.at("type").get<std::string>();
  return t == "division" || t == "acceptance" || t == "bid" || t == "choice";
}

inline json action_to_json(const Action& a) {
  switch (a.kind) {
    case Action::Kind::Divide: return {{"type", "divide"}, {"agent", a.agent}, {"partition", io::to_json(a.partition)}};
    case Action::Kind::Accept: return {{"type", "accept"}, {"agent", a.agent}, {"shares", a.accepted}};
    case Action::Kind::Bid: return {{"type", "bid"}, {"agent", a.agent}, {"time", a.time}};
    case Action::Kind::Choose: return {{"type", "choose"}, {"agent", a.agent}, {"share", io::to_json(a.share)}};
  }
  return {};
}

inline RuleSpec rule_from_json(const json& j) {
  RuleSpec r;
  const std::string k = j.at("kind").get<std::string>();
  if (k == "dnc") r.kind = RuleKind::DivideAndChoose;
  else if (k == "mk") r.kind = RuleKind::MovingKnife;
  else if (k == "bnc") r.kind = RuleKind::BidAndChoose;
  else throw Error(ErrorCode::InvalidSpec, "unknown rule kind '" + k + "'");
  r.direction = j.value("direction", std::string("increasing")) == "decreasing" ? Direction::Decreasing
                                                                               : Direction::Increasing;
  return r;
}

inline EngineOptions options_from_json(const json& j) {
  EngineOptions o;
  o.force_best_on_empty = j.value("force_best_on_empty", false);
  o.budget_tol = j.value("budget_tol", 1e-6);
  o.log_local_maxmin = j.value("log_local_maxmin", false);
  if (j.contains("tie_priority")) o.tie_priority = j["tie_priority"].get<std::vector<std::size_t>>();
  return o;
}

/// Re-runs the input events of `transcript` and checks the result is
/// identical. Returns the rebuilt engine.
inline Engine replay(const json& transcript) {
  if (transcript.value("v", 0) != io::kSchemaVersion) {
    throw Error(ErrorCode::ReplayMismatch, "unsupported transcript schema version");
  }
  Problem problem = io::problem_from_json(transcript.at("problem"));
  Engine engine(std::move(problem), rule_from_json(transcript.at("rule")),
                options_from_json(transcript.value("options", json::object())));
  for (const auto& e : transcript.at("events")) {
    if (is_input_event(e)) engine.apply(action_from_event(e, engine.problem().manna));
  }
  const json again = engine.transcript();
  for (const char* key : {"events", "allocation", "utilities", "done"}) {
    const bool a = transcript.contains(key), b = again.contains(key);
    if (a != b || (a && transcript[key].dump() != again[key].dump())) {
      throw Error(ErrorCode::ReplayMismatch, std::string("replayed transcript differs in '") + key + "'");
    }
  }
  return engine;
}

// ---------------------------------------------------------------------------
// Strategies

/// What an agent sees when asked to act.
struct Observation {
  std::size_t agent = 0;
  std::size_t step = 0;
  std::size_t n = 0;             // agents in the problem
  std::size_t active_count = 0;  // agents still unserved
  Share remaining;
  double last_stop = 0.0;
  Partition offered;
  double budget = 0.0;
};

inline Observation observe(const Engine& e, std::size_t agent) {
  Observation o;
  o.agent = agent;
  o.step = e.step();
  o.n = e.problem().n();
  o.active_count = e.active().size();
  o.remaining = e.remaining();
  o.last_stop = e.last_stop();
  o.offered = e.offered();
  o.budget = e.budget();
  return o;
}

class AgentStrategy {
 public:
  virtual ~AgentStrategy() = default;
  virtual Partition propose_partition(const Observation& obs) = 0;
  virtual std::vector<std::size_t> accept_set(const Observation& obs) = 0;
  virtual double bid(const Observation& obs) = 0;
  virtual Share choose_share(const Observation& obs) = 0;
};

using StrategyPtr = std::shared_ptr<AgentStrategy>;

/// Strategy assembled from callbacks; unset callbacks throw InvalidAction.
class CallbackStrategy : public AgentStrategy {
 public:
  std::function<Partition(const Observation&)> on_propose;
  std::function<std::vector<std::size_t>(const Observation&)> on_accept;
  std::function<double(const Observation&)> on_bid;
  std::function<Share(const Observation&)> on_choose;

  Partition propose_partition(const Observation& o) override { return require(on_propose, "propose")(o); }
  std::vector<std::size_t> accept_set(const Observation& o) override { return require(on_accept, "accept")(o); }
  double bid(const Observation& o) override { return require(on_bid, "bid")(o); }
  Share choose_share(const Observation& o) override { return require(on_choose, "choose")(o); }

 private:
  template <typename F>
  static F& require(F& f, const char* what) {
    if (!f) throw Error(ErrorCode::InvalidAction, std::string("strategy has no ") + what + " callback");
    return f;
  }
};

namespace detail {

inline Partition equipartition_of(const UtilitySpec& u, const Share& remaining, std::size_t m) {
  if (m == 1) return Partition{{remaining}};
  return equipartition(u, KnifePath::through_share(remaining), m).shares;
}

/// Measure-`mass` part of `set` taken left to right from `start`, wrapping.
inline IntervalSet theta_window(const MeasureSpec& theta, const IntervalSet& set, double start, double mass) {
  auto prefix = [&](const IntervalSet& s, double want) {
    const double x = numeric::bisect_first(
        [&](double y) { return theta(Share(s.intersect(IntervalSet({{0.0, y}})))) >= want; }, 0.0, 1.0, 1e-15);
    return s.intersect(IntervalSet({{0.0, x}}));
  };
  const IntervalSet right = set.intersect(IntervalSet({{start, 1.0}}));
  const double rm = theta(Share(right));
  if (rm >= mass) return prefix(right, mass);
  const IntervalSet left = set.intersect(IntervalSet({{0.0, start}}));
  return right.unite(prefix(left, mass - rm));
}

}  // namespace detail

/// Divide & Choose play that secures minMax(u;n): propose an equipartition
/// of the remaining manna (the Maxmin partition on the full manna) and accept
/// exactly the offered shares worth at least minMax in the initial problem.
class TruthfulDncStrategy : public AgentStrategy {
 public:
  TruthfulDncStrategy(UtilitySpec u, const Manna& manna, std::size_t n, double tol = 1e-6,
                      bool maxmin_first_division = true)
      : u_(std::move(u)), whole_(manna.whole()), tol_(tol), maxmin_first_(maxmin_first_division) {
    threshold_ = min_max(u_, manna, n).value;
    if (maxmin_first_) {
      try {
        maxmin_witness_ = max_min(u_, manna, n).witness;
      } catch (const Error&) {
        maxmin_first_ = false;
      }
    }
  }

  double threshold() const { return threshold_; }

  Partition propose_partition(const Observation& o) override {
    if (maxmin_first_ && o.active_count == o.n && o.remaining == whole_ && maxmin_witness_.size() == o.n) {
      return maxmin_witness_;
    }
    return detail::equipartition_of(u_, o.remaining, o.active_count);
  }

  std::vector<std::size_t> accept_set(const Observation& o) override {
    std::vector<std::size_t> out;
    std::size_t best = 0;
    for (std::size_t r = 0; r < o.offered.size(); ++r) {
      const double v = eval_utility(u_, o.offered[r]);
      if (v >= threshold_ - tol_) out.push_back(r);
      if (v > eval_utility(u_, o.offered[best])) best = r;
    }
    if (out.empty()) out.push_back(best);
    return out;
  }

  double bid(const Observation&) override { throw Error(ErrorCode::WrongPhase, "D&C strategy cannot bid"); }
  Share choose_share(const Observation&) override { throw Error(ErrorCode::WrongPhase, "D&C strategy cannot choose"); }

 private:
  UtilitySpec u_;
  Share whole_;
  double tol_;
  bool maxmin_first_;
  double threshold_ = 0.0;
  Partition maxmin_witness_;
};

/// Clock play that secures the guarantee: at step k bid the k-th time of the
/// equalized schedule (never below the running clock) and choose the best
/// available share of the budget.
class TruthfulClockStrategy : public AgentStrategy {
 public:
  TruthfulClockStrategy(UtilitySpec u, const Problem& problem, const RuleSpec& rule, const GuaranteeOptions& opts = {})
      : u_(std::move(u)), theta_(problem.measure()), opts_(opts) {
    report_ = guarantee(u_, problem.manna, rule.clock(problem), problem.n(), opts_);
  }

  const GuaranteeReport& report() const { return report_; }

  double bid(const Observation& o) override {
    const auto& t = report_.schedule.times;
    const std::size_t k = std::min(o.step, t.size() - 1);
    return std::max(t[k], o.last_stop);
  }

  Share choose_share(const Observation& o) override {
    if (o.budget <= 0.0) return o.remaining.is_commodity() ? Share(Bundle(o.remaining.bundle().size(), 0.0))
                                                           : Share(IntervalSet{});
    return extreme_share(u_, theta_, o.remaining, o.budget, true, opts_);
  }

  Partition propose_partition(const Observation&) override {
    throw Error(ErrorCode::WrongPhase, "clock strategy cannot divide");
  }
  std::vector<std::size_t> accept_set(const Observation&) override {
    throw Error(ErrorCode::WrongPhase, "clock strategy cannot accept");
  }

 private:
  UtilitySpec u_;
  MeasureSpec theta_;
  GuaranteeOptions opts_;
  GuaranteeReport report_;
};

/// Seeded random play for adversaries and fuzzing.
class RandomStrategy : public AgentStrategy {
 public:
  RandomStrategy(std::uint64_t seed, MeasureSpec theta) : rng_(seed), theta_(std::move(theta)) {}

  Partition propose_partition(const Observation& o) override {
    const std::size_t m = o.active_count;
    Partition p;
    if (o.remaining.is_commodity()) {
      const Bundle& z = o.remaining.bundle();
      std::vector<Bundle> shares(m, Bundle(z.size(), 0.0));
      for (std::size_t a = 0; a < z.size(); ++a) {
        std::vector<double> cuts{0.0, 1.0};
        for (std::size_t i = 1; i < m; ++i) cuts.push_back(unit());
        std::sort(cuts.begin(), cuts.end());
        double given = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          shares[i][a] = i + 1 == m ? z[a] - given : z[a] * (cuts[i + 1] - cuts[i]);
          shares[i][a] = std::max(0.0, shares[i][a]);
          given += shares[i][a];
        }
      }
      for (auto& s : shares) p.shares.emplace_back(std::move(s));
    } else {
      const IntervalSet& set = o.remaining.intervals();
      const double len = set.length();
      std::vector<double> cuts{0.0, 1.0};
      for (std::size_t i = 1; i < m; ++i) cuts.push_back(unit());
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t i = 0; i < m; ++i) {
        const double lo = set.position_at_length(cuts[i] * len), hi = set.position_at_length(cuts[i + 1] * len);
        p.shares.emplace_back(set.intersect(IntervalSet({{lo, hi}})));
      }
    }
    std::shuffle(p.shares.begin(), p.shares.end(), rng_);
    return p;
  }

  std::vector<std::size_t> accept_set(const Observation& o) override {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < o.offered.size(); ++r) {
      if (unit() < 0.5) out.push_back(r);
    }
    if (out.empty()) out.push_back(static_cast<std::size_t>(unit() * static_cast<double>(o.offered.size())) %
                                   o.offered.size());
    return out;
  }

  double bid(const Observation& o) override {
    if (unit() < 0.25) return o.last_stop;
    return o.last_stop + (1.0 - o.last_stop) * unit();
  }

  Share choose_share(const Observation& o) override {
    if (o.remaining.is_commodity()) {
      const Bundle& cap = o.remaining.bundle();
      const Bundle& p = theta_.prices();
      Bundle s(cap.size(), 0.0);
      double left = o.budget;
      std::vector<std::size_t> open;
      Bundle w(cap.size());
      for (std::size_t a = 0; a < cap.size(); ++a) {
        w[a] = unit() * cap[a];
        if (p[a] > 0.0 && cap[a] > 0.0) open.push_back(a);
      }
      // Scale the random direction onto the budget; saturated coordinates
      // are fixed at capacity and the rest rescaled.
      while (left > 1e-15 && !open.empty()) {
        double pw = 0.0;
        for (std::size_t a : open) pw += p[a] * w[a];
        if (pw <= 0.0) {
          for (std::size_t a : open) w[a] = cap[a] - s[a];
          continue;
        }
        const double lambda = left / pw;
        std::vector<std::size_t> next;
        bool saturated = false;
        for (std::size_t a : open) {
          if (s[a] + lambda * w[a] >= cap[a]) {
            left -= p[a] * (cap[a] - s[a]);
            s[a] = cap[a];
            saturated = true;
          } else {
            next.push_back(a);
          }
        }
        if (!saturated) {
          for (std::size_t a : open) s[a] += lambda * w[a];
          left = 0.0;
        }
        open = std::move(next);
      }
      return s;
    }
    return detail::theta_window(theta_, o.remaining.intervals(), unit(), o.budget);
  }

 private:
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  std::mt19937_64 rng_;
  MeasureSpec theta_;
};

// ---------------------------------------------------------------------------
// Runners

struct ProtocolTranscript {
  json document;
  std::vector<Share> allocation;
  std::vector<double> utilities;
};

inline ProtocolTranscript finish(const Engine& e) {
  ProtocolTranscript t;
  t.document = e.transcript();
  for (const auto& s : e.allocation()) t.allocation.push_back(s ? *s : e.problem().manna.empty_share());
  t.utilities = e.utilities();
  return t;
}

/// Drives the engine with one strategy per agent until Done.
inline ProtocolTranscript run(Engine& engine, const std::vector<StrategyPtr>& strategies) {
  if (strategies.size() != engine.problem().n()) {
    throw Error(ErrorCode::InvalidSpec, "need one strategy per agent");
  }
  while (!engine.done()) {
    const auto waiting = engine.awaiting();
    const std::size_t agent = waiting.front();
    const Observation o = observe(engine, agent);
    AgentStrategy& s = *strategies[agent];
    switch (engine.phase()) {
      case Phase::AwaitDivision: engine.apply(Action::divide(agent, s.propose_partition(o))); break;
      case Phase::AwaitAcceptances: engine.apply(Action::accept(agent, s.accept_set(o))); break;
      case Phase::AwaitBids: engine.apply(Action::bid(agent, s.bid(o))); break;
      case Phase::AwaitShareChoice: engine.apply(Action::choose(agent, s.choose_share(o))); break;
      case Phase::Done: break;
    }
  }
  return finish(engine);
}

inline ProtocolTranscript run_dnc(const Problem& problem, const std::vector<StrategyPtr>& strategies,
                                  EngineOptions options = {}) {
  Engine engine(problem, RuleSpec::dnc(), std::move(options));
  return run(engine, strategies);
}

inline ProtocolTranscript run_clock(const Problem& problem, const RuleSpec& rule,
                                    const std::vector<StrategyPtr>& strategies, EngineOptions options = {}) {
  if (!rule.is_clock()) throw Error(ErrorCode::InvalidSpec, "run_clock needs mk or bnc");
  Engine engine(problem, rule, std::move(options));
  return run(engine, strategies);
}

/// Truthful strategies for every agent under `rule`.
inline std::vector<StrategyPtr> truthful_strategies(const Problem& problem, const RuleSpec& rule,
                                                    double tol = 1e-6) {
  std::vector<StrategyPtr> out;
  for (const auto& a : problem.agents) {
    if (rule.is_clock()) {
      GuaranteeOptions g;
      g.tol = tol;
      out.push_back(std::make_shared<TruthfulClockStrategy>(a.utility, problem, rule, g));
    } else {
      out.push_back(std::make_shared<TruthfulDncStrategy>(a.utility, problem.manna, problem.n(), tol));
    }
  }
  return out;
}

}  // namespace fairdiv
