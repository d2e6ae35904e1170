#pragma once

// Live protocol sessions shared by human and bot participants.
//
// Each session wraps one Engine. Humans act through join tokens; bots act as
// soon as the phase waits on them. Views are redacted per participant: other
// agents' utilities, realized utilities, and acceptance sets or bids of an
// unresolved step are never serialized.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "fairdiv/errors.hpp"
#include "fairdiv/io.hpp"
#include "fairdiv/protocols.hpp"

namespace fairdiv::service {

using io::json;

/// Error surfaced to API clients with an HTTP status.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

inline int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::WrongPhase:
    case ErrorCode::NotYourTurn: return 409;
    case ErrorCode::NoConvergence:
    case ErrorCode::Unsupported: return 500;
    default: return 422;
  }
}

inline json error_body(const std::string& code, const std::string& message) {
  return {{"v", io::kSchemaVersion}, {"error", {{"code", code}, {"message", message}}}};
}

/// Durable storage for sessions: the creation record plus every applied
/// action, appended before the action is committed in memory.
class SessionStore {
 public:
  struct Stored {
    std::string id;
    json config;
    std::string created;
    std::vector<json> actions;
  };
  virtual ~SessionStore() = default;
  virtual void save_session(const std::string& id, const json& config, const std::string& created) = 0;
  virtual void append_action(const std::string& id, std::size_t index, const json& action) = 0;
  virtual std::vector<Stored> load_all() = 0;
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Slot {
  bool human = true;
  std::string token;     // humans only
  std::string strategy;  // bots: truthful | random
  StrategyPtr bot;
};

struct Session {
  std::string id;
  json config;
  std::vector<Slot> slots;
  std::unique_ptr<Engine> engine;
  std::vector<json> actions;
  std::string created, updated;
  std::mutex mu;
  std::condition_variable changed;
};

inline Action action_from_json(const json& j, const Engine& engine, std::size_t agent) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw Error(ErrorCode::InvalidAction, "action needs a string 'type'");
  }
  const std::string type = j["type"].get<std::string>();
  const Manna& manna = engine.problem().manna;
  try {
    if (type == "divide") return Action::divide(agent, io::partition_from_json(j.at("partition"), manna));
    if (type == "accept") return Action::accept(agent, j.at("shares").get<std::vector<std::size_t>>());
    if (type == "bid" || type == "drop") {
      if (type == "drop" && engine.rule().direction != Direction::Decreasing) {
        throw Error(ErrorCode::InvalidAction, "drop applies to decreasing clock rules; use bid");
      }
      if (!j.at("time").is_number()) throw Error(ErrorCode::InvalidAction, "time must be a number");
      return Action::bid(agent, j["time"].get<double>());
    }
    if (type == "choose") return Action::choose(agent, io::share_from_json(j.at("share"), manna));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidAction, std::string("malformed action: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidSpec) throw Error(ErrorCode::InvalidAction, e.message());
    throw;
  }
  throw Error(ErrorCode::InvalidAction, "unknown action type '" + type + "'");
}

class SessionManager {
 public:
  explicit SessionManager(std::shared_ptr<SessionStore> store = nullptr, std::uint64_t seed = std::random_device{}())
      : store_(std::move(store)), rng_(seed) {}

  /// Rebuilds sessions from the store by re-applying their logged actions.
  std::size_t restore() {
    if (!store_) return 0;
    std::size_t count = 0;
    for (auto& rec : store_->load_all()) {
      auto s = build(rec.id, rec.config);
      s->created = rec.created;
      for (const auto& a : rec.actions) {
        const std::size_t agent = a.at("agent").get<std::size_t>();
        s->engine->apply(action_from_json(a, *s->engine, agent));
        s->actions.push_back(a);
      }
      run_bots(*s);
      s->updated = utc_now();
      std::unique_lock lock(map_mu_);
      sessions_[rec.id] = std::move(s);
      ++count;
    }
    return count;
  }

  /// Body: {"v":1, "problem":{...}, "rule":"dnc|mk|bnc",
  ///        "slots":[{"type":"human"}|{"type":"bot","strategy":"truthful|random"}],
  ///        "options":{"force_best_on_empty":bool}, "seed":int}
  json create(const json& body) {
    if (!body.is_object()) throw ServiceError(422, "InvalidSpec", "body must be a JSON object");
    if (body.value("v", 1) != io::kSchemaVersion) throw ServiceError(422, "InvalidSpec", "unsupported schema version");
    json config = body;
    config["v"] = io::kSchemaVersion;
    const std::string id = random_hex(16);
    {
      std::lock_guard lock(rng_mu_);
      const std::size_t n = body.contains("problem") && body["problem"].contains("agents") &&
                                    body["problem"]["agents"].is_array()
                                ? body["problem"]["agents"].size()
                                : 0;
      json slots = body.value("slots", json::array());
      if (!slots.is_array()) throw ServiceError(422, "InvalidSpec", "slots must be an array");
      while (slots.size() < n) slots.push_back({{"type", "human"}});
      for (auto& slot : slots) {
        if (slot.is_object() && slot.value("type", "human") == "human") slot["token"] = random_hex_locked(32);
      }
      config["slots"] = slots;
    }
    auto s = build(id, config);
    s->created = s->updated = utc_now();
    if (store_) store_->save_session(id, s->config, s->created);
    {
      std::lock_guard lock(s->mu);
      run_bots(*s);
    }
    json out = {{"v", io::kSchemaVersion}, {"id", id}, {"tokens", json::array()}};
    for (std::size_t i = 0; i < s->slots.size(); ++i) {
      if (s->slots[i].human) {
        out["tokens"].push_back(
            {{"agent", i}, {"name", s->engine->problem().agents[i].name}, {"token", s->slots[i].token}});
      }
    }
    out["phase"] = to_string(s->engine->phase());
    std::unique_lock lock(map_mu_);
    sessions_[id] = std::move(s);
    return out;
  }

  /// Redacted state for the token holder. With `since`, waits up to
  /// `wait_ms` for events beyond that index.
  json state(const std::string& id, const std::string& token, std::optional<std::size_t> since = std::nullopt,
             int wait_ms = 0) {
    auto s = find(id);
    std::unique_lock lock(s->mu);
    const std::size_t me = agent_of(*s, token);
    if (since && wait_ms > 0) {
      s->changed.wait_for(lock, std::chrono::milliseconds(wait_ms),
                          [&] { return s->engine->events().size() > *since || s->engine->done(); });
    }
    return view(*s, me, since.value_or(0));
  }

  json act(const std::string& id, const std::string& token, const json& body) {
    auto s = find(id);
    std::unique_lock lock(s->mu);
    const std::size_t me = agent_of(*s, token);
    if (!s->slots[me].human) throw ServiceError(403, "Forbidden", "token does not belong to a human slot");
    const json& action = body.contains("action") ? body["action"] : body;
    try {
      commit(*s, action_from_json(action, *s->engine, me), action, me);
      run_bots(*s);
    } catch (const Error& e) {
      throw ServiceError(status_for(e.code()), to_string(e.code()), e.message());
    }
    s->changed.notify_all();
    return view(*s, me, 0);
  }

  json transcript(const std::string& id, const std::string& token) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    const std::size_t me = agent_of(*s, token);
    json out = public_header(*s);
    out["you"] = me;
    out["events"] = redacted_events(*s, me, 0);
    out["done"] = s->engine->done();
    if (s->engine->done()) {
      json alloc = json::array();
      for (const auto& sh : s->engine->allocation()) alloc.push_back(sh ? io::to_json(*sh) : json(nullptr));
      out["allocation"] = alloc;
      out["own_utility"] = s->engine->utilities()[me];
    }
    return out;
  }

  /// Full unredacted transcript (in-process use and tests only).
  json full_transcript(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    return s->engine->transcript();
  }

  std::size_t size() const {
    std::shared_lock lock(map_mu_);
    return sessions_.size();
  }

 private:
  std::string random_hex_locked(std::size_t chars) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (std::size_t i = 0; i < chars; ++i) out += digits[rng_() & 15u];
    return out;
  }
  std::string random_hex(std::size_t chars) {
    std::lock_guard lock(rng_mu_);
    return random_hex_locked(chars);
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(map_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "NotFound", "unknown session");
    return it->second;
  }

  static std::size_t agent_of(const Session& s, const std::string& token) {
    if (!token.empty()) {
      for (std::size_t i = 0; i < s.slots.size(); ++i) {
        if (s.slots[i].human && s.slots[i].token == token) return i;
      }
    }
    throw ServiceError(403, "Forbidden", "invalid token");
  }

  std::shared_ptr<Session> build(const std::string& id, const json& config) {
    auto s = std::make_shared<Session>();
    s->id = id;
    s->config = config;
    Problem problem;
    try {
      if (!config.contains("problem")) throw Error(ErrorCode::InvalidSpec, "missing field 'problem'");
      io::Reader r;
      r.source = "problem";
      problem = io::problem_from_json(config["problem"], r);
      const std::string rule_name = config.value("rule", std::string("dnc"));
      const RuleSpec rule = rule_from_name(rule_name, problem);
      EngineOptions opts;
      if (config.contains("options")) opts.force_best_on_empty = config["options"].value("force_best_on_empty", false);
      const json& slots = config["slots"];
      if (slots.size() != problem.n()) throw Error(ErrorCode::InvalidSpec, "need one slot per agent");
      const std::uint64_t seed = config.value("seed", std::uint64_t{42});
      for (std::size_t i = 0; i < slots.size(); ++i) {
        Slot slot;
        const std::string type = slots[i].value("type", std::string("human"));
        if (type == "human") {
          slot.token = slots[i].at("token").get<std::string>();
        } else if (type == "bot") {
          slot.human = false;
          slot.strategy = slots[i].value("strategy", std::string("truthful"));
          slot.bot = make_bot(slot.strategy, problem, rule, i, seed);
        } else {
          throw Error(ErrorCode::InvalidSpec, "slot type must be human or bot");
        }
        s->slots.push_back(std::move(slot));
      }
      s->engine = std::make_unique<Engine>(problem, rule, opts);
    } catch (const Error& e) {
      throw ServiceError(422, to_string(e.code()), e.message());
    } catch (const json::exception& e) {
      throw ServiceError(422, "InvalidSpec", e.what());
    }
    return s;
  }

  static StrategyPtr make_bot(const std::string& name, const Problem& p, const RuleSpec& rule, std::size_t agent,
                              std::uint64_t seed) {
    if (name == "truthful") {
      const auto& u = p.agents[agent].utility;
      if (rule.is_clock()) return std::make_shared<TruthfulClockStrategy>(u, p, rule);
      return std::make_shared<TruthfulDncStrategy>(u, p.manna, p.n());
    }
    if (name == "random") return std::make_shared<RandomStrategy>(seed + agent, p.measure());
    throw Error(ErrorCode::InvalidSpec, "bot strategy must be truthful or random");
  }

  /// Validates on a copy, logs to the store, then swaps the new state in.
  void commit(Session& s, const Action& a, const json& action_json, std::size_t agent) {
    Engine next = *s.engine;
    next.apply(a);
    json logged = action_json;
    logged["agent"] = agent;
    if (store_) store_->append_action(s.id, s.actions.size(), logged);
    s.actions.push_back(std::move(logged));
    *s.engine = std::move(next);
    s.updated = utc_now();
  }

  void run_bots(Session& s) {
    while (!s.engine->done()) {
      std::optional<std::size_t> bot;
      for (std::size_t i : s.engine->awaiting()) {
        if (!s.slots[i].human) {
          bot = i;
          break;
        }
      }
      if (!bot) break;
      const Observation o = observe(*s.engine, *bot);
      AgentStrategy& strat = *s.slots[*bot].bot;
      Action a;
      switch (s.engine->phase()) {
        case Phase::AwaitDivision: a = Action::divide(*bot, strat.propose_partition(o)); break;
        case Phase::AwaitAcceptances: a = Action::accept(*bot, strat.accept_set(o)); break;
        case Phase::AwaitBids: a = Action::bid(*bot, strat.bid(o)); break;
        case Phase::AwaitShareChoice: a = Action::choose(*bot, strat.choose_share(o)); break;
        case Phase::Done: return;
      }
      commit(s, a, action_to_json(a), *bot);
    }
    s.changed.notify_all();
  }

  static json public_header(const Session& s) {
    const Engine& e = *s.engine;
    json agents = json::array();
    for (std::size_t i = 0; i < e.problem().n(); ++i) {
      agents.push_back({{"index", i},
                        {"name", e.problem().agents[i].name},
                        {"kind", s.slots[i].human ? "human" : "bot"},
                        {"served", e.allocation()[i].has_value()}});
    }
    json j = {{"v", io::kSchemaVersion}, {"id", s.id},        {"rule", to_json(e.rule())},
              {"manna", io::to_json(e.problem().manna)},      {"agents", agents}};
    if (e.rule().kind == RuleKind::BidAndChoose) j["measure"] = io::to_json(e.problem().measure());
    if (e.rule().kind == RuleKind::MovingKnife) j["path"] = io::to_json(e.problem().path());
    return j;
  }

  /// Events from index `since`, as `me` may see them.
  static json redacted_events(const Session& s, std::size_t me, std::size_t since) {
    const auto& ev = s.engine->events();
    json out = json::array();
    for (std::size_t k = since; k < ev.size(); ++k) {
      const json& e = ev[k];
      const std::string type = e["type"].get<std::string>();
      const bool mine = e.contains("agent") && e["agent"].get<std::size_t>() == me;
      json copy;
      if (type == "local_maxmin") {
        if (!mine) continue;
        copy = e;
      } else if ((type == "acceptance" || type == "bid") && !mine && !resolved(ev, k)) {
        copy = {{"type", type}, {"agent", e["agent"]}, {"step", e["step"]}, {"hidden", true}};
      } else {
        copy = e;
      }
      copy["index"] = k;
      out.push_back(std::move(copy));
    }
    return out;
  }

  /// Whether the step of event k has been resolved by a matching or stop.
  static bool resolved(const std::vector<json>& ev, std::size_t k) {
    const auto step = ev[k]["step"];
    for (std::size_t j = k + 1; j < ev.size(); ++j) {
      const std::string t = ev[j]["type"].get<std::string>();
      if ((t == "matching" || t == "stop") && ev[j]["step"] == step) return true;
    }
    return false;
  }

  static json view(const Session& s, std::size_t me, std::size_t since) {
    const Engine& e = *s.engine;
    json j = public_header(s);
    const auto waiting = e.awaiting();
    j["you"] = me;
    j["your_utility"] = io::to_json(e.problem().agents[me].utility);
    j["phase"] = to_string(e.phase());
    j["step"] = e.step();
    j["awaiting"] = waiting;
    j["your_turn"] = std::find(waiting.begin(), waiting.end(), me) != waiting.end();
    j["remaining"] = io::to_json(e.remaining());
    j["active"] = e.active();
    j["created"] = s.created;
    j["updated"] = s.updated;
    if (e.rule().is_clock()) j["last_stop"] = e.last_stop();
    if (e.divider()) j["divider"] = *e.divider();
    if (e.phase() == Phase::AwaitAcceptances) j["offered"] = io::to_json(e.offered());
    if (e.phase() == Phase::AwaitShareChoice) {
      j["winner"] = *e.winner();
      j["budget"] = e.budget();
    }
    const auto& own = e.allocation()[me];
    j["own_share"] = own ? io::to_json(*own) : json(nullptr);
    if (own) j["own_utility"] = eval_utility(e.problem().agents[me].utility, *own);
    j["events"] = redacted_events(s, me, since);
    j["event_count"] = e.events().size();
    j["done"] = e.done();
    return j;
  }

  std::shared_ptr<SessionStore> store_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace fairdiv::service
