// fairdiv: benchmarks, guarantees, protocol simulation and the session server.

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fairdiv/benchmarks.hpp"
#include "fairdiv/catalog.hpp"
#include "fairdiv/guarantees.hpp"
#include "fairdiv/io.hpp"
#include "fairdiv/protocols.hpp"
#include "fairdiv/service/http.hpp"
#include "fairdiv/service/session.hpp"
#include "fairdiv/service/sqlite_store.hpp"

using namespace fairdiv;
using io::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kSolver = 2, kProtocol = 3 };

struct Config {
  std::string problem;
  std::string rule = "dnc";
  std::size_t n = 0;
  double tol = 1e-6;
  std::uint64_t seed = 42;
  std::string format = "json";
  std::string out;
  std::string which = "two_agent";
  bool rounded = false;
  std::string strategies;
  bool force_best = false;
  std::string transcript;
  std::string script;
  std::string ordering;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string db;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void emit(const Config& cfg, const std::string& text) {
  if (cfg.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(cfg.out, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidSpec, cfg.out + ": cannot write file");
  f << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json result_json(const BenchmarkResult& r) {
  return {{"value", r.value}, {"witness", io::to_json(r.witness)}, {"method", to_string(r.method)}, {"tol", r.tolerance}};
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

// -- bench ------------------------------------------------------------------

int cmd_bench(const Config& cfg) {
  const Problem p = io::load_problem(cfg.problem);
  const std::size_t n = cfg.n ? cfg.n : p.n();
  BenchmarkOptions bo;
  bo.tol = cfg.tol;
  json rows = json::array();
  for (const auto& a : p.agents) {
    json row = {{"name", a.name}, {"utility", a.utility.describe()}};
    row["minMax"] = result_json(min_max(a.utility, p.manna, n, bo));
    row["Maxmin"] = result_json(max_min(a.utility, p.manna, n, bo));
    row["equal_split"] = p.manna.kind() == MannaKind::Commodity ? json(equal_split(a.utility, p.manna, n)) : json(nullptr);
    try {
      EquipartitionOptions eo;
      eo.tol = cfg.tol;
      eo.seed = cfg.seed;
      const auto e = equipartition(a.utility, p.path(), n, eo);
      row["equipartition"] = {{"value", e.common_value}, {"cuts", e.cuts}, {"spread", e.spread}};
    } catch (const NoConvergence& e) {
      row["equipartition"] = {{"error", e.what()}, {"residual", e.residual()}};
    }
    rows.push_back(std::move(row));
  }
  if (cfg.format == "json") {
    emit(cfg, dump({{"v", io::kSchemaVersion}, {"n", n}, {"agents", rows}}));
  } else if (cfg.format == "csv") {
    std::string s = "agent,minMax,Maxmin,equal_split,equipartition\n";
    for (const auto& r : rows) {
      s += r["name"].get<std::string>() + "," + num(r["minMax"]["value"]) + "," + num(r["Maxmin"]["value"]) + "," +
           (r["equal_split"].is_null() ? "" : num(r["equal_split"])) + "," +
           (r["equipartition"].contains("value") ? num(r["equipartition"]["value"]) : "") + "\n";
    }
    emit(cfg, s);
  } else {
    std::string s = pad("agent", 12) + pad("minMax", 14) + pad("Maxmin", 14) + pad("EqualSplit", 14) + "Equipartition\n";
    for (const auto& r : rows) {
      s += pad(r["name"], 12) + pad(num(r["minMax"]["value"]), 14) + pad(num(r["Maxmin"]["value"]), 14) +
           pad(r["equal_split"].is_null() ? "-" : num(r["equal_split"]), 14) +
           (r["equipartition"].contains("value") ? num(r["equipartition"]["value"]) : "-") + "\n";
    }
    emit(cfg, s);
  }
  return kOk;
}

// -- tables -----------------------------------------------------------------

int cmd_tables(const Config& cfg) {
  std::vector<std::size_t> ns;
  if (cfg.which == "two_agent") ns = {2};
  else if (cfg.which == "three_agent") ns = {3};
  else if (cfg.which == "both") ns = {2, 3};
  else throw CLI::ValidationError("--which", "expected two_agent, three_agent or both");
  GuaranteeOptions go;
  go.tol = cfg.tol;
  std::string text;
  json tables = json::array();
  for (std::size_t n : ns) {
    const auto rows = catalog::table(n, {}, go);
    if (cfg.rounded) {
      text += catalog::rounded_csv(rows);
      continue;
    }
    if (cfg.format == "json") {
      json jr = json::array();
      for (const auto& r : rows) {
        jr.push_back({{"utility", r.name},
                      {"formula", r.formula},
                      {"minMax", r.min_max},
                      {"Gamma_p", r.gamma_p},
                      {"bid", r.bid},
                      {"equal_split", r.equal_split},
                      {"Maxmin", r.max_min},
                      {"rounded",
                       {catalog::round1(r.min_max), catalog::round1(r.gamma_p), catalog::round1(r.equal_split),
                        catalog::round1(r.max_min)}}});
      }
      tables.push_back({{"n", n}, {"rows", jr}});
    } else if (cfg.format == "csv") {
      text += "n,utility,minMax,Gamma_p,equal_split,Maxmin,minMax_1dp,Gamma_p_1dp,equal_split_1dp,Maxmin_1dp\n";
      for (const auto& r : rows) {
        text += std::to_string(n) + "," + r.name + "," + num(r.min_max) + "," + num(r.gamma_p) + "," +
                num(r.equal_split) + "," + num(r.max_min) + "," + catalog::round1(r.min_max) + "," +
                catalog::round1(r.gamma_p) + "," + catalog::round1(r.equal_split) + "," + catalog::round1(r.max_min) +
                "\n";
      }
    } else {
      text += "n = " + std::to_string(n) + "\n" + pad("u(x,y)", 26) + pad("minMax", 16) + pad("Gamma_p", 16) +
              pad("u(w/n)", 16) + "Maxmin\n";
      for (const auto& r : rows) {
        auto cell = [](double v) { return num(v) + " (" + catalog::round1(v) + ")"; };
        text += pad(r.formula, 26) + pad(cell(r.min_max), 16) + pad(cell(r.gamma_p), 16) +
                pad(cell(r.equal_split), 16) + cell(r.max_min) + "\n";
      }
    }
  }
  if (!cfg.rounded && cfg.format == "json") text = dump({{"v", io::kSchemaVersion}, {"tables", tables}});
  emit(cfg, text);
  return kOk;
}

// -- guarantee --------------------------------------------------------------

json report_json(const GuaranteeReport& r) {
  return {{"rule", r.rule.name()},         {"n", r.n},
          {"value", r.value},              {"schedule", r.schedule.times},
          {"step_utilities", r.step_utilities}, {"spread", r.spread},
          {"method", to_string(r.method)}, {"via_antisymmetry", r.via_antisymmetry}};
}

int cmd_guarantee(const Config& cfg) {
  const Problem p = io::load_problem(cfg.problem);
  const std::size_t n = cfg.n ? cfg.n : p.n();
  if (cfg.rule == "dnc") throw CLI::ValidationError("--rule", "guarantee needs mk or bnc");
  const RuleSpec rule = rule_from_name(cfg.rule, p);
  GuaranteeOptions go;
  go.tol = cfg.tol;
  json rows = json::array();
  for (const auto& a : p.agents) {
    json row = report_json(guarantee(a.utility, p.manna, rule.clock(p), n, go));
    row["name"] = a.name;
    rows.push_back(std::move(row));
  }
  if (cfg.format == "json") {
    emit(cfg, dump({{"v", io::kSchemaVersion}, {"agents", rows}}));
  } else {
    std::string s = cfg.format == "csv" ? "agent,rule,n,value,spread,schedule\n" : "";
    for (const auto& r : rows) {
      std::string sched;
      for (const auto& t : r["schedule"]) sched += (sched.empty() ? "" : " ") + num(t);
      if (cfg.format == "csv") {
        s += r["name"].get<std::string>() + "," + r["rule"].get<std::string>() + "," + std::to_string(n) + "," +
             num(r["value"]) + "," + num(r["spread"]) + "," + sched + "\n";
      } else {
        s += pad(r["name"], 12) + "Gamma = " + num(r["value"]) + "  schedule [" + sched + "]\n";
      }
    }
    emit(cfg, s);
  }
  return kOk;
}

// -- simulate / replay --------------------------------------------------------

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

// Moves queued per agent in a script file:
//   {"agents": {"Ann": {"divide": [[[5],[5]]], "accept": [[0]], "bid": [0.4], "choose": [...]}}}
class ScriptedStrategy : public AgentStrategy {
 public:
  ScriptedStrategy(json moves, Manna manna) : moves_(std::move(moves)), manna_(std::move(manna)) {}

  Partition propose_partition(const Observation&) override { return io::partition_from_json(next("divide"), manna_); }
  std::vector<std::size_t> accept_set(const Observation&) override {
    return next("accept").get<std::vector<std::size_t>>();
  }
  double bid(const Observation&) override { return next("bid").get<double>(); }
  Share choose_share(const Observation&) override { return io::share_from_json(next("choose"), manna_); }

 private:
  json next(const std::string& kind) {
    std::size_t& i = used_[kind];
    if (!moves_.contains(kind) || i >= moves_[kind].size()) {
      throw Error(ErrorCode::InvalidAction, "script has no further '" + kind + "' move");
    }
    return moves_[kind][i++];
  }

  json moves_;
  Manna manna_;
  std::map<std::string, std::size_t> used_;
};

int cmd_simulate(const Config& cfg) {
  Problem p = io::load_problem(cfg.problem);
  if (!cfg.ordering.empty()) {
    p.ordering.clear();
    for (const auto& name : split(cfg.ordering)) {
      const auto it = std::find_if(p.agents.begin(), p.agents.end(), [&](const Agent& a) { return a.name == name; });
      if (it == p.agents.end()) throw CLI::ValidationError("--ordering", "unknown agent " + name);
      p.ordering.push_back(static_cast<std::size_t>(it - p.agents.begin()));
    }
    p.validate();
  }
  const RuleSpec rule = rule_from_name(cfg.rule, p);
  auto names = split(cfg.strategies);
  if (names.empty()) names.assign(p.n(), "truthful");
  if (names.size() == 1) names.assign(p.n(), names[0]);
  if (names.size() != p.n()) throw CLI::ValidationError("--strategy", "give one strategy or one per agent");

  json script;
  if (!cfg.script.empty()) script = io::parse_json(io::read_file(cfg.script), cfg.script);

  std::vector<StrategyPtr> strategies;
  std::vector<double> thresholds(p.n(), 0.0);
  GuaranteeOptions go;
  go.tol = cfg.tol;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const auto& u = p.agents[i].utility;
    if (names[i] == "truthful") {
      if (rule.is_clock()) {
        auto s = std::make_shared<TruthfulClockStrategy>(u, p, rule, go);
        thresholds[i] = s->report().value;
        strategies.push_back(s);
      } else {
        auto s = std::make_shared<TruthfulDncStrategy>(u, p.manna, p.n(), cfg.tol);
        thresholds[i] = s->threshold();
        strategies.push_back(s);
      }
    } else if (names[i] == "random") {
      strategies.push_back(std::make_shared<RandomStrategy>(cfg.seed + i, p.measure()));
    } else if (names[i] == "scripted") {
      const json* moves = nullptr;
      if (script.is_object() && script.contains("agents")) {
        const json& a = script["agents"];
        if (a.is_object() && a.contains(p.agents[i].name)) moves = &a[p.agents[i].name];
        else if (a.is_array() && i < a.size()) moves = &a[i];
      }
      if (!moves) throw CLI::ValidationError("--script", "no scripted moves for " + p.agents[i].name);
      strategies.push_back(std::make_shared<ScriptedStrategy>(*moves, p.manna));
    } else {
      throw CLI::ValidationError("--strategy", "strategies are truthful, random or scripted");
    }
  }
  EngineOptions eo;
  eo.force_best_on_empty = cfg.force_best;
  Engine engine(p, rule, eo);
  const ProtocolTranscript t = run(engine, strategies);
  if (!cfg.transcript.empty()) {
    std::ofstream f(cfg.transcript, std::ios::binary);
    if (!f) throw Error(ErrorCode::InvalidSpec, cfg.transcript + ": cannot write file");
    f << dump(t.document);
  }
  json audit = json::array();
  bool ok = true;
  for (std::size_t i = 0; i < p.n(); ++i) {
    json row = {{"name", p.agents[i].name},
                {"strategy", names[i]},
                {"share", io::to_json(t.allocation[i])},
                {"utility", t.utilities[i]}};
    if (names[i] == "truthful") {
      const bool met = t.utilities[i] >= thresholds[i] - 10.0 * cfg.tol;
      row["threshold"] = thresholds[i];
      row["met"] = met;
      ok = ok && met;
    }
    audit.push_back(std::move(row));
  }
  if (cfg.format == "json") {
    emit(cfg, dump({{"v", io::kSchemaVersion}, {"rule", to_json(rule)}, {"agents", audit}, {"guarantees_met", ok}}));
  } else {
    std::string s = cfg.format == "csv" ? "agent,strategy,utility,threshold,met\n" : "";
    for (const auto& r : audit) {
      const bool has = r.contains("threshold");
      if (cfg.format == "csv") {
        s += r["name"].get<std::string>() + "," + r["strategy"].get<std::string>() + "," + num(r["utility"]) + "," +
             (has ? num(r["threshold"]) : "") + "," + (has ? (r["met"].get<bool>() ? "true" : "false") : "") + "\n";
      } else {
        s += pad(r["name"], 12) + pad(r["strategy"], 10) + "utility " + num(r["utility"]) +
             (has ? "  threshold " + num(r["threshold"]) + (r["met"].get<bool>() ? "  ok" : "  BELOW") : "") + "\n";
      }
    }
    emit(cfg, s);
  }
  return kOk;
}

int cmd_replay(const Config& cfg) {
  const std::string path = cfg.transcript.empty() ? cfg.problem : cfg.transcript;
  if (path.empty()) throw CLI::ValidationError("--transcript", "transcript file required");
  const json doc = io::parse_json(io::read_file(path), path);
  const Engine e = replay(doc);
  json alloc = json::array();
  for (const auto& s : e.allocation()) alloc.push_back(s ? io::to_json(*s) : json(nullptr));
  emit(cfg, dump({{"v", io::kSchemaVersion}, {"identical", true}, {"allocation", alloc}, {"utilities", e.utilities()}}));
  return kOk;
}

// -- serve ------------------------------------------------------------------

int cmd_serve(const Config& cfg) {
  std::shared_ptr<service::SessionStore> store;
  if (!cfg.db.empty()) store = std::make_shared<service::SqliteStore>(cfg.db);
  service::SessionManager manager(store);
  const std::size_t restored = manager.restore();
  httplib::Server server;
  service::mount(server, manager);
  std::cerr << "fairdiv: serving on " << cfg.host << ":" << cfg.port;
  if (restored) std::cerr << " (" << restored << " sessions restored)";
  std::cerr << std::endl;
  if (!server.listen(cfg.host, cfg.port)) {
    std::cerr << "fairdiv: cannot bind " << cfg.host << ":" << cfg.port << std::endl;
    return kUsage;
  }
  return kOk;
}

int exit_for(ErrorCode c) {
  if (is_protocol_error(c)) return kProtocol;
  if (c == ErrorCode::InvalidSpec || c == ErrorCode::ShapeMismatch) return kUsage;
  return kSolver;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair division benchmarks, guarantees and protocols"};
  app.require_subcommand(1);
  Config cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--tol", cfg.tol, "Solver tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--format", cfg.format, "Output format")->check(CLI::IsMember({"json", "csv", "pretty"}));
    sub->add_option("--out", cfg.out, "Write output to FILE");
  };

  auto* bench = app.add_subcommand("bench", "minMax, Maxmin, Equal Split and equipartition per agent");
  bench->add_option("--problem", cfg.problem, "Problem file")->required();
  bench->add_option("--n", cfg.n, "Number of shares (default: number of agents)");
  add_common(bench);

  auto* tables = app.add_subcommand("tables", "Reproduce the two- and three-agent comparison tables");
  tables->add_option("--which", cfg.which, "two_agent, three_agent or both")
      ->check(CLI::IsMember({"two_agent", "three_agent", "both"}));
  tables->add_flag("--rounded", cfg.rounded, "Only the one-decimal CSV");
  add_common(tables);

  auto* guar = app.add_subcommand("guarantee", "Moving Knife or Bid & Choose guarantee per agent");
  guar->add_option("--problem", cfg.problem, "Problem file")->required();
  guar->add_option("--rule", cfg.rule, "mk or bnc")->check(CLI::IsMember({"dnc", "mk", "bnc"}));
  guar->add_option("--n", cfg.n, "Number of agents (default: from the problem)");
  add_common(guar);

  auto* sim = app.add_subcommand("simulate", "Run a protocol and audit realized utilities");
  sim->add_option("--problem", cfg.problem, "Problem file")->required();
  sim->add_option("--rule", cfg.rule, "dnc, mk or bnc")->check(CLI::IsMember({"dnc", "mk", "bnc"}));
  sim->add_option("--strategy", cfg.strategies, "truthful|random|scripted, one or comma separated per agent");
  sim->add_option("--ordering", cfg.ordering, "Comma separated agent names, first Divider first");
  sim->add_option("--script", cfg.script, "JSON file of moves for scripted agents");
  sim->add_option("--transcript", cfg.transcript, "Write the transcript to FILE");
  sim->add_flag("--force-best", cfg.force_best, "Empty acceptance takes the best offered share");
  add_common(sim);

  auto* rep = app.add_subcommand("replay", "Replay a transcript and check it is identical");
  rep->add_option("transcript,--transcript", cfg.transcript, "Transcript file")->required();
  add_common(rep);

  auto* serve = app.add_subcommand("serve", "Start the session service");
  serve->add_option("--host", cfg.host, "Bind address");
  serve->add_option("--port", cfg.port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--db", cfg.db, "SQLite file for sessions (default: in memory only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*bench) return cmd_bench(cfg);
    if (*tables) return cmd_tables(cfg);
    if (*guar) return cmd_guarantee(cfg);
    if (*sim) return cmd_simulate(cfg);
    if (*rep) return cmd_replay(cfg);
    if (*serve) return cmd_serve(cfg);
  } catch (const CLI::Error& e) {
    std::cerr << "fairdiv: " << e.what() << std::endl;
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "fairdiv: " << e.what() << std::endl;
    return exit_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "fairdiv: malformed JSON: " << e.what() << std::endl;
    return kUsage;
  }
  return kUsage;
}
