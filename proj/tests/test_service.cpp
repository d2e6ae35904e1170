#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <thread>

#include "fairdiv/catalog.hpp"
#include "fairdiv/service/http.hpp"
#include "fairdiv/service/sqlite_store.hpp"

using namespace fairdiv;
using namespace fairdiv::service;

namespace {

json load_json(const std::string& name) {
  return json::parse(io::read_file(std::string(FAIRDIV_SOURCE_DIR) + "/problems/" + name + ".json"));
}

class Server {
 public:
  explicit Server(SessionManager& m) {
    mount(server_, m);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Server() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

struct Reply {
  int status = 0;
  json body;
  std::string raw;
};

Reply post(const Server& s, const std::string& path, const json& body, const std::string& token = "") {
  auto c = s.client();
  httplib::Headers h;
  if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
  auto r = c.Post(path, h, body.dump(), "application/json");
  if (!r) throw std::runtime_error("request failed");
  return {r->status, json::parse(r->body), r->body};
}

Reply get(const Server& s, const std::string& path) {
  auto c = s.client();
  auto r = c.Get(path);
  if (!r) throw std::runtime_error("request failed");
  return {r->status, json::parse(r->body), r->body};
}

json session_body(const json& problem, const std::string& rule, const json& slots, json options = json::object()) {
  return {{"v", 1}, {"problem", problem}, {"rule", rule}, {"slots", slots}, {"options", options}, {"seed", 5}};
}

const json kHuman = {{"type", "human"}};
const json kTruthful = {{"type", "bot"}, {"strategy", "truthful"}};

/// Observation rebuilt from a redacted state view.
Observation observation_of(const json& v, const Manna& m) {
  Observation o;
  o.agent = v.at("you");
  o.step = v.at("step");
  o.n = v.at("agents").size();
  o.active_count = v.at("active").size();
  o.remaining = io::share_from_json(v.at("remaining"), m);
  o.last_stop = v.value("last_stop", 0.0);
  if (v.contains("offered")) o.offered = io::partition_from_json(v.at("offered"), m);
  o.budget = v.value("budget", 0.0);
  return o;
}

/// Plays one human seat through the API with `strategy` until Done.
json play_human(const Server& srv, const std::string& id, const std::string& token, AgentStrategy& strategy,
                const Manna& m) {
  json v = get(srv, "/sessions/" + id + "?token=" + token).body;
  while (!v.at("done").get<bool>()) {
    EXPECT_TRUE(v.at("your_turn").get<bool>()) << v.dump();
    const Observation o = observation_of(v, m);
    const std::string phase = v.at("phase");
    json action;
    if (phase == "AwaitDivision") action = {{"type", "divide"}, {"partition", io::to_json(strategy.propose_partition(o))}};
    if (phase == "AwaitAcceptances") action = {{"type", "accept"}, {"shares", strategy.accept_set(o)}};
    if (phase == "AwaitBids") action = {{"type", "bid"}, {"time", strategy.bid(o)}};
    if (phase == "AwaitShareChoice") action = {{"type", "choose"}, {"share", io::to_json(strategy.choose_share(o))}};
    const Reply r = post(srv, "/sessions/" + id + "/actions", action, token);
    EXPECT_EQ(r.status, 200) << r.raw;
    if (r.status != 200) break;
    v = r.body;
  }
  return v;
}

}  // namespace

TEST(Service, Healthz) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  const Reply r = get(srv, "/healthz");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("status"), "ok");
  EXPECT_EQ(r.body.at("v"), 1);
}

TEST(Service, CreateAndInitialPhases) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  json p3 = {{"manna", {{"kind", "commodity"}, {"omega", {1, 1}}}},
             {"agents",
              {{{"name", "H"}, {"utility", {{"family", "linear"}}}},
               {{"name", "B1"}, {"utility", {{"family", "leontief"}}}},
               {{"name", "B2"}, {"utility", {{"family", "cobb_douglas"}}}}}}};
  Reply r = post(srv, "/sessions", session_body(p3, "dnc", {kHuman, kTruthful, kTruthful}));
  EXPECT_EQ(r.status, 201) << r.raw;
  EXPECT_EQ(r.body.at("phase"), "AwaitDivision");
  ASSERT_EQ(r.body.at("tokens").size(), 1u);
  EXPECT_EQ(r.body.at("tokens")[0].at("agent"), 0);

  r = post(srv, "/sessions", session_body(load_json("leontief_anti"), "bnc", {kHuman, kHuman}));
  EXPECT_EQ(r.status, 201) << r.raw;
  EXPECT_EQ(r.body.at("phase"), "AwaitBids");
  EXPECT_EQ(r.body.at("tokens").size(), 2u);
}

TEST(Service, RejectsInvalidSessions) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  json bad = load_json("leontief_anti");
  bad["agents"][0]["utility"]["family"] = "leontiev";
  Reply r = post(srv, "/sessions", session_body(bad, "dnc", {kHuman, kHuman}));
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body.at("error").at("code"), "InvalidSpec");
  EXPECT_NE(r.body.at("error").at("message").get<std::string>().find("/agents/0/utility/family"), std::string::npos);

  r = post(srv, "/sessions", session_body(load_json("ann_bob"), "bnc", {kHuman, kHuman}));
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body.at("error").at("code"), "NonMonotone");

  auto c = srv.client();
  auto raw = c.Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 422);
}

TEST(Service, TokensAreChecked) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  const Reply r = post(srv, "/sessions", session_body(load_json("ann_bob"), "dnc", {kHuman, kHuman}));
  const std::string id = r.body.at("id");
  EXPECT_EQ(get(srv, "/sessions/" + id + "?token=nope").status, 403);
  EXPECT_EQ(get(srv, "/sessions/" + id).status, 403);
  EXPECT_EQ(get(srv, "/sessions/0123abcd?token=x").status, 404);
  const std::string bob = r.body.at("tokens")[1].at("token");
  // Bob may not divide for Ann.
  const Reply act = post(srv, "/sessions/" + id + "/actions",
                         {{"type", "divide"}, {"partition", json::array({{5}, {5}})}}, bob);
  EXPECT_EQ(act.status, 409);
  EXPECT_EQ(act.body.at("error").at("code"), "NotYourTurn");
}

TEST(Service, HumanDividerAndRedaction) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  // Bob's utility carries a distinctive coefficient that must never reach Ann.
  json prob = load_json("ann_bob");
  prob["agents"][1]["utility"]["coefficients"] = {0, -6.123456789, 1};
  const Reply r = post(srv, "/sessions", session_body(prob, "dnc", {kHuman, kHuman}));
  const std::string id = r.body.at("id");
  const std::string ann = r.body.at("tokens")[0].at("token"), bob = r.body.at("tokens")[1].at("token");

  Reply a = post(srv, "/sessions/" + id + "/actions",
                 {{"type", "divide"}, {"partition", json::array({{5}, {5}})}}, ann);
  ASSERT_EQ(a.status, 200) << a.raw;
  EXPECT_EQ(a.body.at("phase"), "AwaitAcceptances");
  EXPECT_EQ(a.body.at("your_utility").at("family"), "polynomial");
  EXPECT_EQ(a.raw.find("6.123456789"), std::string::npos);

  const Reply b = get(srv, "/sessions/" + id + "?token=" + bob);
  EXPECT_EQ(b.body.at("offered").size(), 2u);
  EXPECT_NE(b.raw.find("6.123456789"), std::string::npos);  // Bob sees his own utility

  // Empty acceptance is refused unless the session opted in.
  const Reply empty = post(srv, "/sessions/" + id + "/actions", {{"type", "accept"}, {"shares", json::array()}}, bob);
  EXPECT_EQ(empty.status, 422);
  EXPECT_EQ(empty.body.at("error").at("code"), "EmptyAcceptance");

  const Reply done = post(srv, "/sessions/" + id + "/actions", {{"type", "accept"}, {"shares", {1}}}, bob);
  EXPECT_TRUE(done.body.at("done").get<bool>());
  EXPECT_NEAR(done.body.at("own_utility").get<double>(), 25.0 - 5.0 * 6.123456789, 1e-9);
  for (const auto& tok : {ann, bob}) {
    const Reply t = get(srv, "/sessions/" + id + "/transcript?token=" + tok);
    EXPECT_EQ(t.status, 200);
    EXPECT_TRUE(t.body.at("done").get<bool>());
    EXPECT_EQ(t.body.at("allocation").size(), 2u);
    if (tok == ann) EXPECT_EQ(t.raw.find("6.123456789"), std::string::npos);
  }
}

TEST(Service, AcceptancesHiddenUntilMatching) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  json p3 = {{"manna", {{"kind", "commodity"}, {"omega", {1, 1}}}},
             {"agents",
              {{{"name", "A"}, {"utility", {{"family", "linear"}}}},
               {{"name", "B"}, {"utility", {{"family", "leontief"}}}},
               {{"name", "C"}, {"utility", {{"family", "cobb_douglas"}}}}}}};
  const Reply r = post(srv, "/sessions", session_body(p3, "dnc", {kHuman, kHuman, kHuman}));
  const std::string id = r.body.at("id");
  std::vector<std::string> tok;
  for (const auto& t : r.body.at("tokens")) tok.push_back(t.at("token"));
  post(srv, "/sessions/" + id + "/actions",
       {{"type", "divide"},
        {"partition", json::array({{0.5, 0.5}, {0.25, 0.25}, {0.25, 0.25}})}},
       tok[0]);
  post(srv, "/sessions/" + id + "/actions", {{"type", "accept"}, {"shares", {0}}}, tok[1]);
  for (std::size_t who : {0u, 2u}) {
    const json v = get(srv, "/sessions/" + id + "?token=" + tok[who]).body;
    bool seen = false;
    for (const auto& e : v.at("events")) {
      if (e.at("type") == "acceptance") {
        EXPECT_TRUE(e.value("hidden", false));
        EXPECT_FALSE(e.contains("shares"));
        seen = true;
      }
    }
    EXPECT_TRUE(seen);
  }
  // B sees its own acceptance.
  const json own = get(srv, "/sessions/" + id + "?token=" + tok[1]).body;
  for (const auto& e : own.at("events")) {
    if (e.at("type") == "acceptance") EXPECT_EQ(e.at("shares"), (json{0}));
  }
  post(srv, "/sessions/" + id + "/actions", {{"type", "accept"}, {"shares", {0}}}, tok[2]);
  const json after = get(srv, "/sessions/" + id + "?token=" + tok[0]).body;
  for (const auto& e : after.at("events")) {
    if (e.at("type") == "acceptance") EXPECT_EQ(e.at("shares"), (json{0}));
  }
  EXPECT_EQ(after.at("phase"), "AwaitDivision");
  EXPECT_EQ(after.at("divider"), 1);
}

TEST(Service, ForcedBestWhenOptedIn) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  const Reply r = post(srv, "/sessions",
                       session_body(load_json("ann_bob"), "dnc", {kHuman, kHuman}, {{"force_best_on_empty", true}}));
  const std::string id = r.body.at("id");
  const std::string ann = r.body.at("tokens")[0].at("token"), bob = r.body.at("tokens")[1].at("token");
  post(srv, "/sessions/" + id + "/actions", {{"type", "divide"}, {"partition", json::array({{2}, {8}})}},
       ann);
  const Reply done = post(srv, "/sessions/" + id + "/actions", {{"type", "accept"}, {"shares", json::array()}}, bob);
  EXPECT_EQ(done.status, 200) << done.raw;
  EXPECT_NEAR(done.body.at("own_utility").get<double>(), 16.0, 1e-12);
}

TEST(Service, BidsBelowTheClockAreRejected) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  json p3 = {{"manna", {{"kind", "commodity"}, {"omega", {1, 1}}}},
             {"agents",
              {{{"name", "A"}, {"utility", {{"family", "linear"}}}},
               {{"name", "B"}, {"utility", {{"family", "linear"}}}},
               {{"name", "C"}, {"utility", {{"family", "linear"}}}}}}};
  const Reply r = post(srv, "/sessions", session_body(p3, "bnc", {kHuman, kHuman, kHuman}));
  const std::string id = r.body.at("id");
  std::vector<std::string> tok;
  for (const auto& t : r.body.at("tokens")) tok.push_back(t.at("token"));
  post(srv, "/sessions/" + id + "/actions", {{"type", "bid"}, {"time", 0.3}}, tok[0]);
  // A bid not yet resolved stays hidden from the others.
  const json view = get(srv, "/sessions/" + id + "?token=" + tok[1]).body;
  EXPECT_TRUE(view.at("events")[0].value("hidden", false));
  EXPECT_FALSE(view.at("events")[0].contains("time"));
  post(srv, "/sessions/" + id + "/actions", {{"type", "bid"}, {"time", 0.5}}, tok[1]);
  post(srv, "/sessions/" + id + "/actions", {{"type", "bid"}, {"time", 0.6}}, tok[2]);
  Reply c = post(srv, "/sessions/" + id + "/actions", {{"type", "choose"}, {"share", json::array({0.3, 0.3})}}, tok[0]);
  ASSERT_EQ(c.status, 200) << c.raw;
  EXPECT_NEAR(c.body.at("last_stop").get<double>(), 0.3, 1e-15);
  Reply low = post(srv, "/sessions/" + id + "/actions", {{"type", "bid"}, {"time", 0.1}}, tok[1]);
  EXPECT_EQ(low.status, 422);
  EXPECT_EQ(low.body.at("error").at("code"), "NonIncreasingBid");
  Reply drop = post(srv, "/sessions/" + id + "/actions", {{"type", "drop"}, {"time", 0.4}}, tok[1]);
  EXPECT_EQ(drop.status, 422);
  Reply bad = post(srv, "/sessions/" + id + "/actions", {{"type", "choose"}, {"share", json::array({0.1, 0.1})}}, tok[0]);
  EXPECT_EQ(bad.status, 409);
}

TEST(Service, LongPollWakesOnNewEvents) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  const Reply r = post(srv, "/sessions", session_body(load_json("ann_bob"), "dnc", {kHuman, kHuman}));
  const std::string id = r.body.at("id");
  const std::string ann = r.body.at("tokens")[0].at("token"), bob = r.body.at("tokens")[1].at("token");
  const auto start = std::chrono::steady_clock::now();
  auto waiter = std::async(std::launch::async, [&] { return get(srv, "/sessions/" + id + "?token=" + bob + "&since=0&wait=10000"); });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  post(srv, "/sessions/" + id + "/actions", {{"type", "divide"}, {"partition", json::array({{5}, {5}})}},
       ann);
  const Reply v = waiter.get();
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(ms, 5000.0);
  EXPECT_EQ(v.body.at("phase"), "AwaitAcceptances");
  ASSERT_EQ(v.body.at("events").size(), 1u);
  EXPECT_EQ(v.body.at("events")[0].at("index"), 0);
  // Nothing new after the last index: the wait times out with an empty list.
  const Reply idle = get(srv, "/sessions/" + id + "?token=" + bob + "&since=1&wait=100");
  EXPECT_EQ(idle.body.at("events").size(), 0u);
  EXPECT_EQ(get(srv, "/sessions/" + id + "?token=" + bob + "&since=x").status, 422);
}

TEST(Service, EndToEndMatchesInProcessEngine) {
  SessionManager m(nullptr, 1);
  Server srv(m);
  json p3 = {{"manna", {{"kind", "commodity"}, {"omega", {1, 1}}}},
             {"agents",
              {{{"name", "H"}, {"utility", {{"family", "ces"}, {"rho", 0.5}, {"scale", 2.5}}}},
               {{"name", "B1"}, {"utility", {{"family", "leontief"}, {"scale", 10}}}},
               {{"name", "B2"}, {"utility", {{"family", "quadratic_norm"}, {"scale", 5}, {"weights", {2, 2}}}}}}}};
  struct Game {
    json problem;
    std::string rule;
    json slots;
  };
  const Game games[] = {{p3, "dnc", {kHuman, kTruthful, kTruthful}},
                        {load_json("leontief_anti_10"), "bnc", {kHuman, kTruthful}},
                        {load_json("leontief_anti_10"), "bnc", {kTruthful, kHuman}},
                        {load_json("ann_bob"), "dnc", {kTruthful, kHuman}}};
  for (const auto& g : games) {
    const Problem problem = io::problem_from_json(g.problem);
    const RuleSpec rule = rule_from_name(g.rule, problem);
    const auto in_process = truthful_strategies(problem, rule);
    Engine engine(problem, rule);
    const auto expected = run(engine, in_process);

    const Reply r = post(srv, "/sessions", session_body(g.problem, g.rule, g.slots));
    ASSERT_EQ(r.status, 201) << r.raw;
    const std::string id = r.body.at("id");
    const std::size_t human = r.body.at("tokens")[0].at("agent");
    const json final_view = play_human(srv, id, r.body.at("tokens")[0].at("token"), *in_process[human], problem.manna);
    ASSERT_TRUE(final_view.at("done").get<bool>());
    const json full = m.full_transcript(id);
    for (std::size_t i = 0; i < problem.n(); ++i) {
      const Share got = io::share_from_json(full.at("allocation")[i], problem.manna);
      for (std::size_t k = 0; k < got.bundle().size(); ++k) {
        EXPECT_NEAR(got.bundle()[k], expected.allocation[i].bundle()[k], 1e-9) << g.rule << " agent " << i;
      }
    }
    EXPECT_NEAR(final_view.at("own_utility").get<double>(), expected.utilities[human], 1e-9);
    // Nothing the human received names another agent's utility.
    const json view = get(srv, "/sessions/" + id + "?token=" + std::string(r.body.at("tokens")[0].at("token"))).body;
    EXPECT_EQ(view.dump().find("\"utility\""), std::string::npos);
    EXPECT_FALSE(view.contains("problem"));
  }
}

TEST(Service, SqliteRestoreResumesSessions) {
  const auto path = std::filesystem::temp_directory_path() / ("fairdiv_test_" + std::to_string(::getpid()) + ".db");
  std::filesystem::remove(path);
  std::string id, bob;
  json before;
  {
    SessionManager m(std::make_shared<SqliteStore>(path.string()), 3);
    const json created = m.create(session_body(load_json("ann_bob"), "dnc", {kHuman, kHuman}));
    id = created.at("id");
    const std::string ann = created.at("tokens")[0].at("token");
    bob = created.at("tokens")[1].at("token");
    m.act(id, ann, {{"type", "divide"}, {"partition", json::array({{4}, {6}})}});
    before = m.state(id, bob);
  }
  SessionManager again(std::make_shared<SqliteStore>(path.string()), 4);
  EXPECT_EQ(again.restore(), 1u);
  json after = again.state(id, bob);
  for (auto* j : {&before, &after}) j->erase("updated");
  EXPECT_EQ(after, before);
  const json done = again.act(id, bob, {{"type", "accept"}, {"shares", {1}}});
  EXPECT_TRUE(done.at("done").get<bool>());
  EXPECT_NEAR(done.at("own_utility").get<double>(), 0.0, 1e-12);
  EXPECT_NO_THROW(replay(again.full_transcript(id)));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + "-wal");
  std::filesystem::remove(path.string() + "-shm");
}
