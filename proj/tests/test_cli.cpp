#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "fairdiv/io.hpp"

using fairdiv::io::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(FAIRDIV_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string problem(const std::string& name) { return std::string(FAIRDIV_SOURCE_DIR) + "/problems/" + name + ".json"; }

std::string temp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fairdiv_cli_" + std::to_string(::getpid()) + "_" + name))
      .string();
}

}  // namespace

TEST(Cli, TwoAgentTableMatchesGolden) {
  const Result r = run("tables --rounded --which two_agent");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, slurp(std::string(FAIRDIV_SOURCE_DIR) + "/tests/golden/two_agent.csv"));
}

TEST(Cli, ThreeAgentTableMatchesGolden) {
  const Result r = run("tables --rounded --which three_agent");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, slurp(std::string(FAIRDIV_SOURCE_DIR) + "/tests/golden/three_agent.csv"));
}

TEST(Cli, BenchReportsSinglePeakedExample) {
  const Result r = run("bench --problem " + problem("ann_bob") + " --format json");
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  const auto& ann = j.at("agents")[0];
  const auto& bob = j.at("agents")[1];
  EXPECT_NEAR(ann.at("minMax").at("value").get<double>(), 20.0, 1e-6);
  EXPECT_NEAR(ann.at("Maxmin").at("value").get<double>(), 35.0, 1e-6);
  EXPECT_NEAR(bob.at("minMax").at("value").get<double>(), -5.0, 1e-6);
  EXPECT_NEAR(bob.at("Maxmin").at("value").get<double>(), 0.0, 1e-6);
  const Result csv = run("bench --problem " + problem("ann_bob") + " --format csv");
  EXPECT_EQ(csv.code, 0);
  EXPECT_NE(csv.out.find("Ann"), std::string::npos);
}

TEST(Cli, OutputIsDeterministic) {
  const std::string args = "bench --problem " + problem("two_good") + " --format json --seed 3";
  const Result a = run(args), b = run(args);
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const std::string sim = "simulate --problem " + problem("additive") + " --rule dnc --strategy random --seed 9";
  EXPECT_EQ(run(sim).out, run(sim).out);
}

TEST(Cli, GuaranteeForBidAndChoose) {
  const Result r = run("guarantee --problem " + problem("leontief_anti_10") + " --rule bnc --format json");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j.at("agents")[0].at("value").get<double>(), 10.0 / 3.0, 1e-5);
  EXPECT_NEAR(j.at("agents")[1].at("value").get<double>(), 20.0 / 3.0, 1e-5);
}

TEST(Cli, SimulateThenReplay) {
  const std::string tr = temp("transcript.json");
  const Result r = run("simulate --problem " + problem("ann_bob") + " --rule dnc --format json --transcript " + tr);
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j.at("agents")[0].at("utility").get<double>(), 35.0, 1e-6);
  EXPECT_NEAR(j.at("agents")[1].at("utility").get<double>(), -5.0, 1e-6);
  EXPECT_TRUE(j.at("guarantees_met").get<bool>());

  const Result rp = run("replay " + tr + " --format json");
  ASSERT_EQ(rp.code, 0) << rp.out;
  const json k = json::parse(rp.out);
  EXPECT_TRUE(k.at("identical").get<bool>());
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(k.at("utilities")[i], j.at("agents")[i].at("utility"));

  // A tampered transcript is a protocol error.
  json doc = json::parse(slurp(tr));
  doc["utilities"][0] = 0.0;
  std::ofstream(tr) << doc.dump();
  EXPECT_EQ(run("replay " + tr).code, 3);
  std::filesystem::remove(tr);
}

TEST(Cli, OrderingChangesTheDivider) {
  const Result r =
      run("simulate --problem " + problem("ann_bob") + " --rule dnc --ordering Bob,Ann --format json");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j.at("agents")[0].at("utility").get<double>(), 20.0, 1e-6);
  EXPECT_NEAR(j.at("agents")[1].at("utility").get<double>(), 0.0, 1e-6);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("bench").code, 1);
  EXPECT_EQ(run("bench --problem /nonexistent.json").code, 1);
  EXPECT_EQ(run("bench --problem " + problem("ann_bob") + " --format xml").code, 1);
  EXPECT_EQ(run("guarantee --problem " + problem("ann_bob") + " --rule dnc").code, 1);
  // Non-monotone utilities have no clock guarantee: solver failure.
  EXPECT_EQ(run("guarantee --problem " + problem("ann_bob") + " --rule bnc").code, 2);
  // A scripted Divider offering an invalid partition: protocol error.
  const std::string script = temp("script.json");
  std::ofstream(script) << R"({"agents": {"Ann": {"divide": [[[4], [5]]]}}})";
  EXPECT_EQ(run("simulate --problem " + problem("ann_bob") + " --rule dnc --strategy scripted,truthful --script " +
                script)
                .code,
            3);
  std::filesystem::remove(script);
}

TEST(Cli, ServeAnswersHealthz) {
  const int port = 20000 + static_cast<int>(::getpid() % 20000);
  const pid_t child = fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    const std::string p = std::to_string(port);
    execl(FAIRDIV_CLI, FAIRDIV_CLI, "serve", "--host", "127.0.0.1", "--port", p.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  httplib::Client c("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !res; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    res = c.Get("/healthz");
  }
  kill(child, SIGTERM);
  int status = 0;
  waitpid(child, &status, 0);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("status"), "ok");
}
