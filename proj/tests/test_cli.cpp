#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "fixtures.hpp"

#ifndef RRC_CLI_PATH
#error "RRC_CLI_PATH must point at the rrc executable"
#endif

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run rrc_run(const std::string& args) {
  const std::string cmd = std::string(RRC_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("command line pipeline") {
  const auto dir = rrc::test::scratch_dir("cli");
  const std::string d = dir.string();
  const std::string net = d + "/net.csv";

  REQUIRE(rrc_run("generate-network --out " + net).code == 0);
  CHECK(std::filesystem::exists(d + "/net.nodes.csv"));

  REQUIRE(rrc_run("simulate --network " + net + " --theta=-2,-0.8 --features travel_time,left_turn"
                  " --destinations n6_7 --n 300 --seed 3 --min-links 5 --out " + d + "/complete.csv")
              .code == 0);

  SUBCASE("corrupt is deterministic") {
    for (const char* out : {"/a.csv", "/b.csv"})
      REQUIRE(rrc_run("corrupt --network " + net + " --trips " + d + "/complete.csv --p 0.5 --seed 7 --out " + d + out)
                  .code == 0);
    CHECK(slurp(d + "/a.csv") == slurp(d + "/b.csv"));
    CHECK(slurp(d + "/a.csv.manifest.json") == slurp(d + "/b.csv.manifest.json"));
    CHECK(slurp(d + "/a.csv") != slurp(d + "/complete.csv"));
  }

  SUBCASE("estimate, then evaluate") {
    REQUIRE(rrc_run("corrupt --network " + net + " --trips " + d + "/complete.csv --p 0.5 --seed 7 --out " + d +
                    "/gappy.csv")
                .code == 0);
    REQUIRE(rrc_run("estimate --model rl --algo dc --features travel_time,left_turn --network " + net + " --trips " +
                    d + "/gappy.csv --out " + d + "/r.json")
                .code == 0);
    nlohmann::json j;
    std::ifstream(d + "/r.json") >> j;
    CHECK(j["algorithm"] == "dc");
    CHECK(j["theta"].size() == 2);
    CHECK(j.contains("per_iteration_seconds"));
    CHECK(j["options"].contains("tol"));

    const Run ev = rrc_run("evaluate --params " + d + "/r.json --trips " + d + "/complete.csv");
    REQUIRE(ev.code == 0);
    std::istringstream in(ev.out);
    double ll = 0.0;
    std::string rest;
    in >> ll;
    CHECK(ll < 0.0);
    CHECK_FALSE(static_cast<bool>(in >> rest));
  }

  SUBCASE("config file supplies defaults, flags override") {
    std::ofstream(d + "/est.conf") << "# estimate defaults\nmodel = rl\nalgo = nfxp-c\nfeatures = travel_time\n";
    REQUIRE(rrc_run("estimate --config " + d + "/est.conf --network " + net + " --trips " + d +
                    "/complete.csv --out " + d + "/c.json")
                .code == 0);
    nlohmann::json j;
    std::ifstream(d + "/c.json") >> j;
    CHECK(j["algorithm"] == "nfxp-c");
    CHECK(j["theta"].size() == 1);
    REQUIRE(rrc_run("estimate --config " + d + "/est.conf --algo nfxp-i --network " + net + " --trips " + d +
                    "/complete.csv --out " + d + "/i.json")
                .code == 0);
    std::ifstream(d + "/i.json") >> j;
    CHECK(j["algorithm"] == "nfxp-i");
  }

  SUBCASE("exit codes") {
    CHECK(rrc_run("").code == 2);
    CHECK(rrc_run("estimate --network " + net).code == 2);
    CHECK(rrc_run("estimate --algo bogus --network " + net + " --trips " + d + "/complete.csv").code == 2);
    CHECK(rrc_run("corrupt --network " + net + " --trips " + d + "/complete.csv --p 1.5").code == 2);
    CHECK(rrc_run("estimate --network " + d + "/missing.csv --trips " + d + "/complete.csv").code == 2);
    std::ofstream(d + "/tiny.csv") << "link_id,from_node,to_node,travel_time\nxy,x,y,0\nyx,y,x,0\nyt,y,t,0\n";
    std::ofstream(d + "/tiny_trips.csv") << "trip_id,dest_node,link_sequence\n1,t,xy yt\n";
    // Zero utilities on a cycle: every parameter point is infeasible.
    CHECK(rrc_run("estimate --algo nfxp-c --network " + d + "/tiny.csv --trips " + d + "/tiny_trips.csv --out " + d +
                  "/tiny.json")
              .code == 1);
  }
}
