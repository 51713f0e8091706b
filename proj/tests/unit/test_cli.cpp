#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

// Runs wnos_kit with `args`, stdout and stderr discarded; returns the exit code.
int kit(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " \"" + std::string(WNOS_KIT_EXE) + "\" " + args + " >/dev/null 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("wnos_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("exit codes") {
  fs::path dir = scratch("codes");
  std::string toy = q(source_path("programs/toy.wnos")), sc = q(source_path("scenarios/scenario1.txt"));
  CHECK(kit("compile " + toy) == 0);
  CHECK(kit("inspect " + toy) == 0);
  CHECK(kit("") == 1);
  CHECK(kit("compile /no/such/file.wnos") == 1);
  CHECK(kit("run --program " + toy + " --scenario " + sc + " --scheme Nope --out " + q(dir)) == 1);
  CHECK(kit("compare --program " + toy + " --scenario " + sc + " --scheme WNOS-T-P --duration 10") == 1);

  fs::path bad = dir / "bad.wnos";
  {
    std::ofstream(bad) << "nt.make_var('wos_x', [ntses, sesrate]\n";
  }
  CHECK(kit("compile " + q(bad)) == 2);

  fs::path bad_sc = dir / "bad.txt";
  {
    std::ofstream(bad_sc) << "bands = 0\n";
  }
  CHECK(kit("run --program " + toy + " --scenario " + q(bad_sc) + " --scheme WNOS-T-P --out " + q(dir)) == 5);

  fs::path ratio = dir / "ratio.wnos";
  {
    std::ofstream(ratio) << read_text(source_path("programs/cp1.wnos")) << "nt.set('timescale_ratio', 0)\n";
  }
  CHECK(kit("run --program " + q(ratio) + " --scenario " + sc + " --scheme WNOS-T-P --out " + q(dir)) == 4);
  CHECK(kit("compile " + toy, "WNOS_KIT_SEED=abc") == 1);
}

TEST_CASE("run writes deterministic artifacts") {
  fs::path a = scratch("run_a"), b = scratch("run_b");
  std::string common = "run --program " + q(source_path("programs/cp1.wnos")) + " --scenario " +
                       q(source_path("scenarios/scenario2.txt")) + " --scheme WNOS-T-P --scheme NoControl" +
                       " --duration 200 --plot --state --out ";
  REQUIRE(kit(common + q(a), "WNOS_KIT_SEED=5") == 0);
  REQUIRE(kit(common + q(b) + " --seed 5") == 0);
  for (const char* f : {"WNOS_T_P.csv", "NoControl.csv", "WNOS_T_P_throughput.svg", "WNOS_T_P_power.svg",
                        "WNOS_T_P.state.jsonl"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(read_text((a / f).string()) == read_text((b / f).string()));
  }
  CHECK_FALSE(fs::exists(a / "WNOS_T_P.csv.tmp"));
}

TEST_CASE("zero duration gives a header-only csv") {
  fs::path d = scratch("zero");
  REQUIRE(kit("run --program " + q(source_path("programs/cp1.wnos")) + " --scenario " +
              q(source_path("scenarios/scenario1.txt")) + " --scheme NoControl --duration 0 --out " + q(d)) == 0);
  CHECK(read_text((d / "NoControl.csv").string()) ==
        "slot,session_id,throughput_pps,node_id,tx_power_mw,link_id,lambda,utility\n");
}

TEST_CASE("compile --out writes both dumps") {
  fs::path d = scratch("compile");
  REQUIRE(kit("compile " + q(source_path("programs/toy.wnos")) + " --plans --out " + q(d)) == 0);
  CHECK(read_text((d / "compile.txt").string()) == read_text(source_path("tests/golden/toy_compile.txt")));
  CHECK(read_text((d / "plans.txt").string()) == read_text(source_path("tests/golden/toy_plans.txt")));
}
