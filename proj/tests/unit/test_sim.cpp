#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "wnos/errors.hpp"
#include "wnos/plot.hpp"
#include "wnos/sim.hpp"

using namespace wnos;

namespace {

MetricsLog run(const std::string& program, const std::string& scenario, Scheme scheme, long duration,
               std::uint64_t seed = 1, bool state = false) {
  static const NetworkSchema schema = build_default_schema();
  Compiled c = compile_file(source_path(program));
  Scenario s = load_scenario(source_path(scenario));
  RunOptions o;
  o.scheme = scheme;
  o.seed = seed;
  o.duration = duration;
  o.record_state = state;
  return simulate(c, schema, s, o);
}

}  // namespace

TEST_CASE("scheme names round trip") {
  for (Scheme s : all_schemes()) CHECK(parse_scheme(to_string(s)) == s);
  CHECK(to_string(Scheme::wnos_tp) == "WNOS-T-P");
  CHECK_THROWS_AS(parse_scheme("Magic"), ValidationError);
}

TEST_CASE("gain sign follows the sense") {
  CHECK(utility_gain_pct(12, 10, Sense::maximize) == doctest::Approx(20));
  CHECK(utility_gain_pct(8, 10, Sense::minimize) == doctest::Approx(20));
  CHECK(utility_gain_pct(-5, -10, Sense::maximize) == doctest::Approx(50));
}

TEST_CASE("packets are conserved") {
  for (Scheme s : all_schemes()) {
    CAPTURE(to_string(s));
    MetricsLog log = run("programs/cp1.wnos", "scenarios/scenario2_burst.txt", s, 600);
    CHECK(log.stats.injected == doctest::Approx(log.stats.delivered + log.stats.queued));
    CHECK(log.slots.size() == 600);
  }
}

TEST_CASE("bounded sessions stop injecting") {
  MetricsLog log = run("programs/cp1.wnos", "scenarios/scenario2_burst.txt", Scheme::wnos_tp, 3000);
  // Session 0 carries 3000 packets; its tail throughput is zero.
  CHECK(log.slots.back().throughput_pps[0] == 0.0);
  CHECK(log.mean_throughput(1, 0.2) > log.mean_throughput(1, 1.0));
}

TEST_CASE("layers tick on their own timescales") {
  MetricsLog log = run("programs/cp1.wnos", "scenarios/scenario1.txt", Scheme::wnos_tp, 600);
  CHECK(log.stats.transport_ticks == 20);
  CHECK(log.stats.physical_ticks == 600);
  for (const auto& r : log.slots) CHECK(r.transport_ran == (r.slot % 30 == 0));
}

TEST_CASE("uncontrolled layers keep their knobs") {
  MetricsLog br = run("programs/cp1.wnos", "scenarios/scenario1.txt", Scheme::best_response, 300);
  for (const auto& r : br.slots)
    for (double p : r.link_power_mw) CHECK(p == doctest::Approx(1000));
  MetricsLog nc = run("programs/cp1.wnos", "scenarios/scenario1.txt", Scheme::no_control, 300);
  CHECK(nc.stats.knob_writes == 0);
  CHECK(nc.slots.front().link_power_mw == nc.slots.back().link_power_mw);
  CHECK(nc.slots.front().link_rate_pps == nc.slots.back().link_rate_pps);
}

TEST_CASE("same seed, same log") {
  MetricsLog a = run("programs/cp1.wnos", "scenarios/scenario2.txt", Scheme::wnos_tp, 400, 9);
  MetricsLog b = run("programs/cp1.wnos", "scenarios/scenario2.txt", Scheme::wnos_tp, 400, 9);
  CHECK(a.csv() == b.csv());
  // Uncontrolled knobs come from the seeded draws.
  MetricsLog c = run("programs/cp1.wnos", "scenarios/scenario2.txt", Scheme::no_control, 400, 9);
  MetricsLog d = run("programs/cp1.wnos", "scenarios/scenario2.txt", Scheme::no_control, 400, 10);
  CHECK(c.csv() != d.csv());
}

TEST_CASE("csv layout") {
  MetricsLog log = run("programs/cp1.wnos", "scenarios/scenario2.txt", Scheme::wnos_tp, 5);
  std::istringstream in(log.csv());
  std::string line;
  std::getline(in, line);
  CHECK(line == "slot,session_id,throughput_pps,node_id,tx_power_mw,link_id,lambda,utility");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
  }
  // max(sessions, nodes, links) rows per slot.
  CHECK(rows == 5 * 6);
  MetricsLog empty = run("programs/cp1.wnos", "scenarios/scenario2.txt", Scheme::wnos_tp, 0);
  CHECK(empty.csv() == "slot,session_id,throughput_pps,node_id,tx_power_mw,link_id,lambda,utility\n");
  CHECK(empty.mean_utility() == 0.0);
}

TEST_CASE("state lines are JSON") {
  MetricsLog log = run("programs/cp1.wnos", "scenarios/scenario1.txt", Scheme::wnos_tp, 3, 1, true);
  REQUIRE_FALSE(log.state_lines.empty());
  for (const auto& l : log.state_lines) {
    auto j = nlohmann::json::parse(l);
    CHECK(j.contains("slot"));
    CHECK(j.contains("node"));
  }
}

TEST_CASE("plots are standalone SVG") {
  MetricsLog log = run("programs/cp1.wnos", "scenarios/scenario1.txt", Scheme::wnos_tp, 50);
  std::string t = throughput_svg(log), p = power_svg(log);
  for (const std::string* s : {&t, &p}) {
    CHECK(s->rfind("<svg", 0) == 0);
    CHECK(s->find("</svg>") != std::string::npos);
    CHECK(s->find("polyline") != std::string::npos);
  }
  CHECK(svg_line_chart("t", "y", {}).find("</svg>") != std::string::npos);
}

TEST_CASE("compare always has a baseline") {
  static const NetworkSchema schema = build_default_schema();
  Compiled c = compile_file(source_path("programs/cp1.wnos"));
  Scenario s = load_scenario(source_path("scenarios/scenario1.txt"));
  auto rows = compare(c, schema, s, {Scheme::wnos_tp, Scheme::no_control}, 1, 2, 300);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].gain_pct == doctest::Approx(0.0));
  auto alone = compare(c, schema, s, {Scheme::wnos_tp}, 1, 2, 300);
  REQUIRE(alone.size() == 1);
  CHECK(alone[0].gain_pct == doctest::Approx(rows[0].gain_pct));
  CHECK(compare_tsv(rows).rfind("scheme\tmean_utility\tgain_pct\n", 0) == 0);
}
