#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "wnos/errors.hpp"
#include "wnos/pps.hpp"
#include "wnos/sim.hpp"

using namespace wnos;

namespace {

const char* kNoPhysical = R"(nt.make_var('wos_x', [ntses, sesrate])
nt.make_var('wos_y', [ntlk, lkses, sesrate], [all, all, None])
nt.set('bounds.wos_x', [0.01, 10])
expr = mkexpr('sum(log(wos_x))', 'wos_x')
nt.add_cstr('sum(wos_y) <= 5', 'wos_y')
nt.objective(max, expr)
)";

struct Bound {
  NetworkSchema schema = build_default_schema();
  Compiled compiled;
  Scenario scenario;
  RuntimeProgram rp;

  Bound(const std::string& program, const std::string& scen)
      : compiled(compile_file(source_path(program))), scenario(load_scenario(source_path(scen))) {
    rp = bind_program(compiled, schema, topology_of(scenario), scenario.channel);
  }
};

SignalingMessage dual(int source, double payload, long ts) {
  return {MessageKind::dual_report, source, 0, 0, payload, 0, ts};
}

}  // namespace

TEST_CASE("topology pool mirrors the scenario") {
  Scenario s = load_scenario(source_path("scenarios/scenario2.txt"));
  InstancePool pool = topology_pool(topology_of(s), build_default_schema());
  CHECK(pool.global("netlnk")->members == std::vector<int>{0, 1, 2, 3});
  CHECK(pool.local("seslnk", 1)->members == std::vector<int>{2, 3});
  CHECK(pool.local("lnkses", 3)->members == std::vector<int>{1});
  CHECK(pool.local("lnknd", 1)->members == std::vector<int>{1});
  CHECK(pool.local("lnknd", 2)->members.empty());
  CHECK(pool.local("nbrnd", 1)->members == std::vector<int>{0, 2});
}

TEST_CASE("binding resolves sets and bounds") {
  Bound b("programs/cp3.wnos", "scenarios/scenario2.txt");
  REQUIRE(b.rp.transport);
  REQUIRE(b.rp.physical);
  CHECK(b.rp.transport_period == 30);
  CHECK(b.rp.resolve(b.rp.transport->coupling[0].set, 1) == std::vector<int>{2, 3});
  CHECK(b.rp.bounds_for(*b.rp.physical, 2).hi == 5.0);
  CHECK(b.rp.bounds_for(*b.rp.physical, 3).hi == 5.0);
  CHECK(b.rp.bounds_for(*b.rp.physical, 0).hi == 1000.0);
  CHECK(b.rp.bounds_for(*b.rp.transport, 0) == Bounds{0.01, 10});
}

TEST_CASE("bad timescale ratio is refused") {
  std::string text = read_text(source_path("programs/cp1.wnos")) + "nt.set('timescale_ratio', 2.5)\n";
  Compiled c = compile_text(text);
  Scenario s = load_scenario(source_path("scenarios/scenario1.txt"));
  CHECK_THROWS_AS(bind_program(c, build_default_schema(), topology_of(s), s.channel), IncompatibleProgram);
}

TEST_CASE("a node without a matching role") {
  Compiled c = compile_text(kNoPhysical);
  Scenario s = load_scenario(source_path("scenarios/scenario1.txt"));
  NetworkSchema schema = build_default_schema();
  RuntimeProgram rp = bind_program(c, schema, topology_of(s), s.channel);
  CHECK(rp.physical == nullptr);
  NodeStack n(0);
  n.sourced_sessions = {0};
  n.tx_links = {0};
  CHECK_NOTHROW(n.install(rp, true, false));
  CHECK_THROWS_AS(n.install(rp, true, true), RoleMismatch);
}

TEST_CASE("signal handling") {
  NodeStack n(0);
  n.registers.cross_gain[0][3] = 1e-9;
  CHECK(n.handle_signal(dual(1, 0.5, 10)));
  CHECK(n.registers.received_duals[0][1].value == 0.5);
  CHECK_FALSE(n.handle_signal(dual(1, 0.5, 10)));
  CHECK(n.registers.duplicates == 1);
  CHECK_FALSE(n.handle_signal(dual(1, -1, 11)));
  CHECK_FALSE(n.handle_signal(dual(1, std::numeric_limits<double>::quiet_NaN(), 12)));
  CHECK(n.registers.rejected == 2);
  // An older report never overwrites a newer one.
  CHECK(n.handle_signal(dual(1, 0.1, 5)));
  CHECK(n.registers.received_duals[0][1].value == 0.5);

  SignalingMessage g{MessageKind::gradient_report, 3, 0, 0, 2.0, 0, 10};
  CHECK(n.handle_signal(g));
  CHECK(n.registers.victim_prices[3].value == 2.0);
  g.source = 7;
  CHECK_FALSE(n.handle_signal(g));
  CHECK(n.registers.unknown == 1);
  g.source = 3;
  g.payload = -0.5;
  g.timestamp = 11;
  CHECK(n.handle_signal(g));
}

TEST_CASE("knob ranges") {
  LayerKnobs k;
  CHECK_NOTHROW(k.validate());
  k.fec_rate = 0.25;
  CHECK_THROWS_AS(k.validate(), InvariantViolation);
  k.fec_rate = 0.3;
  k.physical[0].tx_gain_db = 31;
  CHECK_THROWS_AS(k.validate(), InvariantViolation);
  k.physical[0].tx_gain_db = 30;
  k.transport[0].rate_pps = -1;
  CHECK_THROWS_AS(k.validate(), InvariantViolation);
  CHECK(gain_db_to_mw(30) == doctest::Approx(1000));
  CHECK(mw_to_gain_db(gain_db_to_mw(12.5)) == doctest::Approx(12.5));
}

TEST_CASE("transport tick runs on its period and reads the path duals") {
  Bound b("programs/cp1.wnos", "scenarios/scenario2.txt");
  NodeStack n(0);
  n.sourced_sessions = {0};
  n.install(b.rp, true, false);
  n.knobs.transport[0].rate_pps = 100;
  n.registers.received_duals[0][0] = {0.2, 0};
  n.registers.received_duals[0][1] = {0.3, 0};
  TickResult r = n.tick(b.rp, 0);
  CHECK(r.transport_ran);
  // w / sum(lambda) packets per slot, converted to packets per second.
  CHECK(n.knobs.transport[0].rate_pps == doctest::Approx(2.0 / 0.01));
  CHECK_FALSE(n.tick(b.rp, 1).transport_ran);
  CHECK(n.tick(b.rp, 30).transport_ran);
}

TEST_CASE("stale registers hold the knobs") {
  std::string text = read_text(source_path("programs/cp1.wnos")) + "nt.set('staleness', 5)\n";
  Compiled c = compile_text(text);
  Scenario s = load_scenario(source_path("scenarios/scenario2.txt"));
  NetworkSchema schema = build_default_schema();
  RuntimeProgram rp = bind_program(c, schema, topology_of(s), s.channel);
  NodeStack n(0);
  n.sourced_sessions = {0};
  n.install(rp, true, false);
  n.knobs.transport[0].rate_pps = 42;
  n.registers.received_duals[0][0] = {0.2, 0};
  n.registers.received_duals[0][1] = {0.3, 0};
  n.tick(rp, 30);
  CHECK(n.knobs.transport[0].rate_pps == 42);
  CHECK(n.registers.stale_events == 1);
}

TEST_CASE("receivers update duals and address reports") {
  Bound b("programs/cp1.wnos", "scenarios/scenario2.txt");
  NodeStack rx(2);
  rx.rx_links = {1};
  rx.registers.incoming_capacity[1] = 1.0;
  rx.registers.session_rate[0] = 4.0;
  std::vector<int> link_tx{0, 1, 3, 4};
  std::vector<std::vector<int>> ses_of_link{{0}, {0}, {1}, {1}};
  std::vector<std::vector<int>> paths{{0, 1}, {2, 3}};
  std::vector<std::vector<int>> same_band{{3}, {2}, {1}, {0}};
  auto msgs = rx.update_duals(b.rp, 0, 1, link_tx, ses_of_link, paths, same_band);
  // lambda = 0.05 * (4 - 1) / 30.
  CHECK(rx.registers.lambda[0][1] == doctest::Approx(0.005));
  int duals = 0, grads = 0;
  for (const auto& m : msgs) {
    if (m.kind == MessageKind::dual_report) {
      ++duals;
      if (m.target == 1) CHECK(m.hop_budget == 1);
      if (m.target == 0) CHECK(m.hop_budget == 2);
    } else {
      ++grads;
      CHECK(m.target == 3);
      CHECK(m.payload > 0);
    }
  }
  CHECK(duals == 2);
  CHECK(grads == 1);
}
