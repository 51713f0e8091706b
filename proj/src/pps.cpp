#include "wnos/pps.hpp"

#include <algorithm>
#include <cmath>

#include "wnos/errors.hpp"

namespace wnos {

std::string to_string(MessageKind k) { return k == MessageKind::dual_report ? "dual_report" : "gradient_report"; }

double gain_db_to_mw(double db) { return std::pow(10.0, db / 10.0); }
double mw_to_gain_db(double mw) { return 10.0 * std::log10(mw); }

void LayerKnobs::validate() const {
  constexpr double eps = 1e-9;
  bool fec_ok = false;
  for (double f : {0.1, 0.2, 0.3, 0.4}) fec_ok = fec_ok || std::abs(fec_rate - f) < eps;
  if (!fec_ok) throw InvariantViolation("fec rate " + format_number(fec_rate) + " is not in {0.1,0.2,0.3,0.4}");
  if (max_retx < 0) throw InvariantViolation("max_retx must be non-negative");
  for (const auto& [s, t] : transport)
    if (!std::isfinite(t.rate_pps) || t.rate_pps < 0 || !(t.window > 0) || !(t.packet_bits > 0))
      throw InvariantViolation("transport knobs of session " + std::to_string(s) + " out of range");
  for (const auto& [l, p] : physical)
    if (!(p.tx_gain_db >= -eps && p.tx_gain_db <= 30 + eps))
      throw InvariantViolation("tx gain " + format_number(p.tx_gain_db) + " dB of link " + std::to_string(l) +
                               " is outside [0, 30]");
}

InstancePool topology_pool(const TopologyView& topo, const NetworkSchema& schema) {
  InstancePool pool;
  auto seq = [](int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
  };
  int n_links = static_cast<int>(topo.links.size());
  int n_sessions = static_cast<int>(topo.paths.size());
  std::string nodes = schema.global_of(EntityType::node), links = schema.global_of(EntityType::link),
              sessions = schema.global_of(EntityType::session);
  if (topo.nodes > 0) pool.add_global(Instance{nodes, -1, seq(topo.nodes), 0, false});
  if (n_links > 0) pool.add_global(Instance{links, -1, seq(n_links), 0, false});
  if (n_sessions > 0) pool.add_global(Instance{sessions, -1, seq(n_sessions), 0, false});

  std::vector<std::vector<int>> ses_of_link(static_cast<std::size_t>(n_links));
  for (int s = 0; s < n_sessions; ++s)
    for (int l : topo.paths[static_cast<std::size_t>(s)]) ses_of_link[static_cast<std::size_t>(l)].push_back(s);
  std::vector<std::vector<int>> links_of_node(static_cast<std::size_t>(topo.nodes)),
      nbrs(static_cast<std::size_t>(topo.nodes));
  for (int l = 0; l < n_links; ++l) {
    auto [tx, rx] = topo.links[static_cast<std::size_t>(l)];
    links_of_node[static_cast<std::size_t>(tx)].push_back(l);
    nbrs[static_cast<std::size_t>(tx)].push_back(rx);
    nbrs[static_cast<std::size_t>(rx)].push_back(tx);
  }

  pool.describe("lnkses", links, sessions);
  pool.describe("seslnk", sessions, links);
  pool.describe("lnknd", nodes, links);
  pool.describe("nbrnd", nodes, nodes);
  for (int l = 0; l < n_links; ++l)
    pool.add_local(Instance{"lnkses", l, ses_of_link[static_cast<std::size_t>(l)], 0, false}, false);
  for (int s = 0; s < n_sessions; ++s)
    pool.add_local(Instance{"seslnk", s, topo.paths[static_cast<std::size_t>(s)], 0, false}, false);
  for (int n = 0; n < topo.nodes; ++n) {
    auto& nb = nbrs[static_cast<std::size_t>(n)];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    pool.add_local(Instance{"lnknd", n, links_of_node[static_cast<std::size_t>(n)], 0, false}, false);
    pool.add_local(Instance{"nbrnd", n, nb, 0, false}, false);
  }
  return pool;
}

std::vector<int> RuntimeProgram::resolve(const SetRef& set, int entity) const {
  switch (set.kind) {
    case SetRef::Kind::self:
      return {entity};
    case SetRef::Kind::global: {
      const Instance* g = pool.global(set.element);
      if (!g) throw IncompatibleProgram("topology has no '" + set.element + "'");
      return g->members;
    }
    case SetRef::Kind::local: {
      int owner = set.owner_is_self ? entity : set.owner;
      const Instance* i = pool.local(set.element, owner);
      if (!i)
        throw IncompatibleProgram("topology has no '" + set.element + "' instance for owner " + std::to_string(owner));
      return i->members;
    }
  }
  return {};
}

Bounds RuntimeProgram::bounds_for(const SolverPlan& plan, int entity) const {
  Bounds b = plan.bounds;
  for (const auto& o : compiled->program.overrides) {
    if (o.param != plan.variable) continue;
    std::vector<int> members = o.set.kind == SetRef::Kind::self ? std::vector<int>{o.entity} : resolve(o.set, -1);
    if (!std::binary_search(members.begin(), members.end(), entity)) continue;
    b.lo = std::max(b.lo, o.bounds.lo);
    b.hi = std::min(b.hi, o.bounds.hi);
  }
  if (b.lo > b.hi)
    throw IncompatibleProgram("bounds of '" + plan.variable + "' for entity " + std::to_string(entity) + " are empty");
  return b;
}

RuntimeProgram bind_program(const Compiled& compiled, const NetworkSchema& schema, const TopologyView& topo,
                            const ChannelModel& channel) {
  RuntimeProgram rp;
  rp.compiled = &compiled;
  rp.schema = &schema;
  rp.channel = channel;
  rp.pool = topology_pool(topo, schema);
  for (const auto& p : compiled.plans) {
    const SolverPlan** slot = nullptr;
    if (p.layer == Layer::transport && p.entity_type == EntityType::session) slot = &rp.transport;
    else if (p.layer == Layer::physical && p.entity_type == EntityType::link) slot = &rp.physical;
    else throw IncompatibleProgram("no runtime host for role " + p.role);
    if (*slot) throw IncompatibleProgram("several templates for role " + p.role + "; the runtime needs one");
    *slot = &p;
  }
  for (const auto& d : compiled.duals)
    if (d.set_element != schema.global_of(EntityType::link))
      throw IncompatibleProgram("constraint family " + std::to_string(d.family) + " is indexed by '" + d.set_element +
                                "'; link receivers only host link-indexed duals");
  rp.duals = compiled.duals;
  double ratio = compiled.spec.setting_number("timescale_ratio", 30);
  if (ratio < 1 || ratio != std::floor(ratio)) throw IncompatibleProgram("timescale_ratio must be a positive integer");
  rp.transport_period = static_cast<int>(ratio);
  rp.staleness_bound = static_cast<long>(compiled.spec.setting_number("staleness", 1000));

  int n_sessions = static_cast<int>(topo.paths.size());
  int n_links = static_cast<int>(topo.links.size());
  for (const auto& o : compiled.program.overrides) {
    EntityType holder = schema.at(o.param).param->holder;
    int limit = holder == EntityType::link ? n_links : holder == EntityType::session ? n_sessions : topo.nodes;
    if (o.set.kind == SetRef::Kind::self && o.entity >= limit)
      throw IncompatibleProgram("bounds of '" + o.param + "' target entity " + std::to_string(o.entity) +
                                " which the topology lacks");
    if (o.set.kind != SetRef::Kind::self) (void)rp.resolve(o.set, -1);
  }
  // Every coupling set of every plan must resolve for every entity.
  auto check = [&](const SolverPlan* p, int count) {
    if (!p) return;
    for (int e = 0; e < count; ++e) {
      for (const auto& t : p->coupling) (void)rp.resolve(t.set, e);
      (void)rp.bounds_for(*p, e);
    }
  };
  check(rp.transport, n_sessions);
  check(rp.physical, n_links);
  return rp;
}

double evaluate_runtime(const Expr& e, int entity, const RuntimeProgram& prog,
                        const std::function<std::optional<double>(const VarKey&)>& lookup) {
  auto rec = [&](const Expr& x) { return evaluate_runtime(x, entity, prog, lookup); };
  switch (e.kind()) {
    case ExprKind::constant:
      return e.value();
    case ExprKind::var_ref: {
      VarKey k = e.key().indexed() ? e.key() : VarKey{e.key().name, entity};
      auto v = lookup(k);
      if (!v) throw MissingParameter("no runtime value for '" + k.str() + "'");
      return *v;
    }
    case ExprKind::sum_over: {
      const std::string& el = e.element();
      SetRef ref;
      auto br = el.find('[');
      if (br != std::string::npos) {
        ref = SetRef{SetRef::Kind::local, el.substr(0, br), false, std::stoi(el.substr(br + 1))};
      } else if (prog.pool.global(el)) {
        ref = SetRef{SetRef::Kind::global, el, false, -1};
      } else {
        ref = SetRef{SetRef::Kind::local, el, true, -1};
      }
      double s = 0.0;
      for (int m : prog.resolve(ref, entity)) s += evaluate_runtime(e.child(0), m, prog, lookup);
      return s;
    }
    case ExprKind::add: {
      double s = 0.0;
      for (const auto& c : e.children()) s += rec(c);
      return s;
    }
    case ExprKind::product: {
      double s = 1.0;
      for (const auto& c : e.children()) s *= rec(c);
      return s;
    }
    case ExprKind::negate: return -rec(e.child(0));
    case ExprKind::log: return std::log(rec(e.child(0)));
    case ExprKind::sqrt: return std::sqrt(rec(e.child(0)));
    case ExprKind::quotient: return rec(e.child(0)) / rec(e.child(1));
  }
  return 0.0;
}

void NodeStack::install(const RuntimeProgram& prog, bool transport, bool physical) {
  decision = DecisionPlane{};
  decision.timescales[Layer::transport] = prog.transport_period;
  decision.timescales[Layer::physical] = prog.physical_period;
  if (transport && !sourced_sessions.empty()) {
    if (!prog.transport)
      throw RoleMismatch("node " + std::to_string(id_) + " sources sessions but the program has no transport role");
    for (int s : sourced_sessions)
      decision.installed[Layer::transport].push_back({prog.transport, s, prog.bounds_for(*prog.transport, s)});
  }
  if (physical && !tx_links.empty()) {
    if (!prog.physical)
      throw RoleMismatch("node " + std::to_string(id_) + " transmits but the program has no physical role");
    for (int l : tx_links)
      decision.installed[Layer::physical].push_back({prog.physical, l, prog.bounds_for(*prog.physical, l)});
  }
}

double NodeStack::dual_sum(const RuntimeProgram& prog, const LiftedDualTerm& term, int entity, long t) const {
  double s = 0.0;
  auto fam = registers.received_duals.find(term.family);
  for (int m : prog.resolve(term.set, entity)) {
    Received r;
    if (fam != registers.received_duals.end()) {
      auto it = fam->second.find(m);
      if (it != fam->second.end()) r = it->second;
    }
    long age = t - std::max(r.timestamp, 0L);
    if (age > prog.staleness_bound)
      throw StaleRegisters("dual of link " + std::to_string(m) + " is " + std::to_string(age) + " slots old");
    s += r.value;
  }
  return s;
}

std::vector<SignalingMessage> NodeStack::update_duals(const RuntimeProgram& prog, long t, long k,
                                                      const std::vector<int>& link_tx,
                                                      const std::vector<std::vector<int>>& sessions_of_link,
                                                      const std::vector<std::vector<int>>& paths,
                                                      const std::vector<std::vector<int>>& same_band) {
  std::vector<SignalingMessage> out;
  auto lookup = [&](const VarKey& key) -> std::optional<double> {
    if (key.name == "sesrate") {
      auto it = registers.session_rate.find(key.index);
      if (it != registers.session_rate.end()) return it->second;
    } else if (key.name == "lnkcap") {
      auto it = registers.incoming_capacity.find(key.index);
      if (it != registers.incoming_capacity.end()) return it->second;
    }
    return std::nullopt;
  };
  int price_family = -1;
  if (prog.physical && !prog.physical->coupling.empty()) price_family = prog.physical->coupling.front().family;

  for (int l : rx_links) {
    for (const auto& rule : prog.duals) {
      double slack = evaluate_runtime(rule.slack, l, prog, lookup);
      double& lam = registers.lambda[rule.family][l];
      // Spread each dual iteration over the slots of one transport period,
      // so a period moves lambda by alpha_k times the mean slack.
      lam = dual_update(lam, slack / prog.transport_period, rule.step, k);
      // Report to the transmitter (one hop) and to each session source,
      // as many hops upstream as the link is from it.
      std::map<int, int> targets{{link_tx[static_cast<std::size_t>(l)], 1}};
      for (int s : sessions_of_link[static_cast<std::size_t>(l)]) {
        const auto& path = paths[static_cast<std::size_t>(s)];
        int pos = static_cast<int>(std::find(path.begin(), path.end(), l) - path.begin());
        int src = link_tx[static_cast<std::size_t>(path.front())];
        auto [it, fresh] = targets.emplace(src, pos + 1);
        if (!fresh) it->second = std::min(it->second, pos + 1);
      }
      for (auto [node, hops] : targets)
        out.push_back({MessageKind::dual_report, l, rule.family, node, lam, hops, t});
    }
  }
  // Victim prices for same-band transmitters.
  if (price_family >= 0) {
    for (int l : rx_links) {
      double lam = registers.lambda[price_family][l];
      double sinr = registers.incoming_sinr.count(l) ? registers.incoming_sinr.at(l) : 0.0;
      double d = registers.incoming_interference.count(l) ? registers.incoming_interference.at(l) : 1.0;
      ChannelModel m = prog.channel;
      m.high_snr_approx = m.high_snr_approx || prog.physical->high_sinr;
      double price = victim_price_payload(m, lam, sinr, d);
      for (int j : same_band[static_cast<std::size_t>(l)])
        out.push_back({MessageKind::gradient_report, l, price_family, link_tx[static_cast<std::size_t>(j)], price, 1, t});
    }
  }
  return out;
}

bool NodeStack::handle_signal(const SignalingMessage& m) {
  if (!std::isfinite(m.payload) || (m.kind == MessageKind::dual_report && m.payload < 0)) {
    ++registers.rejected;
    return false;
  }
  auto key = std::make_tuple(static_cast<int>(m.kind), m.family, m.source, m.timestamp);
  if (registers.seen.count(key)) {
    ++registers.duplicates;
    return false;
  }
  registers.seen.insert(key);
  if (m.kind == MessageKind::dual_report) {
    auto& slot = registers.received_duals[m.family][m.source];
    if (m.timestamp >= slot.timestamp) slot = {m.payload, m.timestamp};
    return true;
  }
  bool known = false;
  for (const auto& [_, victims] : registers.cross_gain) known = known || victims.count(m.source);
  if (!known) {
    ++registers.unknown;
    return false;
  }
  auto& slot = registers.victim_prices[m.source];
  if (m.timestamp >= slot.timestamp) slot = {m.payload, m.timestamp};
  return true;
}

TickResult NodeStack::tick(const RuntimeProgram& prog, long t) {
  TickResult r;
  auto due = [&](Layer l) {
    auto it = decision.installed.find(l);
    return it != decision.installed.end() && !it->second.empty() && t % decision.timescales.at(l) == 0;
  };

  if (due(Layer::physical)) {
    r.physical_ran = true;
    for (const auto& ip : decision.installed.at(Layer::physical)) {
      int j = ip.entity;
      LocalState st;
      try {
        for (const auto& term : ip.plan->coupling) st.dual_sums.push_back(dual_sum(prog, term, j, t));
      } catch (const StaleRegisters&) {
        ++registers.stale_events;
        continue;
      }
      auto& knob = knobs.physical[j];
      double p = gain_db_to_mw(knob.tx_gain_db);
      st.registers[ip.plan->variable] = p;
      PhysicalRegisters pr;
      pr.model = prog.channel;
      pr.model.high_snr_approx = pr.model.high_snr_approx || ip.plan->high_sinr;
      pr.own_gain = registers.own_gain.at(j);
      pr.interference = registers.noise_plus_interference.at(j);
      double price = 0.0;
      for (const auto& [k, g] : registers.cross_gain[j]) {
        auto it = registers.victim_prices.find(k);
        if (it != registers.victim_prices.end()) price += it->second.value * g;
      }
      pr.victim_price = price * registers.activity[j];
      st.physical = pr;
      double next = solve_local(*ip.plan, st, ip.bounds);
      double db = std::clamp(mw_to_gain_db(next), 0.0, 30.0);
      if (db != knob.tx_gain_db) ++r.knob_writes;
      knob.tx_gain_db = db;
    }
  }

  if (due(Layer::transport)) {
    r.transport_ran = true;
    for (const auto& ip : decision.installed.at(Layer::transport)) {
      int s = ip.entity;
      LocalState st;
      try {
        for (const auto& term : ip.plan->coupling) st.dual_sums.push_back(dual_sum(prog, term, s, t));
      } catch (const StaleRegisters&) {
        ++registers.stale_events;
        continue;
      }
      auto& knob = knobs.transport[s];
      st.registers[ip.plan->variable] = knob.rate_pps * prog.channel.slot_seconds;
      double next = solve_local(*ip.plan, st, ip.bounds) / prog.channel.slot_seconds;
      if (next != knob.rate_pps) ++r.knob_writes;
      knob.rate_pps = next;
    }
  }
  knobs.validate();
  return r;
}

}  // namespace wnos
