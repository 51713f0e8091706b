#include "wnos/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "wnos/errors.hpp"
#include "wnos/rng.hpp"

namespace wnos {

namespace {

constexpr double kMinRatePps = 1e-3;  // floor for log utilities of idle sessions

std::size_t sz(int i) { return static_cast<std::size_t>(i); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

long tail_start(std::size_t n, double fraction) {
  auto k = static_cast<long>(std::floor(static_cast<double>(n) * fraction));
  return static_cast<long>(n) - std::max(1L, k);
}

Bounds param_bounds(const Compiled& c, const NetworkSchema& schema, const std::string& param) {
  auto it = c.program.base_bounds.find(param);
  if (it != c.program.base_bounds.end()) return it->second;
  const auto& info = *schema.at(param).param;
  return {info.lo, info.hi};
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::wnos_tp: return "WNOS-T-P";
    case Scheme::wnos_t: return "WNOS-T";
    case Scheme::wnos_p: return "WNOS-P";
    case Scheme::no_control: return "NoControl";
    case Scheme::best_response: return "BestResponse";
  }
  return "?";
}

const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> v{Scheme::wnos_tp, Scheme::wnos_t, Scheme::wnos_p, Scheme::no_control,
                                     Scheme::best_response};
  return v;
}

Scheme parse_scheme(const std::string& text) {
  for (Scheme s : all_schemes())
    if (to_string(s) == text) return s;
  throw ValidationError("unknown scheme '" + text + "' (WNOS-T-P, WNOS-T, WNOS-P, NoControl, BestResponse)");
}

TopologyView topology_of(const Scenario& s) {
  TopologyView t;
  t.nodes = static_cast<int>(s.nodes.size());
  for (const auto& l : s.links) t.links.emplace_back(l.tx, l.rx);
  for (const auto& ss : s.sessions) t.paths.push_back(ss.path);
  return t;
}

double utility_gain_pct(double u, double base, Sense sense) {
  double d = sense == Sense::maximize ? u - base : base - u;
  return 100.0 * d / std::max(std::abs(base), 1e-12);
}

MetricsLog simulate(const Compiled& compiled, const NetworkSchema& schema, const Scenario& sc,
                    const RunOptions& opt) {
  TopologyView topo = topology_of(sc);
  RuntimeProgram prog = bind_program(compiled, schema, topo, sc.channel);
  ChannelState ch = sc.channel_state();
  const double slot = sc.channel.slot_seconds;
  const int L = static_cast<int>(sc.links.size());
  const int S = static_cast<int>(sc.sessions.size());
  const int N = static_cast<int>(sc.nodes.size());
  const long T = opt.duration >= 0 ? opt.duration : sc.duration;

  bool ctrl_t = opt.scheme == Scheme::wnos_tp || opt.scheme == Scheme::wnos_t;
  bool ctrl_p = opt.scheme == Scheme::wnos_tp || opt.scheme == Scheme::wnos_p;
  if (ctrl_t && S > 0 && !prog.transport)
    throw IncompatibleProgram("scheme " + to_string(opt.scheme) + " needs a transport role for sessions");
  if (ctrl_p && L > 0 && !prog.physical)
    throw IncompatibleProgram("scheme " + to_string(opt.scheme) + " needs a physical role for links");

  // Static wiring.
  std::vector<int> link_tx(sz(L)), link_rx(sz(L));
  std::vector<std::vector<int>> same_band(sz(L)), sessions_of_link(sz(L)), paths(sz(S));
  for (int l = 0; l < L; ++l) {
    link_tx[sz(l)] = sc.links[sz(l)].tx;
    link_rx[sz(l)] = sc.links[sz(l)].rx;
    for (int j = 0; j < L; ++j)
      if (j != l && sc.links[sz(j)].band == sc.links[sz(l)].band) same_band[sz(l)].push_back(j);
  }
  for (int s = 0; s < S; ++s) {
    paths[sz(s)] = sc.sessions[sz(s)].path;
    for (int l : paths[sz(s)]) sessions_of_link[sz(l)].push_back(s);
  }

  std::vector<NodeStack> nodes;
  nodes.reserve(sz(N));
  for (int n = 0; n < N; ++n) nodes.emplace_back(n);
  for (int s = 0; s < S; ++s) nodes[sz(sc.sessions[sz(s)].src)].sourced_sessions.push_back(s);
  for (int l = 0; l < L; ++l) {
    nodes[sz(link_tx[sz(l)])].tx_links.push_back(l);
    nodes[sz(link_rx[sz(l)])].rx_links.push_back(l);
  }

  // Random operating points are drawn for every scheme in the same order,
  // so runs sharing a seed are paired.
  Rng rng(opt.seed);
  Bounds rate_b = param_bounds(compiled, schema, "sesrate");
  std::vector<double> rand_rate(sz(S)), rand_gain(sz(L));
  for (auto& r : rand_rate) r = rng.uniform(rate_b.lo, rate_b.hi);
  for (auto& g : rand_gain) g = rng.uniform(0.0, 30.0);

  for (int s = 0; s < S; ++s) {
    double rate = rand_rate[sz(s)];
    if (opt.scheme == Scheme::best_response) rate = rate_b.hi;
    if (ctrl_t) {
      Bounds b = prog.bounds_for(*prog.transport, s);
      rate = opt.random_init ? std::clamp(rate, b.lo, b.hi) : 0.5 * (b.lo + b.hi);
    }
    nodes[sz(sc.sessions[sz(s)].src)].knobs.transport[s] = {rate / slot, 64, sc.channel.packet_bits};
  }
  for (int l = 0; l < L; ++l) {
    double db = rand_gain[sz(l)];
    if (opt.scheme == Scheme::best_response) db = 30.0;
    if (ctrl_p) {
      Bounds b = prog.bounds_for(*prog.physical, l);
      db = std::clamp(opt.random_init ? db : 15.0, mw_to_gain_db(b.lo), mw_to_gain_db(b.hi));
    }
    auto& k = nodes[sz(link_tx[sz(l)])].knobs.physical[l];
    k.tx_gain_db = db;
    k.band = sc.links[sz(l)].band;
  }
  for (auto& n : nodes) {
    n.knobs.fec_rate = sc.channel.fec_rate;
    for (int s : n.sourced_sessions) n.knobs.next_hop[s] = link_rx[sz(paths[sz(s)].front())];
    n.install(prog, ctrl_t, ctrl_p);
    for (int l : n.tx_links)
      for (int v : same_band[sz(l)]) n.registers.cross_gain[l][v] = ch.gain[sz(l)][sz(v)];
  }

  Expr utility = instantiate_scalar(compiled.spec.utility, compiled.spec, schema, prog.pool);
  int lambda_family = prog.duals.empty() ? -1 : prog.duals.front().family;

  MetricsLog log;
  log.scheme = to_string(opt.scheme);
  log.seed = opt.seed;
  log.sense = compiled.spec.sense;
  auto& st = log.stats;

  std::vector<double> activity(sz(L), 1.0), powers(sz(L)), cap(sz(L));
  std::vector<std::vector<double>> queue(sz(L), std::vector<double>(sz(S), 0.0));
  std::vector<double> remaining(sz(S));
  for (int s = 0; s < S; ++s) {
    long pc = sc.sessions[sz(s)].packet_count;
    remaining[sz(s)] = pc < 0 ? INFINITY : static_cast<double>(pc);
  }
  std::vector<SignalingMessage> in_flight;

  auto rate_of = [&](int s) { return nodes[sz(sc.sessions[sz(s)].src)].knobs.transport.at(s).rate_pps; };

  for (long t = 1; t <= T; ++t) {
    SlotRecord rec;
    rec.slot = t;

    // (1) capacities
    for (int l = 0; l < L; ++l)
      powers[sz(l)] = gain_db_to_mw(nodes[sz(link_tx[sz(l)])].knobs.physical.at(l).tx_gain_db);
    std::vector<double> interference(sz(L)), sinr(sz(L));
    for (int l = 0; l < L; ++l) {
      interference[sz(l)] = ch.interference(sz(l), powers, activity);
      sinr[sz(l)] = ch.sinr(sz(l), powers, activity);
      cap[sz(l)] = capacity_from_sinr(ch.model, sinr[sz(l)]);
    }

    // (2) injection and delivery
    std::vector<double> offered(sz(S), 0.0);
    for (int s = 0; s < S; ++s) {
      if (remaining[sz(s)] <= 0) continue;
      double amt = std::min(rate_of(s) * slot, remaining[sz(s)]);
      offered[sz(s)] = rate_of(s) * slot;
      remaining[sz(s)] -= amt;
      queue[sz(paths[sz(s)].front())][sz(s)] += amt;
      st.injected += amt;
    }
    std::vector<std::vector<double>> arrivals(sz(L), std::vector<double>(sz(S), 0.0));
    std::vector<double> delivered(sz(S), 0.0);
    for (int l = 0; l < L; ++l) {
      auto& q = queue[sz(l)];
      double total = std::accumulate(q.begin(), q.end(), 0.0);
      double served = std::min(total, cap[sz(l)]);
      double frac = total > 0 ? served / total : 0.0;
      for (int s = 0; s < S; ++s) {
        double m = q[sz(s)] * frac;
        if (m <= 0) continue;
        q[sz(s)] -= m;
        const auto& path = paths[sz(s)];
        auto pos = std::find(path.begin(), path.end(), l) - path.begin();
        if (pos + 1 < static_cast<long>(path.size())) arrivals[sz(path[sz(static_cast<int>(pos + 1))])][sz(s)] += m;
        else delivered[sz(s)] += m;
      }
      activity[sz(l)] = cap[sz(l)] > 0 ? served / cap[sz(l)] : 0.0;
    }
    double queued = 0.0;
    for (int l = 0; l < L; ++l)
      for (int s = 0; s < S; ++s) {
        queue[sz(l)][sz(s)] += arrivals[sz(l)][sz(s)];
        queued += queue[sz(l)][sz(s)];
      }
    for (double d : delivered) st.delivered += d;
    st.queued = queued;
    if (std::abs(st.injected - st.delivered - st.queued) > 1e-6 * std::max(1.0, st.injected))
      throw InvariantViolation("packet conservation broken at slot " + std::to_string(t));

    // (3) registers and dual updates at the receivers
    for (int l = 0; l < L; ++l) {
      auto& tx = nodes[sz(link_tx[sz(l)])].registers;
      tx.own_gain[l] = ch.gain[sz(l)][sz(l)];
      tx.noise_plus_interference[l] = interference[sz(l)];
      tx.sinr[l] = sinr[sz(l)];
      tx.activity[l] = activity[sz(l)];
      tx.queue_len[l] = std::accumulate(queue[sz(l)].begin(), queue[sz(l)].end(), 0.0);
      tx.measured_link_rate[l] = cap[sz(l)] * activity[sz(l)] / slot;
      for (int j : same_band[sz(l)]) tx.neighbor_powers[j] = powers[sz(j)];
      auto& rx = nodes[sz(link_rx[sz(l)])].registers;
      rx.incoming_capacity[l] = cap[sz(l)];
      rx.incoming_sinr[l] = sinr[sz(l)];
      rx.incoming_interference[l] = interference[sz(l)];
      for (int s : sessions_of_link[sz(l)]) rx.session_rate[s] = offered[sz(s)];
    }
    long k = (t + prog.transport_period - 1) / prog.transport_period;
    for (auto& n : nodes) {
      if (n.rx_links.empty()) continue;
      auto msgs = n.update_duals(prog, t, k, link_tx, sessions_of_link, paths, same_band);
      st.messages_sent += static_cast<long>(msgs.size());
      in_flight.insert(in_flight.end(), msgs.begin(), msgs.end());
    }

    // (4) one hop of signaling
    std::vector<SignalingMessage> still;
    for (auto& m : in_flight) {
      if (--m.hop_budget > 0) {
        still.push_back(m);
        continue;
      }
      nodes[sz(m.target)].handle_signal(m);
      ++st.messages_delivered;
    }
    in_flight.swap(still);

    // (5) node ticks
    for (auto& n : nodes) {
      TickResult r = n.tick(prog, t);
      rec.transport_ran = rec.transport_ran || r.transport_ran;
      rec.physical_ran = rec.physical_ran || r.physical_ran;
      st.knob_writes += r.knob_writes;
    }
    st.transport_ticks += rec.transport_ran;
    st.physical_ticks += rec.physical_ran;

    // Metrics from the primals in effect during the slot.
    rec.throughput_pps.resize(sz(S));
    for (int s = 0; s < S; ++s) rec.throughput_pps[sz(s)] = delivered[sz(s)] / slot;
    rec.node_power_mw.assign(sz(N), 0.0);
    rec.link_power_mw = powers;
    rec.link_capacity_pps.resize(sz(L));
    rec.link_rate_pps.assign(sz(L), 0.0);
    rec.lambda.assign(sz(L), 0.0);
    for (int l = 0; l < L; ++l) {
      rec.node_power_mw[sz(link_tx[sz(l)])] += powers[sz(l)];
      rec.link_capacity_pps[sz(l)] = cap[sz(l)] / slot;
      for (int s : sessions_of_link[sz(l)]) rec.link_rate_pps[sz(l)] += offered[sz(s)] / slot;
      if (lambda_family >= 0) {
        const auto& lam = nodes[sz(link_rx[sz(l)])].registers.lambda;
        auto f = lam.find(lambda_family);
        if (f != lam.end() && f->second.count(l)) rec.lambda[sz(l)] = f->second.at(l);
      }
    }
    rec.utility = evaluate(utility, [&](const VarKey& key) -> std::optional<double> {
      if (key.index < 0) return std::nullopt;
      if (key.name == "sesrate" && key.index < S) return std::max(rec.throughput_pps[sz(key.index)], kMinRatePps);
      if (key.name == "lnkpwr" && key.index < L) return powers[sz(key.index)];
      if (key.name == "lnkcap" && key.index < L) return rec.link_capacity_pps[sz(key.index)];
      return std::nullopt;
    });

    if (opt.record_state) {
      for (const auto& n : nodes) {
        nlohmann::json j;
        j["slot"] = t;
        j["node"] = n.id();
        nlohmann::json rates = nlohmann::json::object(), gains = nlohmann::json::object(),
                       lams = nlohmann::json::object();
        for (const auto& [s, kn] : n.knobs.transport) rates[std::to_string(s)] = kn.rate_pps;
        for (const auto& [l, kn] : n.knobs.physical) gains[std::to_string(l)] = kn.tx_gain_db;
        for (const auto& [fam, m] : n.registers.lambda)
          for (const auto& [l, v] : m) lams[std::to_string(fam) + ":" + std::to_string(l)] = v;
        j["rate_pps"] = rates;
        j["tx_gain_db"] = gains;
        j["lambda"] = lams;
        log.state_lines.push_back(j.dump());
      }
    }
    log.slots.push_back(std::move(rec));
  }

  for (const auto& n : nodes) {
    st.rejected += n.registers.rejected;
    st.duplicates += n.registers.duplicates;
    st.unknown += n.registers.unknown;
    st.stale_events += n.registers.stale_events;
  }
  return log;
}

std::string MetricsLog::csv() const {
  std::string out = "slot,session_id,throughput_pps,node_id,tx_power_mw,link_id,lambda,utility\n";
  for (const auto& r : slots) {
    std::size_t rows = std::max({r.throughput_pps.size(), r.node_power_mw.size(), r.lambda.size(), std::size_t{1}});
    std::string u = fmt(r.utility);
    for (std::size_t i = 0; i < rows; ++i) {
      out += std::to_string(r.slot);
      if (i < r.throughput_pps.size()) out += "," + std::to_string(i) + "," + fmt(r.throughput_pps[i]);
      else out += ",,";
      if (i < r.node_power_mw.size()) out += "," + std::to_string(i) + "," + fmt(r.node_power_mw[i]);
      else out += ",,";
      if (i < r.lambda.size()) out += "," + std::to_string(i) + "," + fmt(r.lambda[i]);
      else out += ",,";
      out += "," + u + "\n";
    }
  }
  return out;
}

std::string MetricsLog::state_jsonl() const {
  std::string out;
  for (const auto& l : state_lines) out += l + "\n";
  return out;
}

double MetricsLog::mean_utility(double fraction) const {
  if (slots.empty()) return 0.0;
  double s = 0.0;
  long b = tail_start(slots.size(), fraction);
  for (std::size_t i = static_cast<std::size_t>(b); i < slots.size(); ++i) s += slots[i].utility;
  return s / static_cast<double>(slots.size() - static_cast<std::size_t>(b));
}

double MetricsLog::mean_throughput(int session, double fraction) const {
  if (slots.empty()) return 0.0;
  double s = 0.0;
  long b = tail_start(slots.size(), fraction);
  for (std::size_t i = static_cast<std::size_t>(b); i < slots.size(); ++i)
    s += slots[i].throughput_pps.at(static_cast<std::size_t>(session));
  return s / static_cast<double>(slots.size() - static_cast<std::size_t>(b));
}

double MetricsLog::mean_total_power(double fraction) const {
  if (slots.empty()) return 0.0;
  double s = 0.0;
  long b = tail_start(slots.size(), fraction);
  for (std::size_t i = static_cast<std::size_t>(b); i < slots.size(); ++i)
    for (double p : slots[i].link_power_mw) s += p;
  return s / static_cast<double>(slots.size() - static_cast<std::size_t>(b));
}

std::vector<CompareRow> compare(const Compiled& compiled, const NetworkSchema& schema, const Scenario& scenario,
                                const std::vector<Scheme>& schemes, std::uint64_t seed0, int runs, long duration) {
  if (runs < 1) throw ValidationError("compare needs at least one run");
  std::vector<CompareRow> rows;
  for (Scheme s : schemes) rows.push_back({s, 0.0, 0.0});
  for (int r = 0; r < runs; ++r) {
    RunOptions o;
    o.seed = seed0 + static_cast<std::uint64_t>(r);
    o.duration = duration;
    o.scheme = Scheme::no_control;
    double base = simulate(compiled, schema, scenario, o).mean_utility();
    std::map<Scheme, double> seen;
    for (auto& row : rows) {
      double u;
      if (row.scheme == Scheme::no_control) u = base;
      else if (seen.count(row.scheme)) u = seen[row.scheme];
      else {
        o.scheme = row.scheme;
        u = seen[row.scheme] = simulate(compiled, schema, scenario, o).mean_utility();
      }
      row.mean_utility += u / runs;
      row.gain_pct += utility_gain_pct(u, base, compiled.spec.sense) / runs;
    }
  }
  return rows;
}

std::string compare_tsv(const std::vector<CompareRow>& rows) {
  std::string out = "scheme\tmean_utility\tgain_pct\n";
  for (const auto& r : rows) out += to_string(r.scheme) + "\t" + fmt(r.mean_utility) + "\t" + fmt(r.gain_pct) + "\n";
  return out;
}

}  // namespace wnos
