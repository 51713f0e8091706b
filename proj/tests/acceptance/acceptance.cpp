// One PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "wnos/errors.hpp"
#include "wnos/pipeline.hpp"
#include "wnos/rng.hpp"
#include "wnos/sim.hpp"

namespace fs = std::filesystem;
using namespace wnos;

namespace {

std::string src(const std::string& rel) { return std::string(WNOS_SOURCE_DIR) + "/" + rel; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream b;
  b << f.rdbuf();
  return b.str();
}

const NetworkSchema& schema() {
  static const NetworkSchema s = build_default_schema();
  return s;
}

// 1. Toy program decomposes into the expected transport and physical parts.
bool toy_decomposition(std::string& detail) {
  Compiled c = compile_file(src("programs/toy.wnos"));
  const std::vector<std::vector<int>> links_of_session{{0, 1}, {0, 2}, {1, 2}};
  int checked = 0;
  for (const auto& s : c.subproblems) {
    int e = s.entity->index;
    Expr want;
    if (s.layer == Layer::transport) {
      Expr r = Expr::var("sesrate", e);
      std::vector<Expr> parts{r};
      for (int l : links_of_session[static_cast<std::size_t>(e)]) parts.push_back(-(Expr::var("lbd", l) * r));
      want = Expr::add(parts);
    } else if (s.layer == Layer::physical) {
      want = Expr::var("lbd", e) * Expr::var("lnkcap", e);
    } else {
      continue;
    }
    if (!canonically_equal(s.expression(), want)) {
      detail = "mismatch in " + to_string(*s.entity) + ": " + s.expression().str();
      return false;
    }
    ++checked;
  }
  detail = std::to_string(checked) + " subproblems match";
  return checked == 6;
}

// 2. Transport subproblems read exactly the duals of Links-of-Session.
bool dual_indices(std::string& detail) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Compiled c = compile_file(src("programs/jocp.wnos"), seed);
    for (const auto& s : c.subproblems) {
      if (s.layer != Layer::transport) continue;
      std::vector<int> idx;
      for (const auto& d : s.duals) idx.push_back(d.index);
      if (idx != c.pool.local("seslnk", s.entity->index)->members) {
        detail = "seed " + std::to_string(seed) + " " + to_string(*s.entity);
        return false;
      }
    }
  }
  Compiled t = compile_file(src("tests/golden/table1.wnos"));
  const std::vector<int> want{0, 3, 4, 7, 9, 10, 11, 12, 13, 14, 18, 19};
  if (t.pool.local("seslnk", 4)->members != want) {
    detail = "pinned table: wrong Links-of-Session for session 4";
    return false;
  }
  detail = "100 seeds plus the pinned table";
  return true;
}

// 3. Instantiation rules over random small configurations.
bool instantiation_rules(std::string& detail) {
  Rng meta(2024);
  const Element& el = schema().at("lnkses");
  for (int trial = 0; trial < 1000; ++trial) {
    DIConfig cfg;
    cfg.n_global = 1 + static_cast<int>(meta.below(6));
    cfg.n_local = 1 + static_cast<int>(meta.below(static_cast<std::uint64_t>(cfg.n_global)));
    cfg.rng_seed = meta.next();
    InstancePool pool(cfg);
    Instance mother = instantiate_global(schema().at("netses"), cfg);
    pool.add_global(mother);
    Rng rng(cfg.rng_seed);
    const std::uint64_t cap = binomial(static_cast<std::uint64_t>(cfg.n_global), static_cast<std::uint64_t>(cfg.n_local));
    std::set<std::vector<int>> seen;
    for (std::uint64_t i = 0; i <= cap; ++i) {
      try {
        Instance inst = instantiate_local(el, static_cast<int>(i), mother, pool, cfg, rng);
        if (i == cap) {
          detail = "no exhaustion at C(n,k)";
          return false;
        }
        if (inst.members.size() != static_cast<std::size_t>(cfg.n_local) || !seen.insert(inst.members).second) {
          detail = "rule violated in trial " + std::to_string(trial);
          return false;
        }
        std::vector<int> shuffled = inst.members;
        std::reverse(shuffled.begin(), shuffled.end());
        if (hash_id(shuffled) != inst.hash) {
          detail = "hash depends on order";
          return false;
        }
        pool.add_local(inst);
      } catch (const ExhaustedResampling&) {
        if (i != cap) {
          detail = "early exhaustion in trial " + std::to_string(trial);
          return false;
        }
      }
    }
  }
  detail = "1000 configurations";
  return true;
}

// 4. Dual decomposition on the toy problem with unit capacities approaches
//    the centralized optimum found by exhaustive grid search.
bool toy_convergence(std::string& detail) {
  const double lo = 0.01, hi = 10.0, cap = 1.0;
  const std::vector<std::vector<int>> sessions_of_link{{0, 1}, {0, 2}, {1, 2}};
  auto feasible = [&](const std::vector<double>& x, double tol) {
    for (const auto& l : sessions_of_link)
      if (x[static_cast<std::size_t>(l[0])] + x[static_cast<std::size_t>(l[1])] > cap * (1 + tol)) return false;
    return true;
  };
  // Grid oracle, 200 points per dimension.
  const int n = 200;
  double grid_best = 0.0;
  std::vector<double> g(3);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        g = {lo + (hi - lo) * a / (n - 1), lo + (hi - lo) * b / (n - 1), lo + (hi - lo) * c / (n - 1)};
        if (feasible(g, 0)) grid_best = std::max(grid_best, g[0] + g[1] + g[2]);
      }

  Compiled comp = compile_file(src("programs/toy.wnos"));
  const SolverPlan* plan = nullptr;
  for (const auto& p : comp.plans)
    if (p.layer == Layer::transport) plan = &p;
  const DualUpdateRule& rule = comp.duals.front();
  std::vector<double> lam(3, 0.0), x(3, lo), avg(3, 0.0);
  double weight = 0.0;
  const long iters = 20000;
  for (long k = 1; k <= iters; ++k) {
    for (int s = 0; s < 3; ++s) {
      LocalState st;
      double sum = 0.0;
      for (int l : comp.pool.local("seslnk", s)->members) sum += lam[static_cast<std::size_t>(l)];
      st.dual_sums = {sum};
      st.registers[plan->variable] = x[static_cast<std::size_t>(s)];
      x[static_cast<std::size_t>(s)] = solve_local(*plan, st, plan->bounds);
    }
    for (int l = 0; l < 3; ++l) {
      const auto& m = sessions_of_link[static_cast<std::size_t>(l)];
      double slack = x[static_cast<std::size_t>(m[0])] + x[static_cast<std::size_t>(m[1])] - cap;
      lam[static_cast<std::size_t>(l)] = dual_update(lam[static_cast<std::size_t>(l)], slack, rule.step, k);
    }
    // Primal average over the second half of the iterations.
    if (k <= iters / 2) continue;
    for (int s = 0; s < 3; ++s) avg[static_cast<std::size_t>(s)] += x[static_cast<std::size_t>(s)];
    weight += 1.0;
  }
  for (double& v : avg) v /= weight;
  double u = avg[0] + avg[1] + avg[2];
  double worst = 0.0;
  for (const auto& l : sessions_of_link)
    worst = std::max(worst, avg[static_cast<std::size_t>(l[0])] + avg[static_cast<std::size_t>(l[1])] - cap);
  char buf[160];
  std::snprintf(buf, sizeof buf, "distributed %.4f vs grid %.4f, max violation %.4f", u, grid_best, worst);
  detail = buf;
  return u >= 0.98 * grid_best && worst <= 0.02 * cap;
}

// 5. Capacity gradients match central differences.
bool capacity_gradient(std::string& detail) {
  Scenario s = load_scenario(src("scenarios/scenario4.txt"));
  ChannelState ch = s.channel_state();
  Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p(ch.size());
    for (double& v : p) v = rng.uniform(1, 1000);
    std::size_t l = rng.below(ch.size()), k = rng.below(ch.size());
    std::map<VarKey, double> at;
    for (std::size_t j = 0; j < p.size(); ++j) at[VarKey{"lnkpwr", static_cast<int>(j)}] = p[j];
    double sym = evaluate(derivative(capacity_expr(ch, l), VarKey{"lnkpwr", static_cast<int>(k)}), at);
    const double h = 1e-5;
    auto cap_at = [&](double v) {
      auto q = p;
      q[k] = v;
      return ch.capacity(l, q);
    };
    double fd = (cap_at(p[k] + h) - cap_at(p[k] - h)) / (2 * h);
    worst = std::max(worst, std::abs(sym - fd) / std::max(1.0, std::abs(fd)));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max scaled error %.2e over 100 points", worst);
  detail = buf;
  return worst <= 1e-6;
}

// 6. Gains over NoControl grow with interference; both single-layer
//    schemes gain; BestResponse holds full power.
bool scheme_gains(std::string& detail) {
  Compiled c = compile_file(src("programs/cp1.wnos"));
  std::vector<double> tp;
  bool single_layer = true;
  std::string text;
  for (const char* name : {"scenario1", "scenario2", "scenario3"}) {
    Scenario s = load_scenario(src(std::string("scenarios/") + name + ".txt"));
    auto rows = compare(c, schema(), s, {Scheme::wnos_tp, Scheme::wnos_t, Scheme::wnos_p}, 1, 10);
    tp.push_back(rows[0].gain_pct);
    single_layer = single_layer && rows[1].gain_pct > 0 && rows[2].gain_pct > 0;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s%s T-P %.1f%% T %.1f%% P %.1f%%", text.empty() ? "" : "; ", name,
                  rows[0].gain_pct, rows[1].gain_pct, rows[2].gain_pct);
    text += buf;
  }
  Scenario s1 = load_scenario(src("scenarios/scenario1.txt"));
  RunOptions o;
  o.scheme = Scheme::best_response;
  MetricsLog br = simulate(c, schema(), s1, o);
  bool full = true;
  for (const auto& r : br.slots)
    for (double p : r.link_power_mw) full = full && std::abs(p - 1000) < 1e-9;
  detail = text + (full ? "; BestResponse at 1000 mW" : "; BestResponse below full power");
  return tp[0] > 0 && tp[0] < tp[1] && tp[1] < tp[2] && single_layer && full;
}

// 7. Power cap of session 1 holds in steady state.
bool power_cap(std::string& detail) {
  Compiled c = compile_file(src("programs/cp3.wnos"));
  Scenario s = load_scenario(src("scenarios/scenario2.txt"));
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunOptions o;
    o.scheme = Scheme::wnos_tp;
    o.seed = seed;
    o.random_init = true;
    MetricsLog log = simulate(c, schema(), s, o);
    for (std::size_t i = log.slots.size() / 2; i < log.slots.size(); ++i)
      for (int l : s.sessions[1].path) worst = std::max(worst, log.slots[i].link_power_mw[static_cast<std::size_t>(l)]);
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max power on session 1 links %.4f mW over 10 seeds", worst);
  detail = buf;
  return worst <= 5.0 + 1e-9;
}

// 8. Power minimization keeps the rate target with less power.
bool power_minimization(std::string& detail) {
  Scenario s = load_scenario(src("scenarios/scenario5.txt"));
  RunOptions o;
  o.scheme = Scheme::wnos_tp;
  MetricsLog pm = simulate(compile_file(src("programs/powermin.wnos")), schema(), s, o);
  MetricsLog cp = simulate(compile_file(src("programs/cp1.wnos")), schema(), s, o);
  double low = 1e300;
  for (std::size_t i = 0; i < s.sessions.size(); ++i) low = std::min(low, pm.mean_throughput(static_cast<int>(i)));
  char buf[128];
  std::snprintf(buf, sizeof buf, "min session throughput %.1f pps; power %.1f vs %.1f mW", low,
                pm.mean_total_power(), cp.mean_total_power());
  detail = buf;
  return low >= 90 && pm.mean_total_power() < cp.mean_total_power();
}

// 9. Transport runs once per 30 physical ticks in every 300-slot window.
bool timescales(std::string& detail) {
  Scenario s = load_scenario(src("scenarios/scenario2.txt"));
  RunOptions o;
  o.scheme = Scheme::wnos_tp;
  MetricsLog log = simulate(compile_file(src("programs/cp1.wnos")), schema(), s, o);
  int windows = 0;
  for (std::size_t b = 0; b + 300 <= log.slots.size(); b += 300) {
    long t = 0, p = 0;
    for (std::size_t i = b; i < b + 300; ++i) {
      t += log.slots[i].transport_ran;
      p += log.slots[i].physical_ran;
    }
    if (std::abs(t * 30 - p) > 1) {
      detail = "window at slot " + std::to_string(b) + ": " + std::to_string(t) + " vs " + std::to_string(p);
      return false;
    }
    ++windows;
  }
  detail = std::to_string(windows) + " windows";
  return windows > 0;
}

// 10. Two CLI runs with the same seed write identical CSVs.
bool reproducible(std::string& detail) {
  fs::path base = fs::temp_directory_path() / "wnos_acceptance";
  fs::remove_all(base);
  std::vector<std::string> outs;
  for (const char* run : {"a", "b"}) {
    fs::path d = base / run;
    std::string cmd = std::string("\"") + WNOS_KIT_EXE + "\" run --program \"" + src("programs/cp1.wnos") +
                      "\" --scenario \"" + src("scenarios/scenario2.txt") +
                      "\" --scheme WNOS-T-P --seed 42 --out \"" + d.string() + "\" >/dev/null 2>&1";
    int st = std::system(cmd.c_str());
    if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) {
      detail = "wnos_kit failed";
      return false;
    }
    outs.push_back(slurp(d / "WNOS_T_P.csv"));
  }
  detail = std::to_string(outs[0].size()) + " bytes each";
  return !outs[0].empty() && outs[0] == outs[1];
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<bool(std::string&)>>> criteria{
      {"toy decomposition", toy_decomposition},
      {"dual indices follow Links-of-Session", dual_indices},
      {"instantiation rules and exhaustion", instantiation_rules},
      {"toy convergence to the grid optimum", toy_convergence},
      {"capacity gradient", capacity_gradient},
      {"scheme gains grow with interference", scheme_gains},
      {"session 1 power cap", power_cap},
      {"power minimization", power_minimization},
      {"timescale separation", timescales},
      {"reproducible runs", reproducible},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = criteria[i].second(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    failed += !ok;
    std::printf("%s %zu %s: %s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].first, detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
