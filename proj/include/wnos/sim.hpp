#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wnos/pipeline.hpp"
#include "wnos/pps.hpp"
#include "wnos/scenario.hpp"

namespace wnos {

enum class Scheme { wnos_tp, wnos_t, wnos_p, no_control, best_response };

std::string to_string(Scheme s);  // WNOS-T-P, WNOS-T, WNOS-P, NoControl, BestResponse
Scheme parse_scheme(const std::string& text);  // throws ValidationError
const std::vector<Scheme>& all_schemes();

struct RunOptions {
  Scheme scheme = Scheme::wnos_tp;
  std::uint64_t seed = 1;
  long duration = -1;       // slots; negative takes the scenario's
  bool random_init = false;   // controlled knobs start at the seeded draws, not the midpoint
  bool record_state = false;  // keep the per-node JSON lines
};

struct SlotRecord {
  long slot = 0;
  std::vector<double> throughput_pps;  // per session, delivered end to end
  std::vector<double> node_power_mw;   // per node, summed over its outgoing links
  std::vector<double> link_power_mw;
  std::vector<double> link_capacity_pps;
  std::vector<double> link_rate_pps;   // aggregate offered rate of the sessions crossing the link
  std::vector<double> lambda;          // per link, first constraint family
  double utility = 0.0;
  bool transport_ran = false;
  bool physical_ran = false;
};

struct RunStats {
  double injected = 0.0;
  double delivered = 0.0;
  double queued = 0.0;
  long messages_sent = 0;
  long messages_delivered = 0;
  long rejected = 0;
  long duplicates = 0;
  long unknown = 0;
  long stale_events = 0;
  long knob_writes = 0;
  long transport_ticks = 0;
  long physical_ticks = 0;
};

struct MetricsLog {
  std::string scheme;
  std::uint64_t seed = 0;
  Sense sense = Sense::maximize;
  std::vector<SlotRecord> slots;
  RunStats stats;
  std::vector<std::string> state_lines;  // JSON lines, when recorded

  // slot,session_id,throughput_pps,node_id,tx_power_mw,link_id,lambda,utility
  std::string csv() const;
  std::string state_jsonl() const;
  // Mean over the last `fraction` of the slots; 0 for an empty log.
  double mean_utility(double fraction = 0.5) const;
  double mean_throughput(int session, double fraction = 0.5) const;
  double mean_total_power(double fraction = 0.5) const;
};

// Slotted simulation of one scheme. Per slot: capacities from the current
// powers, packet delivery, dual updates at link receivers, one hop of
// signaling, then the node ticks. Throws IncompatibleProgram.
MetricsLog simulate(const Compiled& compiled, const NetworkSchema& schema, const Scenario& scenario,
                    const RunOptions& options);

TopologyView topology_of(const Scenario& s);

struct CompareRow {
  Scheme scheme = Scheme::no_control;
  double mean_utility = 0.0;  // averaged over seeds
  double gain_pct = 0.0;      // over NoControl, paired by seed
};

// Steady-state comparison over seeds seed0..seed0+runs-1. NoControl is
// simulated as the baseline even when not listed.
std::vector<CompareRow> compare(const Compiled& compiled, const NetworkSchema& schema, const Scenario& scenario,
                                const std::vector<Scheme>& schemes, std::uint64_t seed0, int runs,
                                long duration = -1);
std::string compare_tsv(const std::vector<CompareRow>& rows);

// Percentage improvement of `u` over `base`, signed by the objective sense.
double utility_gain_pct(double u, double base, Sense sense);

}  // namespace wnos
