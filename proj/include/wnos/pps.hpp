#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "wnos/algogen.hpp"
#include "wnos/instantiation.hpp"
#include "wnos/pipeline.hpp"

namespace wnos {

enum class MessageKind { dual_report, gradient_report };
std::string to_string(MessageKind k);

struct SignalingMessage {
  MessageKind kind = MessageKind::dual_report;
  int source = 0;       // link whose receiver produced the message
  int family = 0;       // constraint family (dual reports)
  int target = 0;       // destination node
  double payload = 0.0;  // lambda, or the victim price for gradient reports
  int hop_budget = 1;   // hops left before delivery
  long timestamp = 0;   // slot of emission
};

struct Received {
  double value = 0.0;
  long timestamp = -1;  // -1: initial value, never reported
};

struct RegisterPlane {
  // Outgoing links (this node transmits).
  std::map<int, double> noise_plus_interference;  // mW at the link's receiver
  std::map<int, double> sinr;
  std::map<int, double> own_gain;
  std::map<int, double> activity;                  // fraction of the slot spent transmitting
  std::map<int, std::map<int, double>> cross_gain;  // own link -> victim link -> gain
  std::map<int, double> queue_len;                 // packets
  std::map<int, double> measured_link_rate;        // packets/s
  std::map<int, double> neighbor_powers;           // same-band interferer link -> mW
  std::map<int, std::map<int, Received>> received_duals;  // family -> link -> lambda
  std::map<int, Received> victim_prices;                  // victim link -> price

  // Incoming links (this node receives and owns their duals).
  std::map<int, double> incoming_capacity;  // packets/slot
  std::map<int, double> session_rate;       // offered packets/slot of sessions crossing them
  std::map<int, double> incoming_sinr;
  std::map<int, double> incoming_interference;  // mW
  std::map<int, std::map<int, double>> lambda;  // family -> link -> lambda

  long rejected = 0;
  long duplicates = 0;
  long unknown = 0;
  long stale_events = 0;
  std::set<std::tuple<int, int, int, long>> seen;  // (kind, family, source, timestamp)
};

struct TransportKnobs {
  double rate_pps = 0.0;
  double window = 64;
  double packet_bits = 2048;
};

struct PhysicalKnobs {
  double tx_gain_db = 15.0;
  int band = 0;
  std::string modulation = "gmsk";
};

struct LayerKnobs {
  std::map<int, TransportKnobs> transport;  // per sourced session
  std::map<int, int> next_hop;              // per session routed through this node
  double fec_rate = 0.1;
  int max_retx = 3;
  std::map<int, PhysicalKnobs> physical;    // per outgoing link

  // Throws InvariantViolation when a knob leaves its documented range.
  void validate() const;
};

double gain_db_to_mw(double db);
double mw_to_gain_db(double mw);

struct InstalledPlan {
  const SolverPlan* plan = nullptr;
  int entity = 0;
  Bounds bounds;
};

struct DecisionPlane {
  std::map<Layer, std::vector<InstalledPlan>> installed;
  std::map<Layer, int> timescales;  // tick period in slots
};

// A compiled program bound to a concrete topology.
struct RuntimeProgram {
  const Compiled* compiled = nullptr;
  const NetworkSchema* schema = nullptr;
  InstancePool pool;  // instances measured from the topology
  const SolverPlan* transport = nullptr;
  const SolverPlan* physical = nullptr;
  std::vector<DualUpdateRule> duals;
  ChannelModel channel;
  int transport_period = 30;
  int physical_period = 1;
  long staleness_bound = 1000;

  // Members of a lifted set for `entity`. Throws IncompatibleProgram.
  std::vector<int> resolve(const SetRef& set, int entity) const;
  // Base bounds narrowed by every override that covers `entity`.
  Bounds bounds_for(const SolverPlan& plan, int entity) const;
};

// Pool of the actual topology: global sets plus Sessions-of-Link,
// Links-of-Session, Links-of-Node and Neighbors-of-Node.
struct TopologyView {
  int nodes = 0;
  std::vector<std::pair<int, int>> links;  // (tx, rx)
  std::vector<std::vector<int>> paths;     // per session
};
InstancePool topology_pool(const TopologyView& topo, const NetworkSchema& schema);

// Builds the runtime program and checks it can drive the topology.
// Throws IncompatibleProgram.
RuntimeProgram bind_program(const Compiled& compiled, const NetworkSchema& schema, const TopologyView& topo,
                            const ChannelModel& channel);

// Evaluates a lifted expression for one entity; sum_over walks the
// runtime pool. `lookup` receives indexed symbols.
double evaluate_runtime(const Expr& e, int entity, const RuntimeProgram& prog,
                        const std::function<std::optional<double>(const VarKey&)>& lookup);

struct TickResult {
  bool transport_ran = false;
  bool physical_ran = false;
  int knob_writes = 0;
  std::vector<SignalingMessage> messages;
};

class NodeStack {
 public:
  explicit NodeStack(int id) : id_(id) {}
  int id() const { return id_; }

  std::vector<int> sourced_sessions;
  std::vector<int> tx_links;
  std::vector<int> rx_links;

  RegisterPlane registers;
  DecisionPlane decision;
  LayerKnobs knobs;

  // Installs one plan per role the node plays on the requested layers.
  // Throws RoleMismatch when the program has no template for a role.
  void install(const RuntimeProgram& prog, bool transport, bool physical);

  // Receiver side: dual update of every incoming link with the measured
  // slack, then dual and gradient reports. k is the dual iteration.
  std::vector<SignalingMessage> update_duals(const RuntimeProgram& prog, long t, long k,
                                             const std::vector<int>& link_tx,
                                             const std::vector<std::vector<int>>& sessions_of_link,
                                             const std::vector<std::vector<int>>& paths,
                                             const std::vector<std::vector<int>>& same_band);

  // Runs the installed plans due at slot t and writes knobs.
  TickResult tick(const RuntimeProgram& prog, long t);

  // Stores a delivered message. Returns false when it is rejected or a
  // duplicate.
  bool handle_signal(const SignalingMessage& m);

 private:
  double dual_sum(const RuntimeProgram& prog, const LiftedDualTerm& term, int entity, long t) const;

  int id_;
};

}  // namespace wnos
