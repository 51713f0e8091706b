#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wnos/channel.hpp"

namespace wnos {

struct ScenarioNode {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct ScenarioLink {
  int id = 0;
  int tx = 0;
  int rx = 0;
  int band = 0;
};

struct ScenarioSession {
  int id = 0;
  int src = 0;
  int dst = 0;
  long packet_count = -1;  // -1 for an unbounded backlog
  std::vector<int> path;   // link ids, source first
};

struct Scenario {
  std::string name;
  int bands = 1;
  long duration = 0;  // slots
  std::uint64_t seed = 1;
  ChannelModel channel;
  std::vector<ScenarioNode> nodes;
  std::vector<ScenarioLink> links;
  std::vector<ScenarioSession> sessions;

  // FormatError for bad ids, bands or fields; TopologyError for paths that
  // are not connected chains from source to destination.
  void validate() const;
  ChannelState channel_state() const;
  double distance(int node_a, int node_b) const;
};

// Key=value header followed by [nodes], [links] and [sessions] tables.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string print_scenario(const Scenario& s);

}  // namespace wnos
