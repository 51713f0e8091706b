#include "wnos/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wnos/errors.hpp"

namespace wnos {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> fields(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string f;
  while (in >> f) out.push_back(f);
  return out;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw FormatError("line " + std::to_string(line) + ": " + what);
}

double number(const std::string& s, int line) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) fail(line, "bad number '" + s + "'");
  return v;
}

long integer(const std::string& s, int line) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) fail(line, "bad integer '" + s + "'");
  return v;
}

bool flag(const std::string& s, int line) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail(line, "bad flag '" + s + "'");
}

}  // namespace

double Scenario::distance(int a, int b) const {
  const auto& p = nodes.at(static_cast<std::size_t>(a));
  const auto& q = nodes.at(static_cast<std::size_t>(b));
  return std::hypot(p.x - q.x, p.y - q.y);
}

void Scenario::validate() const {
  try {
    channel.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  if (bands < 1) throw FormatError("bands must be at least 1");
  if (duration < 0) throw FormatError("duration must be non-negative");
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id != static_cast<int>(i)) throw FormatError("node ids must be 0..n-1 in order");
  auto node_ok = [&](int n) { return n >= 0 && n < static_cast<int>(nodes.size()); };
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& l = links[i];
    if (l.id != static_cast<int>(i)) throw FormatError("link ids must be 0..n-1 in order");
    if (!node_ok(l.tx) || !node_ok(l.rx) || l.tx == l.rx)
      throw FormatError("link " + std::to_string(l.id) + " has bad endpoints");
    if (l.band < 0 || l.band >= bands)
      throw FormatError("link " + std::to_string(l.id) + " uses band " + std::to_string(l.band) + " of " +
                        std::to_string(bands));
  }
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    if (s.id != static_cast<int>(i)) throw FormatError("session ids must be 0..n-1 in order");
    if (!node_ok(s.src) || !node_ok(s.dst)) throw FormatError("session " + std::to_string(s.id) + " has bad endpoints");
    if (s.packet_count < -1) throw FormatError("session " + std::to_string(s.id) + " has a negative packet count");
    if (s.path.empty()) throw TopologyError("session " + std::to_string(s.id) + " has an empty path");
    int at = s.src;
    for (int lid : s.path) {
      if (lid < 0 || lid >= static_cast<int>(links.size()))
        throw FormatError("session " + std::to_string(s.id) + " uses unknown link " + std::to_string(lid));
      const auto& l = links[static_cast<std::size_t>(lid)];
      if (l.tx != at)
        throw TopologyError("session " + std::to_string(s.id) + " path breaks at link " + std::to_string(lid));
      at = l.rx;
    }
    if (at != s.dst) throw TopologyError("session " + std::to_string(s.id) + " path does not reach its destination");
  }
}

ChannelState Scenario::channel_state() const {
  ChannelState ch;
  ch.model = channel;
  std::size_t n = links.size();
  ch.gain.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    ch.band.push_back(links[k].band);
    for (std::size_t l = 0; l < n; ++l)
      ch.gain[k][l] = channel.path_gain(distance(links[k].tx, links[l].rx));
  }
  return ch;
}

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    std::string t = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(line, "unterminated section header");
      section = t.substr(1, t.size() - 2);
      if (section != "nodes" && section != "links" && section != "sessions") fail(line, "unknown section " + t);
      continue;
    }
    if (section.empty()) {
      auto eq = t.find('=');
      if (eq == std::string::npos) fail(line, "expected key = value");
      std::string key = trim(t.substr(0, eq)), v = trim(t.substr(eq + 1));
      auto& c = s.channel;
      if (key == "name") s.name = v;
      else if (key == "bands") s.bands = static_cast<int>(integer(v, line));
      else if (key == "duration") s.duration = integer(v, line);
      else if (key == "seed") s.seed = static_cast<std::uint64_t>(integer(v, line));
      else if (key == "bandwidth_hz") c.bandwidth_hz = number(v, line);
      else if (key == "packet_size") c.packet_bits = number(v, line);
      else if (key == "fec_rate") c.fec_rate = number(v, line);
      else if (key == "slot_seconds") c.slot_seconds = number(v, line);
      else if (key == "path_loss_exponent") c.path_loss_exponent = number(v, line);
      else if (key == "reference_gain") c.reference_gain = number(v, line);
      else if (key == "noise_floor_mw") c.noise_floor_mw = number(v, line);
      else if (key == "high_snr_approx") c.high_snr_approx = flag(v, line);
      else fail(line, "unknown key '" + key + "'");
      continue;
    }
    auto f = fields(t);
    if (section == "nodes") {
      if (f.size() != 3) fail(line, "node rows are: id x y");
      s.nodes.push_back({static_cast<int>(integer(f[0], line)), number(f[1], line), number(f[2], line)});
    } else if (section == "links") {
      if (f.size() != 4) fail(line, "link rows are: id tx rx band");
      s.links.push_back({static_cast<int>(integer(f[0], line)), static_cast<int>(integer(f[1], line)),
                         static_cast<int>(integer(f[2], line)), static_cast<int>(integer(f[3], line))});
    } else {
      if (f.size() != 5) fail(line, "session rows are: id src dst packets link,link,...");
      ScenarioSession ss;
      ss.id = static_cast<int>(integer(f[0], line));
      ss.src = static_cast<int>(integer(f[1], line));
      ss.dst = static_cast<int>(integer(f[2], line));
      ss.packet_count = f[3] == "inf" ? -1 : integer(f[3], line);
      std::istringstream p(f[4]);
      std::string item;
      while (std::getline(p, item, ',')) ss.path.push_back(static_cast<int>(integer(item, line)));
      s.sessions.push_back(std::move(ss));
    }
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open scenario '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_scenario(buf.str());
}

std::string print_scenario(const Scenario& s) {
  std::ostringstream o;
  o.precision(17);
  const auto& c = s.channel;
  o << "name = " << s.name << "\nbands = " << s.bands << "\nduration = " << s.duration << "\nseed = " << s.seed
    << "\nbandwidth_hz = " << c.bandwidth_hz << "\npacket_size = " << c.packet_bits << "\nfec_rate = " << c.fec_rate
    << "\nslot_seconds = " << c.slot_seconds << "\npath_loss_exponent = " << c.path_loss_exponent
    << "\nreference_gain = " << c.reference_gain << "\nnoise_floor_mw = " << c.noise_floor_mw
    << "\nhigh_snr_approx = " << (c.high_snr_approx ? "true" : "false") << "\n\n[nodes]\n";
  for (const auto& n : s.nodes) o << n.id << " " << n.x << " " << n.y << "\n";
  o << "\n[links]\n";
  for (const auto& l : s.links) o << l.id << " " << l.tx << " " << l.rx << " " << l.band << "\n";
  o << "\n[sessions]\n";
  for (const auto& ss : s.sessions) {
    o << ss.id << " " << ss.src << " " << ss.dst << " "
      << (ss.packet_count < 0 ? std::string("inf") : std::to_string(ss.packet_count)) << " ";
    for (std::size_t i = 0; i < ss.path.size(); ++i) o << (i ? "," : "") << ss.path[i];
    o << "\n";
  }
  return o.str();
}

}  // namespace wnos
