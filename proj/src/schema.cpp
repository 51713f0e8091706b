#include "wnos/schema.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "wnos/errors.hpp"

namespace wnos {

std::string to_string(ElementKind k) { return k == ElementKind::primitive ? "primitive" : "virtual"; }

std::string to_string(EntityType t) {
  switch (t) {
    case EntityType::node: return "node";
    case EntityType::link: return "link";
    case EntityType::session: return "session";
    case EntityType::parameter: return "parameter";
  }
  return "?";
}

std::string to_string(Layer l) {
  switch (l) {
    case Layer::application: return "application";
    case Layer::transport: return "transport";
    case Layer::network: return "network";
    case Layer::datalink: return "datalink";
    case Layer::physical: return "physical";
    case Layer::none: return "none";
  }
  return "?";
}

std::string to_string(Scope s) { return s == Scope::global ? "global" : "local"; }

std::string to_string(Relation r) {
  switch (r) {
    case Relation::has_attribute: return "has_attribute";
    case Relation::each_member_is: return "each_member_is";
    case Relation::is_function_of: return "is_function_of";
  }
  return "?";
}

void NetworkSchema::add_element(Element e) {
  if (index_.count(e.ref.id)) throw ValidationError("duplicate element '" + e.ref.id + "'");
  index_[e.ref.id] = elements_.size();
  elements_.push_back(std::move(e));
}

void NetworkSchema::add_edge(DependencyEdge e) {
  const Element& src = at(e.src);
  at(e.dst);
  if (e.relation == Relation::each_member_is && !src.is_virtual())
    throw ValidationError("each_member_is edge must start at a virtual element: " + e.src);
  edges_.push_back(std::move(e));
}

void NetworkSchema::add_alias(std::string alias, std::string target) {
  at(target);
  aliases_[std::move(alias)] = std::move(target);
}

void NetworkSchema::add_inverse(std::string a, std::string b) {
  at(a);
  at(b);
  inverses_[a] = b;
  inverses_[b] = a;
  pairs_.emplace_back(std::move(a), std::move(b));
}

std::string NetworkSchema::canonical(std::string_view id) const {
  auto it = aliases_.find(std::string(id));
  return it == aliases_.end() ? std::string(id) : it->second;
}

const Element* NetworkSchema::find(std::string_view id) const {
  auto it = index_.find(canonical(id));
  return it == index_.end() ? nullptr : &elements_[it->second];
}

const Element& NetworkSchema::at(std::string_view id) const {
  const Element* e = find(id);
  if (!e) throw UnknownElement("'" + std::string(id) + "' is not in the schema");
  return *e;
}

bool NetworkSchema::has_edge(std::string_view src, std::string_view dst, Relation r) const {
  std::string s = canonical(src), d = canonical(dst);
  return std::any_of(edges_.begin(), edges_.end(), [&](const DependencyEdge& e) {
    return e.src == s && e.dst == d && e.relation == r;
  });
}

std::vector<DependencyEdge> NetworkSchema::out_edges(std::string_view src) const {
  std::string s = canonical(src);
  std::vector<DependencyEdge> out;
  for (const auto& e : edges_)
    if (e.src == s) out.push_back(e);
  return out;
}

std::optional<std::string> NetworkSchema::inverse_of(std::string_view id) const {
  auto it = inverses_.find(canonical(id));
  if (it == inverses_.end()) return std::nullopt;
  return it->second;
}

std::string NetworkSchema::primitive_of(EntityType t) const {
  for (const auto& e : elements_)
    if (!e.is_virtual() && !e.is_parameter() && e.ref.entity_type == t) return e.ref.id;
  throw UnknownElement("no primitive element for entity type " + to_string(t));
}

std::string NetworkSchema::global_of(EntityType t) const {
  for (const auto& e : elements_)
    if (e.is_virtual() && e.virt->scope == Scope::global && e.virt->member_type == t) return e.ref.id;
  throw UnknownElement("no global set for entity type " + to_string(t));
}

std::vector<std::string> NetworkSchema::function_inputs(std::string_view id) const {
  std::vector<std::string> out;
  std::set<std::string> seen{canonical(id)};
  std::vector<std::string> stack{canonical(id)};
  while (!stack.empty()) {
    std::string cur = stack.back();
    stack.pop_back();
    for (const auto& e : edges_) {
      if (e.src == cur && e.relation == Relation::is_function_of && seen.insert(e.dst).second) {
        out.push_back(e.dst);
        stack.push_back(e.dst);
      }
    }
  }
  return out;
}

void NetworkSchema::validate() const {
  for (const auto& e : elements_) {
    if (!e.is_virtual()) continue;
    const auto& v = *e.virt;
    if ((v.scope == Scope::local) != v.owner.has_value())
      throw ValidationError("element '" + e.ref.id + "': owner must be present exactly for local scope");
    if (v.owner) at(*v.owner);
    primitive_of(v.member_type);
  }
}

namespace {

Element primitive(std::string id, EntityType t, std::string desc) {
  return Element{ElementRef{std::move(id), ElementKind::primitive, t, Layer::none}, std::nullopt,
                 std::nullopt, std::move(desc)};
}

Element global_set(std::string id, EntityType member, std::string desc) {
  return Element{ElementRef{std::move(id), ElementKind::virtual_element, member, Layer::none},
                 VirtualInfo{Scope::global, member, std::nullopt}, std::nullopt, std::move(desc)};
}

Element local_set(std::string id, EntityType member, std::string owner, std::string desc) {
  return Element{ElementRef{std::move(id), ElementKind::virtual_element, member, Layer::none},
                 VirtualInfo{Scope::local, member, std::move(owner)}, std::nullopt, std::move(desc)};
}

Element parameter(std::string id, Layer layer, ParameterInfo info, std::string desc) {
  return Element{ElementRef{std::move(id), ElementKind::primitive, EntityType::parameter, layer},
                 std::nullopt, std::move(info), std::move(desc)};
}

}  // namespace

NetworkSchema build_default_schema() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  NetworkSchema s;

  s.add_element(primitive("nd", EntityType::node, "Node"));
  s.add_element(primitive("lnk", EntityType::link, "Link"));
  s.add_element(primitive("ses", EntityType::session, "Session"));

  s.add_element(global_set("netnd", EntityType::node, "Nodes of Network"));
  s.add_element(global_set("netlnk", EntityType::link, "Links of Network"));
  s.add_element(global_set("netses", EntityType::session, "Sessions of Network"));

  s.add_element(local_set("nbrnd", EntityType::node, "nd", "Neighbors of Node"));
  s.add_element(local_set("lnkses", EntityType::session, "lnk", "Sessions of Link"));
  s.add_element(local_set("seslnk", EntityType::link, "ses", "Links of Session"));
  s.add_element(local_set("lnknd", EntityType::link, "nd", "Links of Node"));

  s.add_element(parameter("lnkcap", Layer::physical,
                          {EntityType::link, 0.0, inf, false, "packets/slot"}, "Link Capacity"));
  s.add_element(parameter("lnkpwr", Layer::physical,
                          {EntityType::link, 1.0, 1000.0, true, "mW"}, "Link Power"));
  s.add_element(parameter("lnksinr", Layer::physical,
                          {EntityType::link, 0.0, inf, false, "ratio"}, "Link SINR"));
  s.add_element(parameter("sesrate", Layer::transport,
                          {EntityType::session, 0.01, 10.0, true, "packets/slot"}, "Session Rate"));
  s.add_element(parameter("maxpwr", Layer::physical,
                          {EntityType::node, 1.0, 1000.0, false, "mW"}, "Maximum Node Power"));

  for (auto [g, p] : {std::pair{"netnd", "nd"}, {"netlnk", "lnk"}, {"netses", "ses"}})
    s.add_edge({g, p, Relation::each_member_is});

  // Node <-> Neighbors of Node in both directions: a multigraph pair.
  s.add_edge({"nd", "nbrnd", Relation::has_attribute});
  s.add_edge({"nbrnd", "nd", Relation::each_member_is});
  s.add_edge({"lnk", "lnkses", Relation::has_attribute});
  s.add_edge({"lnkses", "ses", Relation::each_member_is});
  s.add_edge({"ses", "seslnk", Relation::has_attribute});
  s.add_edge({"seslnk", "lnk", Relation::each_member_is});
  s.add_edge({"nd", "lnknd", Relation::has_attribute});
  s.add_edge({"lnknd", "lnk", Relation::each_member_is});
  s.add_edge({"nd", "lnk", Relation::has_attribute});

  s.add_edge({"lnk", "lnkcap", Relation::has_attribute});
  s.add_edge({"lnk", "lnkpwr", Relation::has_attribute});
  s.add_edge({"lnk", "lnksinr", Relation::has_attribute});
  s.add_edge({"ses", "sesrate", Relation::has_attribute});
  s.add_edge({"nd", "maxpwr", Relation::has_attribute});
  s.add_edge({"lnksinr", "lnkpwr", Relation::is_function_of});
  s.add_edge({"lnkcap", "lnksinr", Relation::is_function_of});

  s.add_inverse("lnkses", "seslnk");

  for (auto [a, t] : {std::pair{"ntses", "netses"}, {"ntlk", "netlnk"}, {"ntlnk", "netlnk"},
                      {"ntnd", "netnd"}, {"lkpwr", "lnkpwr"}, {"lkcap", "lnkcap"},
                      {"lkses", "lnkses"}, {"lksinr", "lnksinr"}})
    s.add_alias(a, t);

  s.validate();
  return s;
}

const Element& read_element(const NetworkSchema& schema, std::string_view path) {
  std::vector<std::string> hops;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = path.find('.', start);
    hops.emplace_back(path.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  if (hops.front().empty()) throw UnknownElement("empty path");
  const Element* cur = &schema.at(hops.front());
  for (std::size_t i = 1; i < hops.size(); ++i) {
    const Element* next = schema.find(hops[i]);
    if (!next) throw UnknownElement("'" + hops[i] + "' in path '" + std::string(path) + "'");
    const std::string& dst = next->ref.id;
    bool ok = schema.has_edge(cur->ref.id, dst, Relation::has_attribute) ||
              schema.has_edge(cur->ref.id, dst, Relation::each_member_is);
    if (!ok && cur->is_virtual()) {
      std::string member = schema.primitive_of(cur->virt->member_type);
      ok = schema.has_edge(member, dst, Relation::has_attribute);
    }
    if (!ok)
      throw UnknownElement("'" + cur->ref.id + "' has no attribute or member '" + hops[i] + "'");
    cur = next;
  }
  return *cur;
}

ElementRef read(const NetworkSchema& schema, std::string_view path) {
  return read_element(schema, path).ref;
}

}  // namespace wnos
