#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wnos {

enum class ElementKind { primitive, virtual_element };
enum class EntityType { node, link, session, parameter };
enum class Layer { application, transport, network, datalink, physical, none };
enum class Scope { global, local };
enum class Relation { has_attribute, each_member_is, is_function_of };

std::string to_string(ElementKind k);
std::string to_string(EntityType t);
std::string to_string(Layer l);
std::string to_string(Scope s);
std::string to_string(Relation r);

struct ElementRef {
  std::string id;
  ElementKind kind = ElementKind::primitive;
  EntityType entity_type = EntityType::node;
  Layer layer = Layer::none;

  bool operator==(const ElementRef&) const = default;
};

struct VirtualInfo {
  Scope scope = Scope::global;
  EntityType member_type = EntityType::node;
  std::optional<std::string> owner;  // id of the owning primitive for local scope

  bool operator==(const VirtualInfo&) const = default;
};

struct ParameterInfo {
  EntityType holder = EntityType::link;  // entity carrying one value of this parameter
  double lo = 0.0;                      // default decision domain
  double hi = 0.0;
  bool controllable = false;  // may be declared a decision variable
  std::string unit;

  bool operator==(const ParameterInfo&) const = default;
};

struct Element {
  ElementRef ref;
  std::optional<VirtualInfo> virt;
  std::optional<ParameterInfo> param;
  std::string description;

  bool is_virtual() const { return virt.has_value(); }
  bool is_parameter() const { return param.has_value(); }
  bool operator==(const Element&) const = default;
};

struct DependencyEdge {
  std::string src;
  std::string dst;
  Relation relation = Relation::has_attribute;

  bool operator==(const DependencyEdge&) const = default;
};

class NetworkSchema {
 public:
  void add_element(Element e);
  void add_edge(DependencyEdge e);
  void add_alias(std::string alias, std::string target);
  void add_inverse(std::string a, std::string b);

  // Alias-aware lookup. find returns nullptr, at throws UnknownElement.
  const Element* find(std::string_view id) const;
  const Element& at(std::string_view id) const;
  std::string canonical(std::string_view id) const;

  const std::vector<Element>& elements() const { return elements_; }
  const std::vector<DependencyEdge>& edges() const { return edges_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  bool has_edge(std::string_view src, std::string_view dst, Relation r) const;
  std::vector<DependencyEdge> out_edges(std::string_view src) const;
  std::optional<std::string> inverse_of(std::string_view id) const;
  // Registered inverse pairs; the first element of each pair is the one
  // sampled during instantiation, the second is derived from it.
  const std::vector<std::pair<std::string, std::string>>& inverse_pairs() const { return pairs_; }

  // Primitive topological element and global set for an entity type.
  std::string primitive_of(EntityType t) const;
  std::string global_of(EntityType t) const;

  // Transitive closure of is_function_of starting at `id` (excluding id).
  std::vector<std::string> function_inputs(std::string_view id) const;

  // Throws ValidationError if an owner or member reference dangles.
  void validate() const;

 private:
  std::vector<Element> elements_;
  std::vector<DependencyEdge> edges_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> aliases_;
  std::map<std::string, std::string> inverses_;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

NetworkSchema build_default_schema();

// Resolves a dotted chain of attribute/member hops. A hop that is not a
// direct edge target is retried on the member primitive of a virtual
// element, so "netses.seslnk" walks netses -> ses -> seslnk.
ElementRef read(const NetworkSchema& schema, std::string_view path);
const Element& read_element(const NetworkSchema& schema, std::string_view path);

}  // namespace wnos
