#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wnos/rng.hpp"
#include "wnos/schema.hpp"

namespace wnos {

struct DIConfig {
  int n_global = 20;
  int n_local = 10;
  std::uint64_t rng_seed = 1;
  int max_resample = 1000;

  void validate() const;  // throws ValidationError
};

struct Instance {
  std::string element;
  int owner = -1;  // -1 for global instances
  std::vector<int> members;  // sorted ascending
  std::uint64_t hash = 0;
  bool derived = false;  // obtained by inverting another local element

  bool operator==(const Instance&) const = default;
};

// FNV-1a over the sorted, comma-joined decimal member list. Order
// insensitive by construction. Throws EmptyInstance.
std::uint64_t hash_id(std::span<const int> members);
std::string hash_hex(std::uint64_t h);

// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

class InstancePool {
 public:
  InstancePool() = default;
  explicit InstancePool(DIConfig config) : config_(config) {}

  const DIConfig& config() const { return config_; }

  // Records which global sets index the owners and members of a local
  // element. Needed by invert_membership and the runtime lookups.
  void describe(const std::string& element, const std::string& owner_global, const std::string& member_global);
  const std::string& owner_global(std::string_view element) const;
  const std::string& member_global(std::string_view element) const;

  void add_global(Instance inst);
  // With enforce_rules the instance must have n_local members (Rule 1) and
  // differ from every instance of the same element (Rule 2).
  void add_local(Instance inst, bool enforce_rules = true);

  const Instance* global(std::string_view element) const;
  const Instance* local(std::string_view element, int owner) const;
  std::vector<const Instance*> locals(std::string_view element) const;
  std::vector<std::string> local_elements() const;
  std::size_t count(std::string_view element) const;

  // Hash lookup followed by exact comparison of the sorted member lists.
  std::vector<const Instance*> find(std::string_view element, const std::vector<int>& sorted) const;
  std::vector<const Instance*> find_any(const std::vector<int>& sorted) const;
  bool contains(std::string_view element, const std::vector<int>& sorted) const;

  // One line per instance sorted by (element, owner):
  // element=<name> owner=<idx|-> members=<csv> hash=<hex>
  std::string dump() const;

  bool operator==(const InstancePool& o) const { return globals_ == o.globals_ && locals_ == o.locals_; }

 private:
  DIConfig config_;
  std::map<std::string, Instance> globals_;
  std::map<std::pair<std::string, int>, Instance> locals_;
  std::unordered_multimap<std::uint64_t, std::pair<std::string, int>> hash_index_;
  std::map<std::string, std::pair<std::string, std::string>> meta_;
};

Instance instantiate_global(const Element& element, const DIConfig& config);

// Draws n_local members of `mother` uniformly without replacement until the
// sorted set is new among instances of the same element. Throws
// ExhaustedResampling when the pool already holds C(|mother|, n_local)
// instances of that element, so no unused subset exists.
Instance instantiate_local(const Element& element, int owner, const Instance& mother,
                           const InstancePool& pool, const DIConfig& config, Rng& rng);

// owner o of `inverse` receives every owner of `forward` whose instance
// contains o. Throws IncompletePool if a forward owner has no instance.
std::map<int, std::vector<int>> invert_membership(const InstancePool& pool, std::string_view forward,
                                                  std::string_view inverse);

using Pins = std::map<std::string, std::vector<std::vector<int>>>;

// Builds every global set plus the requested local elements. Locals that
// belong to an inverse pair are produced by sampling the first element of
// the pair and deriving the second. `pins` fixes forward instances
// explicitly (owner i takes pins[element][i]).
InstancePool build_pool(const NetworkSchema& schema, const std::set<std::string>& locals,
                        const DIConfig& config, const Pins& pins = {});

}  // namespace wnos
