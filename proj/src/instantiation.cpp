#include "wnos/instantiation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "wnos/errors.hpp"

namespace wnos {

void DIConfig::validate() const {
  if (n_global <= 0) throw ValidationError("n_global must be positive");
  if (n_local <= 0 || n_local > n_global) throw ValidationError("n_local must satisfy 0 < n_local <= n_global");
  if (max_resample < 1) throw ValidationError("max_resample must be at least 1");
}

std::uint64_t hash_id(std::span<const int> members) {
  if (members.empty()) throw EmptyInstance("cannot hash an empty instance");
  std::vector<int> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](char c) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  };
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) mix(',');
    for (char c : std::to_string(sorted[i])) mix(c);
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(r);
}

void InstancePool::describe(const std::string& element, const std::string& owner_global,
                            const std::string& member_global) {
  meta_[element] = {owner_global, member_global};
}

const std::string& InstancePool::owner_global(std::string_view element) const {
  auto it = meta_.find(std::string(element));
  if (it == meta_.end()) throw MissingInstance("local element '" + std::string(element) + "' is not in the pool");
  return it->second.first;
}

const std::string& InstancePool::member_global(std::string_view element) const {
  auto it = meta_.find(std::string(element));
  if (it == meta_.end()) throw MissingInstance("local element '" + std::string(element) + "' is not in the pool");
  return it->second.second;
}

void InstancePool::add_global(Instance inst) {
  inst.owner = -1;
  std::sort(inst.members.begin(), inst.members.end());
  inst.hash = hash_id(inst.members);
  globals_[inst.element] = std::move(inst);
}

void InstancePool::add_local(Instance inst, bool enforce_rules) {
  std::sort(inst.members.begin(), inst.members.end());
  if (std::adjacent_find(inst.members.begin(), inst.members.end()) != inst.members.end())
    throw RuleViolation("instance of '" + inst.element + "' repeats a member");
  if (locals_.count({inst.element, inst.owner}))
    throw RuleViolation("owner " + std::to_string(inst.owner) + " of '" + inst.element + "' already has an instance");
  if (enforce_rules) {
    if (static_cast<int>(inst.members.size()) != config_.n_local)
      throw RuleViolation("instance of '" + inst.element + "' has " + std::to_string(inst.members.size()) +
                          " members, Rule 1 requires " + std::to_string(config_.n_local));
    if (contains(inst.element, inst.members))
      throw RuleViolation("instance of '" + inst.element + "' for owner " + std::to_string(inst.owner) +
                          " duplicates an existing one (Rule 2)");
  }
  inst.hash = inst.members.empty() ? 0 : hash_id(inst.members);
  hash_index_.emplace(inst.hash, std::pair{inst.element, inst.owner});
  auto key = std::pair{inst.element, inst.owner};
  locals_[key] = std::move(inst);
}

const Instance* InstancePool::global(std::string_view element) const {
  auto it = globals_.find(std::string(element));
  return it == globals_.end() ? nullptr : &it->second;
}

const Instance* InstancePool::local(std::string_view element, int owner) const {
  auto it = locals_.find({std::string(element), owner});
  return it == locals_.end() ? nullptr : &it->second;
}

std::vector<const Instance*> InstancePool::locals(std::string_view element) const {
  std::vector<const Instance*> out;
  for (auto it = locals_.lower_bound({std::string(element), std::numeric_limits<int>::min()});
       it != locals_.end() && it->first.first == element; ++it)
    out.push_back(&it->second);
  return out;
}

std::vector<std::string> InstancePool::local_elements() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : locals_)
    if (out.empty() || out.back() != k.first) out.push_back(k.first);
  return out;
}

std::size_t InstancePool::count(std::string_view element) const { return locals(element).size(); }

std::vector<const Instance*> InstancePool::find(std::string_view element, const std::vector<int>& sorted) const {
  std::vector<const Instance*> out;
  for (const Instance* i : find_any(sorted))
    if (i->element == element) out.push_back(i);
  return out;
}

std::vector<const Instance*> InstancePool::find_any(const std::vector<int>& sorted) const {
  std::vector<const Instance*> out;
  if (sorted.empty()) {
    for (const auto& [_, inst] : locals_)
      if (inst.members.empty()) out.push_back(&inst);
    return out;
  }
  auto [b, e] = hash_index_.equal_range(hash_id(sorted));
  for (auto it = b; it != e; ++it) {
    const Instance* inst = local(it->second.first, it->second.second);
    if (inst && inst->members == sorted) out.push_back(inst);
  }
  std::sort(out.begin(), out.end(), [](const Instance* a, const Instance* b) {
    return std::tie(a->element, a->owner) < std::tie(b->element, b->owner);
  });
  return out;
}

bool InstancePool::contains(std::string_view element, const std::vector<int>& sorted) const {
  return !find(element, sorted).empty();
}

std::string InstancePool::dump() const {
  std::ostringstream out;
  auto line = [&](const Instance& i) {
    out << "element=" << i.element << " owner=" << (i.owner < 0 ? std::string("-") : std::to_string(i.owner))
        << " members=";
    for (std::size_t k = 0; k < i.members.size(); ++k) out << (k ? "," : "") << i.members[k];
    out << " hash=" << hash_hex(i.hash) << "\n";
  };
  std::vector<const Instance*> all;
  for (const auto& [_, i] : globals_) all.push_back(&i);
  for (const auto& [_, i] : locals_) all.push_back(&i);
  std::sort(all.begin(), all.end(), [](const Instance* a, const Instance* b) {
    return std::tie(a->element, a->owner) < std::tie(b->element, b->owner);
  });
  for (const Instance* i : all) line(*i);
  return out.str();
}

Instance instantiate_global(const Element& element, const DIConfig& config) {
  if (!element.is_virtual() || element.virt->scope != Scope::global)
    throw NotGlobal("'" + element.ref.id + "' is not a global virtual element");
  config.validate();
  Instance inst;
  inst.element = element.ref.id;
  inst.members.resize(static_cast<std::size_t>(config.n_global));
  std::iota(inst.members.begin(), inst.members.end(), 0);
  inst.hash = hash_id(inst.members);
  return inst;
}

namespace {

// Lexicographically first k-subset of `mother` that the pool does not hold.
std::optional<std::vector<int>> first_unused(const std::string& element, const std::vector<int>& mother,
                                             std::size_t k, const InstancePool& pool) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t n = mother.size();
  while (true) {
    std::vector<int> cand;
    cand.reserve(k);
    for (std::size_t i : idx) cand.push_back(mother[i]);
    if (!pool.contains(element, cand)) return cand;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return std::nullopt;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace

Instance instantiate_local(const Element& element, int owner, const Instance& mother, const InstancePool& pool,
                           const DIConfig& config, Rng& rng) {
  if (!element.is_virtual() || element.virt->scope != Scope::local)
    throw ValidationError("'" + element.ref.id + "' is not a local virtual element");
  config.validate();
  const auto k = static_cast<std::size_t>(config.n_local);
  if (k > mother.members.size())
    throw ValidationError("n_local exceeds the mother set of '" + element.ref.id + "'");
  std::uint64_t capacity = binomial(mother.members.size(), k);
  if (pool.count(element.ref.id) >= capacity)
    throw ExhaustedResampling("'" + element.ref.id + "' already has all " + std::to_string(capacity) +
                              " unique instances of size " + std::to_string(k));

  Instance inst;
  inst.element = element.ref.id;
  inst.owner = owner;
  std::vector<int> pool_members = mother.members;
  for (int attempt = 0; attempt < config.max_resample; ++attempt) {
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(pool_members.size() - i));
      std::swap(pool_members[i], pool_members[j]);
    }
    std::vector<int> cand(pool_members.begin(), pool_members.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(cand.begin(), cand.end());
    if (!pool.contains(inst.element, cand)) {
      inst.members = std::move(cand);
      inst.hash = hash_id(inst.members);
      return inst;
    }
  }
  // Random draws kept colliding although an unused subset exists; take the
  // lexicographically first one so the outcome stays deterministic.
  auto cand = first_unused(inst.element, mother.members, k, pool);
  if (!cand)
    throw ExhaustedResampling("no unused subset left for '" + element.ref.id + "'");
  inst.members = std::move(*cand);
  inst.hash = hash_id(inst.members);
  return inst;
}

std::map<int, std::vector<int>> invert_membership(const InstancePool& pool, std::string_view forward,
                                                  std::string_view inverse) {
  const Instance* owners = pool.global(pool.owner_global(forward));
  const Instance* targets = pool.global(pool.member_global(forward));
  if (!owners || !targets) throw IncompletePool("global sets of '" + std::string(forward) + "' are missing");
  (void)inverse;
  std::map<int, std::vector<int>> out;
  for (int t : targets->members) out[t];
  for (int o : owners->members) {
    const Instance* f = pool.local(forward, o);
    if (!f)
      throw IncompletePool("'" + std::string(forward) + "' has no instance for owner " + std::to_string(o));
    for (int m : f->members) out[m].push_back(o);
  }
  for (auto& [_, v] : out) std::sort(v.begin(), v.end());
  return out;
}

InstancePool build_pool(const NetworkSchema& schema, const std::set<std::string>& locals, const DIConfig& config,
                        const Pins& pins) {
  config.validate();

  // Expand the request with inverse partners and order it: forward
  // elements are sampled, their partners derived.
  std::vector<std::string> sampled;
  std::vector<std::pair<std::string, std::string>> derived;  // (forward, inverse)
  std::set<std::string> done;
  for (const auto& raw : locals) {
    std::string id = schema.canonical(raw);
    if (done.count(id)) continue;
    const Element& el = schema.at(id);
    if (!el.is_virtual() || el.virt->scope != Scope::local)
      throw ValidationError("'" + id + "' is not a local virtual element");
    std::string fwd = id;
    std::optional<std::string> inv;
    for (const auto& [a, b] : schema.inverse_pairs()) {
      if (a == id || b == id) {
        fwd = a;
        inv = b;
        // A pinned partner becomes the sampled side.
        if (pins.count(b) && !pins.count(a)) std::swap(fwd, *inv);
      }
    }
    sampled.push_back(fwd);
    done.insert(fwd);
    if (inv) {
      derived.emplace_back(fwd, *inv);
      done.insert(*inv);
    }
  }
  for (const auto& [el, _] : pins)
    if (!done.count(schema.canonical(el)))
      throw ValidationError("pinned element '" + el + "' is not used by the program");

  auto global_name = [&](EntityType t) { return schema.global_of(t); };

  const int max_attempts = 100;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    InstancePool pool(config);
    for (const auto& e : schema.elements())
      if (e.is_virtual() && e.virt->scope == Scope::global) pool.add_global(instantiate_global(e, config));

    Rng rng(config.rng_seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt));
    for (const auto& id : sampled) {
      const Element& el = schema.at(id);
      std::string owner_g = global_name(schema.at(*el.virt->owner).ref.entity_type);
      std::string member_g = global_name(el.virt->member_type);
      pool.describe(id, owner_g, member_g);
      const Instance& mother = *pool.global(member_g);
      const Instance& owners = *pool.global(owner_g);
      auto pin = pins.find(id);
      if (pin != pins.end()) {
        if (pin->second.size() != owners.members.size())
          throw ValidationError("pin." + id + " needs " + std::to_string(owners.members.size()) + " instances");
        for (std::size_t o = 0; o < owners.members.size(); ++o) {
          for (int m : pin->second[o])
            if (!std::binary_search(mother.members.begin(), mother.members.end(), m))
              throw ValidationError("pin." + id + " member " + std::to_string(m) + " is outside the mother set");
          pool.add_local(Instance{id, owners.members[o], pin->second[o], 0, false});
        }
        continue;
      }
      for (int o : owners.members) pool.add_local(instantiate_local(el, o, mother, pool, config, rng));
    }

    bool ok = true;
    for (const auto& [fwd, inv] : derived) {
      pool.describe(inv, pool.member_global(fwd), pool.owner_global(fwd));
      auto rel = invert_membership(pool, fwd, inv);
      std::set<std::vector<int>> seen;
      for (const auto& [o, members] : rel) {
        if (members.empty() || !seen.insert(members).second) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
      for (auto& [o, members] : rel) pool.add_local(Instance{inv, o, members, 0, true}, false);
    }
    if (ok) return pool;
    if (!pins.empty())
      throw RuleViolation("pinned instances derive an empty or duplicated inverse instance");
  }
  throw RuleViolation("could not derive unique inverse instances after " + std::to_string(max_attempts) +
                      " pools");
}

}  // namespace wnos
