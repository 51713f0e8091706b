#include <doctest.h>

#include <algorithm>
#include <set>

#include "wnos/errors.hpp"
#include "wnos/instantiation.hpp"
#include "wnos/schema.hpp"

using namespace wnos;

namespace {

// Fresh pool holding the session set and `count` lnkses instances.
struct Fixture {
  NetworkSchema schema = build_default_schema();
  DIConfig cfg;
  InstancePool pool;
  Instance mother;

  Fixture(int n, int k, std::uint64_t seed) {
    cfg.n_global = n;
    cfg.n_local = k;
    cfg.rng_seed = seed;
    pool = InstancePool(cfg);
    mother = instantiate_global(schema.at("netses"), cfg);
    pool.add_global(mother);
  }
};

}  // namespace

TEST_CASE("hash is FNV-1a of the sorted list") {
  // FNV-1a 64 of "0,1,2" computed independently.
  std::vector<int> a{0, 1, 2};
  std::uint64_t h = 14695981039346656037ULL;
  for (char ch : std::string("0,1,2")) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  CHECK(hash_id(a) == h);
  std::vector<int> b{2, 0, 1};
  CHECK(hash_id(b) == h);
  CHECK(hash_hex(h).size() == 16);
  CHECK_THROWS_AS(hash_id(std::vector<int>{}), EmptyInstance);
}

TEST_CASE("binomial saturates") {
  CHECK(binomial(20, 10) == 184756);
  CHECK(binomial(5, 0) == 1);
  CHECK(binomial(3, 4) == 0);
  CHECK(binomial(200, 100) == UINT64_MAX);
}

TEST_CASE("global instances cover 0..n-1") {
  Fixture f(7, 3, 1);
  CHECK(f.mother.members == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  CHECK(f.mother.owner == -1);
  CHECK_THROWS_AS(instantiate_global(f.schema.at("lnkses"), f.cfg), NotGlobal);
}

TEST_CASE("config validation") {
  DIConfig c;
  c.n_global = 3;
  c.n_local = 4;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.n_local = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("local draws obey both rules and stop exactly at capacity") {
  for (int n = 1; n <= 6; ++n) {
    for (int k = 1; k <= n; ++k) {
      Fixture f(n, k, static_cast<std::uint64_t>(n * 10 + k));
      Rng rng(f.cfg.rng_seed);
      const std::uint64_t cap = binomial(n, k);
      const Element& el = f.schema.at("lnkses");
      std::set<std::vector<int>> seen;
      for (std::uint64_t i = 0; i < cap; ++i) {
        Instance inst = instantiate_local(el, static_cast<int>(i), f.mother, f.pool, f.cfg, rng);
        CHECK(inst.members.size() == static_cast<std::size_t>(k));
        CHECK(std::is_sorted(inst.members.begin(), inst.members.end()));
        CHECK(seen.insert(inst.members).second);
        f.pool.add_local(inst);
      }
      CHECK_THROWS_AS(instantiate_local(el, static_cast<int>(cap), f.mother, f.pool, f.cfg, rng),
                      ExhaustedResampling);
    }
  }
}

TEST_CASE("pool rejects rule violations") {
  Fixture f(4, 2, 3);
  f.pool.add_local(Instance{"lnkses", 0, {0, 1}, hash_id(std::vector<int>{0, 1}), false});
  CHECK_THROWS_AS(f.pool.add_local(Instance{"lnkses", 1, {0, 1}, hash_id(std::vector<int>{0, 1}), false}),
                  RuleViolation);
  CHECK_THROWS_AS(f.pool.add_local(Instance{"lnkses", 2, {0, 1, 2}, hash_id(std::vector<int>{0, 1, 2}), false}),
                  RuleViolation);
  CHECK(f.pool.contains("lnkses", {0, 1}));
  CHECK_FALSE(f.pool.contains("lnkses", {0, 2}));
}

TEST_CASE("inverse membership matches a brute force transpose") {
  NetworkSchema schema = build_default_schema();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DIConfig cfg;
    cfg.n_global = 6;
    cfg.n_local = 3;
    cfg.rng_seed = seed;
    InstancePool pool = build_pool(schema, {"lnkses"}, cfg);
    for (int s = 0; s < 6; ++s) {
      std::vector<int> expect;
      for (int l = 0; l < 6; ++l) {
        const auto& m = pool.local("lnkses", l)->members;
        if (std::binary_search(m.begin(), m.end(), s)) expect.push_back(l);
      }
      const Instance* inv = pool.local("seslnk", s);
      REQUIRE(inv);
      CHECK(inv->members == expect);
      CHECK(inv->derived);
    }
    // Inverting twice gives the forward relation back.
    for (int l = 0; l < 6; ++l) {
      std::vector<int> back;
      for (int s = 0; s < 6; ++s) {
        const auto& m = pool.local("seslnk", s)->members;
        if (std::binary_search(m.begin(), m.end(), l)) back.push_back(s);
      }
      CHECK(back == pool.local("lnkses", l)->members);
    }
  }
}

TEST_CASE("pins fix the sampled side") {
  NetworkSchema schema = build_default_schema();
  DIConfig cfg;
  cfg.n_global = 3;
  cfg.n_local = 2;
  Pins pins{{"lnkses", {{0, 1}, {0, 2}, {1, 2}}}};
  InstancePool pool = build_pool(schema, {"lnkses"}, cfg, pins);
  CHECK(pool.local("seslnk", 0)->members == std::vector<int>{0, 1});
  CHECK(pool.local("seslnk", 2)->members == std::vector<int>{1, 2});
  Pins bad{{"lnkses", {{0, 1}}}};
  CHECK_THROWS_AS(build_pool(schema, {"lnkses"}, cfg, bad), ValidationError);
}

TEST_CASE("same seed, same pool") {
  NetworkSchema schema = build_default_schema();
  DIConfig cfg;
  cfg.rng_seed = 99;
  CHECK(build_pool(schema, {"lnkses"}, cfg).dump() == build_pool(schema, {"lnkses"}, cfg).dump());
}
