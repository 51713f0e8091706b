#include <doctest.h>

#include "support.hpp"
#include "wnos/pipeline.hpp"

using namespace wnos;

TEST_CASE("toy compile output is frozen") {
  Compiled c = compile_file(source_path("programs/toy.wnos"));
  CHECK(dump_compile(c) == read_text(source_path("tests/golden/toy_compile.txt")));
  CHECK(dump_plans(c) == read_text(source_path("tests/golden/toy_plans.txt")));
}

TEST_CASE("pinned table yields the expected Links-of-Session") {
  Compiled c = compile_file(source_path("tests/golden/table1.wnos"));
  CHECK(c.pool.local("seslnk", 4)->members == std::vector<int>{0, 3, 4, 7, 9, 10, 11, 12, 13, 14, 18, 19});
  for (const auto& s : c.subproblems) {
    if (s.layer != Layer::transport || s.entity->index != 4) continue;
    std::vector<int> idx;
    for (const auto& d : s.duals) idx.push_back(d.index);
    CHECK(idx == std::vector<int>{0, 3, 4, 7, 9, 10, 11, 12, 13, 14, 18, 19});
  }
}

TEST_CASE("compilation is deterministic per seed") {
  for (const char* p : {"jocp", "cp1", "cp4"}) {
    std::string path = source_path(std::string("programs/") + p + ".wnos");
    CHECK(dump_compile(compile_file(path, 7)) == dump_compile(compile_file(path, 7)));
  }
}

TEST_CASE("default pool shape") {
  Compiled c = compile_file(source_path("programs/jocp.wnos"), 3);
  auto rows = c.pool.locals("lnkses");
  CHECK(rows.size() == 20);
  for (const Instance* i : rows) CHECK(i->members.size() == 10);
}
