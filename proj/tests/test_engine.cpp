#include <algorithm>
#include <set>

#include "doctest.h"
#include "suite.hpp"

using namespace spl;

namespace {

LevelStorage compressed_level(std::vector<Index> crd) {
  LevelStorage l = make_compressed_level();
  l.pos = {0, static_cast<Index>(crd.size())};
  *l.crd = std::move(crd);
  return l;
}

LevelIterator iter(const LevelStorage &l) { return LevelIterator(l, Group{0, 1}, {}); }

// Union merge as the lattice runs it: loop while every live iterator is in
// bounds, then continue with the iterators that remain.
std::vector<std::pair<Index, std::uint64_t>> union_merge(std::vector<LevelIterator> its) {
  std::vector<std::pair<Index, std::uint64_t>> out;
  while (std::any_of(its.begin(), its.end(), [](const LevelIterator &i) { return i.valid(); })) {
    std::uint64_t live = 0;
    for (std::size_t k = 0; k < its.size(); ++k)
      if (its[k].valid()) live |= bit(static_cast<int>(k));
    coiterate(its, live, [&](Index c, std::uint64_t m) { out.emplace_back(c, m); });
  }
  return out;
}

bool has_raw_root(const Schedule &s) {
  return std::any_of(s.root->iters.begin(), s.root->iters.end(),
                     [](const NodeIter &it) { return it.raw; });
}

} // namespace

TEST_SUITE("engine") {

TEST_CASE("co-iteration over two ordered levels") {
  LevelStorage x = compressed_level({0, 2, 3}), y = compressed_level({2, 4});
  auto u = union_merge({iter(x), iter(y)});
  std::vector<Index> coords;
  for (auto [c, m] : u)
    coords.push_back(c);
  CHECK(coords == std::vector<Index>{0, 2, 3, 4});
  CHECK(u[1].second == 3);

  std::vector<LevelIterator> its{iter(x), iter(y)};
  std::vector<Index> both;
  coiterate(its, 0, [&](Index c, std::uint64_t m) {
    if (m == 3) both.push_back(c);
  });
  CHECK(both == std::vector<Index>{2});
}

TEST_CASE("three-way union sets one flag per coordinate") {
  LevelStorage a = compressed_level({0}), b = compressed_level({1}), c = compressed_level({2});
  auto u = union_merge({iter(a), iter(b), iter(c)});
  REQUIRE(u.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(u[k].first == k);
    CHECK(u[k].second == bit(k));
  }
}

TEST_CASE("property: union visits every coordinate once") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + static_cast<int>(rng() % 4);
    std::vector<LevelStorage> levels;
    std::set<Index> expect;
    for (int k = 0; k < n; ++k) {
      std::set<Index> s;
      int m = static_cast<int>(rng() % 8);
      for (int e = 0; e < m; ++e)
        s.insert(static_cast<Index>(rng() % 16));
      expect.insert(s.begin(), s.end());
      levels.push_back(compressed_level({s.begin(), s.end()}));
    }
    std::vector<LevelIterator> its;
    for (const LevelStorage &l : levels)
      its.push_back(iter(l));
    auto u = union_merge(its);
    std::vector<Index> got;
    for (auto [c, m] : u) {
      got.push_back(c);
      for (int k = 0; k < n; ++k) {
        const auto &crd = *levels[k].crd;
        bool in = std::find(crd.begin(), crd.end(), c) != crd.end();
        CHECK(in == static_cast<bool>(m & bit(k)));
      }
    }
    CHECK(got == std::vector<Index>(expect.begin(), expect.end()));
  }
}

TEST_CASE("duplicate coordinates are grouped") {
  LevelStorage rows = compressed_level({0, 1, 1, 3});
  LevelIterator it = iter(rows);
  std::vector<std::tuple<Index, Index, Index>> got;
  for (; it.valid(); it.advance())
    got.emplace_back(it.coord(), it.group().at(0), it.group().at(0) + it.group().size());
  CHECK(got == std::vector<std::tuple<Index, Index, Index>>{{0, 0, 1}, {1, 1, 3}, {3, 3, 4}});

  LevelStorage uniq = compressed_level({0, 2, 5});
  std::vector<Index> seen;
  for (LevelIterator u = iter(uniq); u.valid(); u.advance()) {
    CHECK(u.group().size() == 1);
    seen.push_back(u.coord());
  }
  CHECK(seen == std::vector<Index>{0, 2, 5});

  std::vector<double> vals{1.0, 2.5};
  CHECK(group_value(vals, Group{0, 2}) == 3.5);
}

TEST_CASE("an unordered segment is reordered") {
  LevelStorage h = make_hashed_level(4);
  h.pos = {0, 4};
  *h.crd = {-1, 5, 1, -1};
  LevelIterator::Options o;
  o.sort = true;
  o.ordered = false;
  LevelIterator it(h, Group{0, 1}, {}, o);
  std::vector<std::pair<Index, Index>> got;
  for (; it.valid(); it.advance())
    got.emplace_back(it.coord(), it.group().at(0));
  CHECK(got == std::vector<std::pair<Index, Index>>{{1, 2}, {5, 1}});

  LevelStorage sorted = compressed_level({1, 4, 6});
  LevelIterator s(sorted, Group{0, 1}, {}, o);
  std::vector<Index> c;
  for (; s.valid(); s.advance())
    c.push_back(s.coord());
  CHECK(c == std::vector<Index>{1, 4, 6});

  LevelStorage empty = make_hashed_level(4);
  empty.pos = {0, 4};
  *empty.crd = {-1, -1, -1, -1};
  CHECK_FALSE(LevelIterator(empty, Group{0, 1}, {}, o).valid());
}

TEST_CASE("row sums of the example matrix") {
  TensorStorage a = assemble(preset("csr"), {4, 6}, test::example_matrix());
  CoordList ones(1);
  for (Index j = 0; j < 6; ++j)
    ones.push({j}, 1.0);
  TensorStorage x = assemble(preset("dense"), {6}, ones);
  TensorStorage y = evaluate("y(i) = A(i,j) * x(j)", {{"A", &a}, {"x", &x}}, preset("dense"));
  CHECK(y.vals == std::vector<double>{6, 10, 8, 13});
}

TEST_CASE("the three motivating kernels") {
  std::vector<Index> dims{8, 6};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    test::Operands ops;
    ops.add("b", "coo-soa", dims, test::random_coords(dims, 0.3, seed, 3));
    ops.add("c", "dense:2", dims, test::random_coords(dims, 0.5, seed + 100));
    ops.add("d", "csr", dims, test::random_coords(dims, 0.3, seed + 200));
    CHECK(test::check_against_oracle("a(i,j) = b(i,j) * c(i,j)", ops, "dense:2") == "");
    CHECK(test::check_against_oracle("a(i,j) = d(i,j) * c(i,j)", ops, "dense:2") == "");
    CHECK(test::check_against_oracle("a(i,j) = d(i,j) * b(i,j)", ops, "dense:2") == "");
    CHECK(test::check_against_oracle("a(i,j) = d(i,j) + b(i,j)", ops, "dense:2") == "");
  }
}

TEST_CASE("fusion") {
  std::vector<Index> dims{8, 6};
  CoordList coo = test::random_coords(dims, 0.3, 1);
  TensorStorage b = assemble(preset("coo-soa"), dims, coo);
  TensorStorage c = assemble(preset("dense", {2}), dims, test::random_coords(dims, 0.5, 2));
  TensorStorage d = assemble(preset("csr"), dims, test::random_coords(dims, 0.3, 3));
  StorageBindings in{{"b", &b}, {"c", &c}, {"d", &d}};
  ScheduleOptions off;
  off.fuse = false;

  // COO times dense walks every stored position in a single loop.
  Schedule fused = plan("a(i,j) = b(i,j) * c(i,j)", in, preset("dense", {2}));
  CHECK(has_raw_root(fused));
  EvalStats st;
  evaluate(fused, in, &st);
  CHECK(st.rootVisits == static_cast<std::int64_t>(coo.size()));
  CHECK_FALSE(has_raw_root(plan("a(i,j) = b(i,j) * c(i,j)", in, preset("dense", {2}), off)));

  // The COO column level must co-iterate with CSR, so nothing is fused.
  CHECK_FALSE(has_raw_root(plan("a(i,j) = d(i,j) * b(i,j)", in, preset("dense", {2}))));

  TensorStorage b3 = assemble(preset("coo-3"), {4, 6, 8}, test::random_coords({4, 6, 8}, 0.3, 4));
  TensorStorage v = assemble(preset("dense"), {8}, test::random_coords({8}, 1.0, 5));
  StorageBindings in3{{"B", &b3}, {"c", &v}};
  Schedule ttv = plan("A(i,j) = B(i,j,k) * c(k)", in3, preset("dense", {2}));
  CHECK(has_raw_root(ttv));
}

TEST_CASE("property: fusion is transparent") {
  for (const test::SuiteCase &c : test::oracle_suite()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      test::Instance inst = test::make_instance(c, seed, 12);
      ScheduleOptions off;
      off.fuse = false;
      TensorFormat out = parse_format(c.out);
      CoordList a = canonical_nonzeros(enumerate(evaluate(c.expr, inst.ops.bindings(), out)));
      CoordList b =
          canonical_nonzeros(enumerate(evaluate(c.expr, inst.ops.bindings(), out, off)));
      CAPTURE(c.label());
      CHECK(approx_equal(a, b, 1e-12));
    }
  }
}

TEST_CASE("property: intersection with a located partner visits at most nnz") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Index n = 1 + static_cast<Index>(seed * 7 % 32);
    CoordList xs = test::random_coords({n}, 0.01 + 0.49 * (seed % 10) / 9.0, seed);
    TensorStorage x = assemble(preset("sparse-vector"), {n}, xs);
    const char *partner = seed % 2 ? "dense" : "hash-vector";
    TensorStorage y = assemble(preset(partner), {n}, test::random_coords({n}, 0.5, seed + 1));
    EvalStats st;
    TensorStorage z =
        evaluate("z(i) = x(i) * y(i)", {{"x", &x}, {"y", &y}}, preset("dense"), {}, &st);
    CAPTURE(partner);
    CHECK(st.visits <= static_cast<std::int64_t>(x.levels[0].crd->size()));
  }
}

TEST_CASE("engine matches the dense oracle on the kernel grid") {
  for (const test::SuiteCase &c : test::oracle_suite()) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      test::Instance inst = test::make_instance(c, seed);
      std::string why = test::check_against_oracle(c.expr, inst.ops, c.out);
      CAPTURE(c.label());
      CAPTURE(seed);
      CHECK(why == "");
    }
  }
}

TEST_CASE("unsupported combinations are rejected up front") {
  std::vector<Index> dims{4, 6};
  test::Operands ops;
  ops.add("B", "dia", dims, test::example_matrix());
  ops.add("C", "csr", dims, test::example_matrix());
  ops.add("E", "ell", dims, test::example_matrix());
  ops.add("F", "bcsr", dims, test::example_matrix());
  CHECK_THROWS_AS(evaluate("A(i,j) = B(i,j) + C(i,j)", ops.bindings(), preset("dense", {2})),
                  UnsupportedError);
  CHECK_THROWS_AS(evaluate("A(i,j) = E(i,j) + C(i,j)", ops.bindings(), preset("dense", {2})),
                  UnsupportedError);
  CHECK_THROWS_AS(evaluate("A(i,j) = C(i,j) * F(i,j)", ops.bindings(), preset("dense", {2})),
                  UnsupportedError);
  CHECK_THROWS_AS(evaluate("A(i,j) = C(i,j) * B(i,j)", ops.bindings(), preset("ell")),
                  Error);
}

} // TEST_SUITE
