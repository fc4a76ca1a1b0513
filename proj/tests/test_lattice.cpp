#include <algorithm>
#include <random>
#include <set>

#include "common.hpp"
#include "doctest.h"
#include "spl/lattice.hpp"

using namespace spl;

namespace {

Dim level_dim(int leaf, LevelFormat fmt, std::string name) {
  Dim d;
  d.leaf = leaf;
  d.kind = Dim::Level;
  d.level = 0;
  d.fmt = fmt;
  d.name = std::move(name);
  return d;
}

ExprPtr acc(const std::string &t, int leaf) { return make_access(t, {"i"}, leaf); }

std::vector<std::vector<int>> dim_sets(const std::vector<LatticePoint> &ps) {
  std::vector<std::vector<int>> out;
  for (const LatticePoint &p : ps)
    out.push_back(p.dims);
  return out;
}

Schedule csr_plus_coo_schedule(const std::string &cooFormat) {
  ShapeBindings shapes;
  for (const char *n : {"A", "B", "C"})
    shapes[n] = TensorShape{2, {4, 6}};
  FormatBindings formats{{"A", preset("dense", {2})},
                         {"B", preset("csr")},
                         {"C", parse_format(cooFormat)}};
  return make_schedule(validate(parse("A(i,j) = B(i,j) + C(i,j)"), shapes), formats);
}

// Reference recursion for the co-iteration set of a sub-expression.
std::set<int> coiter_oracle(const Expr &e, const DimTable &dims) {
  if (e.kind == Expr::Access) return {e.leaf};
  if (e.kind == Expr::Literal) return {};
  std::set<int> l = coiter_oracle(*e.lhs, dims), r = coiter_oracle(*e.rhs, dims);
  if (e.kind == Expr::Add) {
    l.insert(r.begin(), r.end());
    return l;
  }
  auto drop_locatable = [&](std::set<int> s) {
    std::set<int> out;
    for (int d : s)
      if (!dims.at(d).locatable()) out.insert(d);
    return out;
  };
  std::set<int> a = l, b = r;
  for (int d : drop_locatable(r))
    a.insert(d);
  for (int d : drop_locatable(l))
    b.insert(d);
  return a.size() <= b.size() ? a : b;
}

} // namespace

TEST_SUITE("lattice") {

TEST_CASE("sum of two sparse vectors has three points") {
  DimTable dims{{0, level_dim(0, compressed(), "x")}, {1, level_dim(1, compressed(), "y")}};
  MergeLattice l = build_lattice(make_add(acc("x", 0), acc("y", 1)), dims);
  CHECK(dim_sets(l.points) == std::vector<std::vector<int>>{{0, 1}, {0}, {1}});
  CHECK(to_string(*l.points[0].expr) == "x(i) + y(i)");
  CHECK(to_string(*l.points[1].expr) == "x(i)");
  CHECK(prune_full(l, dims).points.size() == 3);
}

TEST_CASE("product of two sparse vectors has one point") {
  DimTable dims{{0, level_dim(0, compressed(), "x")}, {1, level_dim(1, compressed(), "y")}};
  MergeLattice l = build_lattice(make_mul(acc("x", 0), acc("y", 1)), dims);
  CHECK(dim_sets(l.points) == std::vector<std::vector<int>>{{0, 1}});
  CoiterSplit s = split_coiter_locate(l.points[0], dims);
  CHECK(s.coiter == std::vector<int>{0, 1});
  CHECK(s.locate.empty());
}

TEST_CASE("sparse times dense locates into the dense operand") {
  DimTable dims{{0, level_dim(0, compressed(), "x")}, {1, level_dim(1, dense(), "y")}};
  MergeLattice l = build_lattice(make_mul(acc("x", 0), acc("y", 1)), dims);
  REQUIRE(l.points.size() == 1);
  CHECK(prune_full(l, dims).points.size() == 1);
  CoiterSplit s = split_coiter_locate(l.points[0], dims);
  CHECK(s.coiter == std::vector<int>{0});
  CHECK(s.locate == std::vector<int>{1});
}

TEST_CASE("sum times dense") {
  DimTable dims{{0, level_dim(0, compressed(), "a")},
                {1, level_dim(1, compressed(), "b")},
                {2, level_dim(2, dense(), "c")}};
  ExprPtr e = make_mul(make_add(acc("a", 0), acc("b", 1)), acc("c", 2));
  MergeLattice l = build_lattice(e, dims);
  REQUIRE(l.points.size() == 3);
  CoiterSplit s = split_coiter_locate(l.points[0], dims);
  CHECK(s.coiter == std::vector<int>{0, 1});
  CHECK(s.locate == std::vector<int>{2});
  std::set<int> ref = coiter_oracle(*l.points[0].expr, dims);
  CHECK(std::vector<int>(ref.begin(), ref.end()) == s.coiter);
}

TEST_CASE("full dimensions are co-iterated once") {
  DimTable dims{{0, level_dim(0, dense(), "a")}, {1, level_dim(1, dense(), "b")}};
  MergeLattice l = build_lattice(make_add(acc("a", 0), acc("b", 1)), dims);
  MergeLattice p = prune_full(l, dims);
  REQUIRE(p.points.size() == 1);
  CoiterSplit s = split_coiter_locate(p.points[0], dims);
  CHECK(s.coiter.size() == 1);
  CHECK(s.locate.size() == 1);
}

TEST_CASE("addition with a row-major and a COO operand") {
  Schedule plain = csr_plus_coo_schedule("coo-soa");
  const LoopNode &i = *plain.root;
  CHECK(i.lattice.allPoints.size() == 3);
  CHECK(i.lattice.points.size() == 2);
  REQUIRE(!i.children.empty());
  const LoopNode &j = *i.children[0];
  CHECK(j.lattice.points.size() == 3);
  // The point holding only B dominates itself alone.
  int onlyB = -1;
  for (std::size_t k = 0; k < j.lattice.allPoints.size(); ++k)
    if (j.lattice.allPoints[k].dims == std::vector<int>{0}) onlyB = static_cast<int>(k);
  REQUIRE(onlyB >= 0);
  CHECK(dominated_points(j.lattice, j.lattice.allPoints[onlyB]) == std::vector<int>{onlyB});
  CHECK(dominated_points(j.lattice, j.lattice.allPoints[0]).size() == 3);

  Schedule full = csr_plus_coo_schedule("{compressed(~u,full),singleton}");
  CHECK(full.root->lattice.allPoints.size() == 3);
  CHECK(full.root->lattice.points.size() == 1);
  CHECK(full.root->children[0]->lattice.points.size() == 3);
  std::string dump = full.dump_lattices();
  CHECK(dump.find("point 0: {B:0, C:0}") != std::string::npos);
}

TEST_CASE("singleton lattice dominates itself") {
  DimTable dims{{0, level_dim(0, compressed(), "x")}};
  MergeLattice l = build_lattice(acc("x", 0), dims);
  REQUIRE(l.points.size() == 1);
  CHECK(dominated_points(l, l.points[0]) == std::vector<int>{0});
}

TEST_CASE("conversion plans") {
  Dim cooRow = level_dim(0, compressed({{Property::Unique, false}}), "C");
  PlanContext chained;
  chained.childPositionIterable = chained.childOrdered = chained.childCompact = true;
  CHECK(build_plan(cooRow, chained) == Directive::DedupChained);
  CHECK(build_plan(cooRow, PlanContext{}) == Directive::DedupScratch);

  Dim hash = level_dim(0, hashed(), "h");
  PlanContext located;
  located.located = true;
  CHECK(build_plan(hash, located) == Directive::AccessByLocate);
  PlanContext merged;
  merged.needsOrder = true;
  CHECK(build_plan(hash, merged) == Directive::ReorderScratch);

  CHECK(build_plan(level_dim(0, compressed(), "x"), merged) == Directive::None);
  CHECK(build_plan(level_dim(0, dense(), "d"), located) == Directive::None);

  DimTable dims{{0, level_dim(0, compressed(), "x")}, {1, hash}};
  MergeLattice inter = build_lattice(make_mul(acc("x", 0), acc("h", 1)), dims);
  plan_lattice(inter, dims, false, {});
  CHECK(inter.locate[0] == std::vector<int>{1});
  CHECK(inter.plans[0].at(1) == Directive::AccessByLocate);
  MergeLattice uni = build_lattice(make_add(acc("x", 0), acc("h", 1)), dims);
  plan_lattice(uni, dims, false, {});
  CHECK(uni.plans[0].at(1) == Directive::ReorderScratch);
}

TEST_CASE("property: point counts for k-ary sums and products") {
  for (int k = 1; k <= 4; ++k) {
    DimTable dims;
    ExprPtr sum, prod;
    for (int d = 0; d < k; ++d) {
      std::string name(1, static_cast<char>('a' + d));
      dims[d] = level_dim(d, compressed(), name);
      sum = sum ? make_add(sum, acc(name, d)) : acc(name, d);
      prod = prod ? make_mul(prod, acc(name, d)) : acc(name, d);
    }
    MergeLattice ls = build_lattice(sum, dims), lp = build_lattice(prod, dims);
    CHECK(ls.points.size() == (std::size_t{1} << k) - 1);
    CHECK(lp.points.size() == 1);
    // Every nonempty subset appears once, ordered by decreasing size.
    std::vector<std::vector<int>> sets = dim_sets(ls.points);
    std::set<std::vector<int>> seen(sets.begin(), sets.end());
    CHECK(seen.size() == ls.points.size());
    for (std::size_t p = 1; p < ls.points.size(); ++p)
      CHECK(ls.points[p - 1].dims.size() >= ls.points[p].dims.size());
    CHECK(dominated_points(ls, ls.points[0]).size() == ls.points.size());
  }
}

TEST_CASE("property: split matches the reference recursion") {
  std::mt19937_64 rng(11);
  const std::vector<LevelFormat> kinds{compressed(), dense(), hashed(),
                                       compressed({{Property::Unique, false}})};
  for (int trial = 0; trial < 200; ++trial) {
    DimTable dims;
    ExprPtr e;
    int n = 2 + static_cast<int>(rng() % 3);
    for (int d = 0; d < n; ++d) {
      std::string name(1, static_cast<char>('a' + d));
      LevelFormat f = kinds[rng() % kinds.size()];
      if (f.kind == LevelKind::Dense) f = compressed();
      dims[d] = level_dim(d, f, name);
      ExprPtr a = acc(name, d);
      e = !e ? a : rng() % 2 ? make_add(e, a) : make_mul(e, a);
    }
    MergeLattice l = build_lattice(e, dims);
    plan_lattice(l, dims, false, {});
    for (std::size_t p = 0; p < l.points.size(); ++p) {
      std::set<int> ref = coiter_oracle(*l.points[p].expr, dims);
      CAPTURE(to_string(*l.points[p].expr));
      CHECK(std::vector<int>(ref.begin(), ref.end()) == l.coiter[p]);
      std::vector<int> all = l.coiter[p];
      all.insert(all.end(), l.locate[p].begin(), l.locate[p].end());
      std::sort(all.begin(), all.end());
      CHECK(all == l.points[p].dims);
      for (int d : l.locate[p])
        CHECK(dims.at(d).locatable());
      for (int d : l.coiter[p]) {
        const Dim &dim = dims.at(d);
        if (!dim.ordered() && !dim.locatable())
          CHECK(l.plans[p].at(d) == Directive::ReorderScratch);
      }
    }
  }
}

TEST_CASE("property: pruning preserves results") {
  const std::vector<std::string> rowFull{"csr", "dense:2", "{compressed(~u,full),singleton}",
                                         "{compressed(full),compressed}"};
  const std::vector<std::string> sparse{"csr", "coo-soa", "dcsr", "coo-aos"};
  const std::vector<std::string> exprs{"A(i,j) = B(i,j) + C(i,j)", "A(i,j) = B(i,j) * C(i,j)",
                                       "A(i,j) = B(i,j) + C(i,j) * B(i,j)"};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Index> dims{6, 7};
    test::Operands ops;
    std::string fb = rowFull[rng() % rowFull.size()];
    std::string fc = rng() % 2 ? rowFull[rng() % rowFull.size()] : sparse[rng() % sparse.size()];
    // A full row level needs every row present.
    CoordList b = test::random_coords(dims, 0.3, 100 + trial, 3);
    CoordList c = test::random_coords(dims, 0.2, 200 + trial);
    for (Index r = 0; r < dims[0]; ++r) {
      b.push({r, r}, 1.0);
      c.push({r, (r + 1) % dims[1]}, 2.0);
    }
    ops.add("B", fb, dims, b);
    ops.add("C", fc, dims, c);
    std::string expr = exprs[rng() % exprs.size()];
    ScheduleOptions on, off;
    off.pruneFull = false;
    CAPTURE(fb);
    CAPTURE(fc);
    CAPTURE(expr);
    TensorStorage withPrune = evaluate(expr, ops.bindings(), preset("dense", {2}), on);
    TensorStorage without = evaluate(expr, ops.bindings(), preset("dense", {2}), off);
    CHECK(canonical_nonzeros(enumerate(withPrune)).vals ==
          canonical_nonzeros(enumerate(without)).vals);
    CHECK(test::check_against_oracle(expr, ops, "dense:2", on) == "");
  }
}

} // TEST_SUITE
