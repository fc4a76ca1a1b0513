#include <algorithm>
#include <random>

#include "doctest.h"
#include "spl/graph.hpp"

using namespace spl;

namespace {

struct Operand {
  std::string name;
  std::string format;
  std::vector<Index> dims;
};

IterationGraph graph_for(const std::string &expr, const std::vector<Operand> &ops) {
  ShapeBindings shapes;
  FormatBindings formats;
  for (const Operand &o : ops) {
    shapes[o.name] = TensorShape{static_cast<int>(o.dims.size()), o.dims};
    formats[o.name] = parse_format(o.format);
  }
  IterationGraph g = build_graph(validate(parse(expr), shapes), formats);
  order_vars(g);
  return g;
}

std::vector<std::string> order_names(const IterationGraph &g) {
  std::vector<std::string> names;
  for (int v : g.order)
    names.push_back(g.vars[v].name);
  return names;
}

bool respects_edges(const IterationGraph &g, const std::vector<int> &order) {
  std::vector<int> rank(g.vars.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    rank[order[k]] = static_cast<int>(k);
  return std::all_of(g.edges.begin(), g.edges.end(),
                     [&](auto e) { return rank[e.first] < rank[e.second]; });
}

// Every permutation of the variables that respects the edge set.
std::vector<std::vector<int>> valid_orders(const IterationGraph &g) {
  std::vector<int> perm(g.vars.size());
  for (std::size_t k = 0; k < perm.size(); ++k)
    perm[k] = static_cast<int>(k);
  std::vector<std::vector<int>> out;
  do {
    if (respects_edges(g, perm)) out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

} // namespace

TEST_SUITE("graph") {

TEST_CASE("CSR plus COO orders rows first") {
  IterationGraph g = graph_for("A(i,j) = B(i,j) + C(i,j)", {{"A", "dense:2", {4, 6}},
                                                            {"B", "csr", {4, 6}},
                                                            {"C", "coo-soa", {4, 6}}});
  CHECK(order_names(g) == std::vector<std::string>{"i", "j"});
  CHECK(g.paths.size() == 3);
  CHECK(g.paths[0].tensor == "A");
  CHECK(g.paths[1].tensor == "B");
  CHECK(g.paths[2].tensor == "C");
}

TEST_CASE("CSC SpMV orders columns first") {
  IterationGraph g = graph_for("y(i) = A(i,j) * x(j)",
                               {{"y", "dense", {4}}, {"A", "csc", {4, 6}}, {"x", "dense", {6}}});
  CHECK(order_names(g) == std::vector<std::string>{"j", "i"});
  std::vector<std::vector<int>> all = valid_orders(g);
  REQUIRE(all.size() == 1);
  CHECK(all[0] == g.order);
}

TEST_CASE("inner product over CSF tensors") {
  IterationGraph g = graph_for("alpha() = B(i,j,k) * C(i,j,k)", {{"alpha", "dense:0", {}},
                                                                 {"B", "csf", {3, 4, 5}},
                                                                 {"C", "csf", {3, 4, 5}}});
  CHECK(order_names(g) == std::vector<std::string>{"i", "j", "k"});
}

TEST_CASE("matrix product respects every path") {
  IterationGraph g = graph_for("A(i,j) = B(i,k) * C(k,j)", {{"A", "dense:2", {3, 5}},
                                                            {"B", "csr", {3, 4}},
                                                            {"C", "csr", {4, 5}}});
  CHECK(order_names(g) == std::vector<std::string>{"i", "k", "j"});
  std::vector<std::vector<int>> all = valid_orders(g);
  REQUIRE(all.size() == 1);
  CHECK(all[0] == g.order);
}

TEST_CASE("conflicting paths form a cycle") {
  try {
    graph_for("A(i,j) = B(i,j) + C(i,j)",
              {{"A", "dense:2", {4, 4}}, {"B", "csr", {4, 4}}, {"C", "csc", {4, 4}}});
    FAIL("expected a cycle");
  } catch (const GraphError &e) {
    std::string msg = e.what();
    CHECK(msg.find("cyclic ordering constraints") != std::string::npos);
    CHECK(msg.find("mode ordering") != std::string::npos);
  }
}

TEST_CASE("structural levels add synthetic variables") {
  IterationGraph dia = graph_for("y(i) = A(i,j) * x(j)",
                                 {{"y", "dense", {4}}, {"A", "dia", {4, 6}}, {"x", "dense", {6}}});
  CHECK(std::count_if(dia.vars.begin(), dia.vars.end(),
                      [](const LoopVar &v) { return v.kind == LoopVar::Synthetic; }) == 1);
  IterationGraph bcsr = graph_for(
      "y(i) = A(i,j) * x(j)", {{"y", "dense", {4}}, {"A", "bcsr", {4, 6}}, {"x", "dense", {6}}});
  CHECK(std::count_if(bcsr.vars.begin(), bcsr.vars.end(),
                      [](const LoopVar &v) { return v.kind == LoopVar::Outer; }) == 2);
  CHECK(respects_edges(bcsr, bcsr.order));
}

TEST_CASE("property: orders are valid and deterministic") {
  const std::vector<std::string> mats{"csr", "csc", "dcsr", "coo-soa", "dense:2", "ell"};
  const std::vector<std::string> exprs{"A(i,j) = B(i,k) * C(k,j)", "A(i,j) = B(i,j) + C(i,j)",
                                       "A(i,j) = B(i,j) * C(i,j)", "A(i,j) = B(j,k) * C(k,i)"};
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::string &expr = exprs[rng() % exprs.size()];
    std::vector<Operand> ops{{"A", mats[rng() % (mats.size() - 1)], {4, 4}},
                             {"B", mats[rng() % mats.size()], {4, 4}},
                             {"C", mats[rng() % mats.size()], {4, 4}}};
    IterationGraph g;
    try {
      g = graph_for(expr, ops);
    } catch (const GraphError &) {
      continue;
    }
    ++checked;
    CAPTURE(expr);
    CHECK(respects_edges(g, g.order));
    CHECK(graph_for(expr, ops).order == g.order);
    CHECK(graph_for(expr, ops).dump() == g.dump());
    if (g.vars.size() <= 6) {
      std::vector<std::vector<int>> all = valid_orders(g);
      CHECK(std::find(all.begin(), all.end(), g.order) != all.end());
    }
  }
  CHECK(checked > 100);
}

} // TEST_SUITE
