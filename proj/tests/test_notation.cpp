#include <random>

#include "doctest.h"
#include "spl/notation.hpp"

using namespace spl;

namespace {

ShapeBindings shapes(std::initializer_list<std::pair<const char *, std::vector<Index>>> l) {
  ShapeBindings b;
  for (const auto &[name, dims] : l)
    b[name] = TensorShape{static_cast<int>(dims.size()), dims};
  return b;
}

// Random expression text over +, -, *, literals and parentheses.
class ExprGen {
public:
  explicit ExprGen(std::uint64_t seed) : rng_(seed) {}

  std::string sum(int depth) {
    std::string s = term(depth);
    int n = pick(3);
    for (int k = 0; k < n; ++k)
      s += (pick(2) ? " + " : " - ") + term(depth);
    return s;
  }

private:
  std::string term(int depth) {
    std::string s = factor(depth);
    int n = pick(3);
    for (int k = 0; k < n; ++k)
      s += " * " + factor(depth);
    return s;
  }

  std::string factor(int depth) {
    int r = pick(depth > 0 ? 6 : 5);
    if (r == 5) return "(" + sum(depth - 1) + ")";
    if (r == 4) return std::to_string(pick(9) + 1) + (pick(2) ? ".5" : "");
    static const char *names[] = {"B", "C", "D", "E"};
    static const char *vars[] = {"i", "j", "k"};
    std::string s = std::string(names[pick(4)]) + "(";
    int arity = pick(3) + 1;
    for (int k = 0; k < arity; ++k)
      s += std::string(k ? "," : "") + vars[pick(3)];
    return s + ")";
  }

  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

  std::mt19937_64 rng_;
};

} // namespace

TEST_SUITE("notation") {

TEST_CASE("parse SpMV") {
  Assignment a = parse("y(i) = A(i,j) * x(j)");
  CHECK(a.tensor == "y");
  CHECK(a.vars == std::vector<std::string>{"i"});
  REQUIRE(a.rhs->kind == Expr::Mul);
  CHECK(a.rhs->lhs->tensor == "A");
  CHECK(a.rhs->lhs->vars == std::vector<std::string>{"i", "j"});
  CHECK(a.rhs->rhs->tensor == "x");
  CHECK(a.numLeaves == 2);
  CheckedAssignment c = validate(a, shapes({{"y", {4}}, {"A", {4, 6}}, {"x", {6}}}));
  CHECK(c.reductionVars == std::vector<std::string>{"j"});
  CHECK(c.extents.at("j") == 6);
  CHECK(c.extents.at("i") == 4);
}

TEST_CASE("parse matrix addition") {
  Assignment a = parse("A(i,j) = B(i,j) + C(i,j)");
  REQUIRE(a.rhs->kind == Expr::Add);
  CHECK(a.rhs->lhs->kind == Expr::Access);
  CHECK(a.rhs->rhs->kind == Expr::Access);
  CheckedAssignment c =
      validate(a, shapes({{"A", {3, 3}}, {"B", {3, 3}}, {"C", {3, 3}}}));
  CHECK(c.reductionVars.empty());
}

TEST_CASE("parse a scalar output") {
  Assignment a = parse("alpha() = B(i,j,k) * C(i,j,k)");
  CHECK(a.tensor == "alpha");
  CHECK(a.vars.empty());
  CheckedAssignment c =
      validate(a, shapes({{"alpha", {}}, {"B", {2, 3, 4}}, {"C", {2, 3, 4}}}));
  CHECK(c.reductionVars == std::vector<std::string>{"i", "j", "k"});
  CHECK(structurally_equal(parse("alpha = B(i,j,k) * C(i,j,k)"), a));
}

TEST_CASE("MTTKRP reduces over k and l") {
  Assignment a = parse("A(i,j) = B(i,k,l) * C(k,j) * D(l,j)");
  CheckedAssignment c = validate(
      a, shapes({{"A", {3, 5}}, {"B", {3, 4, 2}}, {"C", {4, 5}}, {"D", {2, 5}}}));
  CHECK(c.reductionVars == std::vector<std::string>{"k", "l"});
  CHECK(c.vars == std::vector<std::string>{"i", "j", "k", "l"});
}

TEST_CASE("validation errors") {
  Assignment spmv = parse("y(i) = A(i,j) * x(j)");
  try {
    validate(spmv, shapes({{"y", {4}}, {"A", {4, 6}}, {"x", {5}}}));
    FAIL("expected a dimension mismatch");
  } catch (const ValidationError &e) {
    CHECK(std::string(e.what()).find("dimension mismatch for index variable j") !=
          std::string::npos);
  }
  CHECK_THROWS_AS(validate(spmv, shapes({{"y", {4}}, {"A", {4, 6}}})), ValidationError);
  CHECK_THROWS_AS(validate(spmv, shapes({{"y", {4}}, {"A", {4, 6}}, {"x", {6, 1}}})),
                  ValidationError);
  CHECK_THROWS_AS(validate(parse("y(i,k) = A(i,j) * x(j)"),
                           shapes({{"y", {4, 2}}, {"A", {4, 6}}, {"x", {6}}})),
                  ValidationError);
}

TEST_CASE("syntax errors carry a position") {
  try {
    parse("y(i) = A(i,j) * * x(j)");
    FAIL("expected a syntax error");
  } catch (const ParseError &e) {
    CHECK(e.position() == 16);
  }
  CHECK_THROWS_AS(parse("y(i) A(i)"), ParseError);
  CHECK_THROWS_AS(parse("y(i) = A(i"), ParseError);
  CHECK_THROWS_AS(parse("y(i) = A(i) / B(i)"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
}

TEST_CASE("subtraction desugars to scaled addition") {
  Assignment sub = parse("A(i,j) = B(i,j) - C(i,j)");
  Assignment add = parse("A(i,j) = B(i,j) + (-1) * C(i,j)");
  CHECK(structurally_equal(sub, add));
  CHECK_FALSE(structurally_equal(sub, parse("A(i,j) = B(i,j) + C(i,j)")));
}

TEST_CASE("leaves are numbered left to right") {
  Assignment a = parse("y(i) = 2 * A(i,j) * x(j) + z(i)");
  std::vector<const Expr *> ls = leaves(*a.rhs);
  REQUIRE(ls.size() == 4);
  for (int k = 0; k < 4; ++k)
    CHECK(ls[k]->leaf == k);
  CHECK(ls[0]->kind == Expr::Literal);
  CHECK(vars_of(*a.rhs) == std::vector<std::string>{"i", "j"});
}

TEST_CASE("property: print then parse is the identity") {
  for (std::uint64_t seed = 1; seed <= 500; ++seed) {
    ExprGen gen(seed);
    std::string text = "A(i,j) = " + gen.sum(2);
    Assignment a = parse(text);
    std::string printed = to_string(a);
    Assignment b = parse(printed);
    CAPTURE(text);
    CAPTURE(printed);
    CHECK(structurally_equal(a, b));
    CHECK(to_string(b) == printed);
  }
}

} // TEST_SUITE
