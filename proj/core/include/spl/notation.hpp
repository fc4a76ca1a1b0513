#ifndef SPL_NOTATION_HPP
#define SPL_NOTATION_HPP

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "spl/error.hpp"

namespace spl {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Index-notation expression node. Leaves (accesses and literals) carry a
/// `leaf` id numbering them left to right; restricted copies of an expression
/// keep the ids so leaves can be matched across copies.
struct Expr {
  enum Kind { Access, Literal, Add, Mul };
  Kind kind = Literal;
  std::string tensor;
  std::vector<std::string> vars;
  double value = 0.0;
  ExprPtr lhs;
  ExprPtr rhs;
  int leaf = -1;
  Span span;

  bool is_leaf() const { return kind == Access || kind == Literal; }
};

ExprPtr make_access(std::string tensor, std::vector<std::string> vars, int leaf = -1);
ExprPtr make_literal(double value, int leaf = -1);
ExprPtr make_add(ExprPtr l, ExprPtr r);
ExprPtr make_mul(ExprPtr l, ExprPtr r);

struct Assignment {
  std::string tensor;
  std::vector<std::string> vars;
  ExprPtr rhs;
  int numLeaves = 0;
};

/// Parses `ident(ivars) = term ((+|-) term)*`; a scalar may drop the empty
/// parentheses. Subtraction becomes addition of the operand scaled by -1.
Assignment parse(std::string_view text);

std::string to_string(const Expr &e);
std::string to_string(const Assignment &a);

bool structurally_equal(const Expr &a, const Expr &b);
bool structurally_equal(const Assignment &a, const Assignment &b);

/// Leaves of `e` in left-to-right order.
std::vector<const Expr *> leaves(const Expr &e);
/// Index variables in order of first appearance.
std::vector<std::string> vars_of(const Expr &e);

/// Renumbers the leaves of `e` left to right and returns the count.
ExprPtr number_leaves(const ExprPtr &e, int &next);

struct TensorShape {
  int order = 0;
  std::vector<Index> dims;
};

using ShapeBindings = std::map<std::string, TensorShape>;

struct CheckedAssignment {
  Assignment assignment;
  /// Every index variable: the output's first, then the rest by first
  /// appearance on the right-hand side.
  std::vector<std::string> vars;
  std::vector<std::string> reductionVars;
  std::map<std::string, Index> extents;
};

/// Checks bindings, arities and dimension agreement.
CheckedAssignment validate(const Assignment &a, const ShapeBindings &bindings);

} // namespace spl

#endif
