#include "spl/notation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <set>

namespace spl {

ExprPtr make_access(std::string tensor, std::vector<std::string> vars, int leaf) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Access;
  e->tensor = std::move(tensor);
  e->vars = std::move(vars);
  e->leaf = leaf;
  return e;
}

ExprPtr make_literal(double value, int leaf) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Literal;
  e->value = value;
  e->leaf = leaf;
  return e;
}

namespace {

ExprPtr make_binary(Expr::Kind kind, ExprPtr l, ExprPtr r) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->span = {l->span.begin, r->span.end};
  e->lhs = std::move(l);
  e->rhs = std::move(r);
  return e;
}

} // namespace

ExprPtr make_add(ExprPtr l, ExprPtr r) {
  return make_binary(Expr::Add, std::move(l), std::move(r));
}
ExprPtr make_mul(ExprPtr l, ExprPtr r) {
  return make_binary(Expr::Mul, std::move(l), std::move(r));
}

namespace {

class Parser {
public:
  explicit Parser(std::string_view text) : s_(text) {}

  Assignment parse() {
    Assignment a;
    a.tensor = ident();
    a.vars = ivars();
    expect('=');
    ExprPtr rhs = term();
    for (;;) {
      skip();
      if (peek() == '+') {
        ++i_;
        rhs = make_add(rhs, term());
      } else if (peek() == '-') {
        std::size_t at = i_++;
        ExprPtr t = term();
        auto neg = std::const_pointer_cast<Expr>(make_literal(-1.0));
        neg->span = {at, at + 1};
        rhs = make_add(rhs, make_mul(neg, t));
      } else {
        break;
      }
    }
    skip();
    if (i_ != s_.size()) fail("unexpected '" + std::string(1, s_[i_]) + "'");
    int next = 0;
    a.rhs = number_leaves(rhs, next);
    a.numLeaves = next;
    return a;
  }

private:
  ExprPtr term() {
    ExprPtr t = factor();
    for (;;) {
      skip();
      if (peek() != '*') return t;
      ++i_;
      t = make_mul(t, factor());
    }
  }

  ExprPtr factor() {
    skip();
    std::size_t start = i_;
    char c = peek();
    if (c == '(') {
      ++i_;
      ExprPtr inner = term();
      for (;;) {
        skip();
        if (peek() == '+') {
          ++i_;
          inner = make_add(inner, term());
        } else if (peek() == '-') {
          std::size_t at = i_++;
          auto neg = std::const_pointer_cast<Expr>(make_literal(-1.0));
          neg->span = {at, at + 1};
          inner = make_add(inner, make_mul(neg, term()));
        } else {
          break;
        }
      }
      expect(')');
      return inner;
    }
    if (c == '-' || c == '+') {
      ++i_;
      skip();
      if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') {
        ExprPtr lit = number(start);
        if (c == '-') std::const_pointer_cast<Expr>(lit)->value *= -1;
        return lit;
      }
      ExprPtr f = factor();
      if (c == '+') return f;
      auto neg = std::const_pointer_cast<Expr>(make_literal(-1.0));
      neg->span = {start, start + 1};
      return make_mul(neg, f);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number(start);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string name = ident();
      auto e = std::const_pointer_cast<Expr>(make_access(name, ivars()));
      e->span = {start, i_};
      return e;
    }
    if (c == '\0') fail("unexpected end of expression");
    fail("unexpected '" + std::string(1, c) + "'");
  }

  ExprPtr number(std::size_t start) {
    std::size_t numStart = i_;
    std::string text(s_.substr(numStart));
    char *end = nullptr;
    double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str()) fail("expected a number");
    i_ = numStart + static_cast<std::size_t>(end - text.c_str());
    auto e = std::const_pointer_cast<Expr>(make_literal(v));
    e->span = {start, i_};
    return e;
  }

  std::string ident() {
    skip();
    std::size_t start = i_;
    if (!(std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_'))
      fail("expected a name");
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) {
      ++i_;
    }
    return std::string(s_.substr(start, i_ - start));
  }

  // A missing list denotes a scalar.
  std::vector<std::string> ivars() {
    skip();
    std::vector<std::string> vars;
    if (peek() != '(') return vars;
    ++i_;
    skip();
    if (peek() == ')') {
      ++i_;
      return vars;
    }
    for (;;) {
      vars.push_back(ident());
      skip();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      break;
    }
    expect(')');
    return vars;
  }

  char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_])))
      ++i_;
  }
  void expect(char c) {
    skip();
    if (peek() != c) {
      fail(std::string("expected '") + c + "'" +
           (peek() ? std::string(" but found '") + peek() + "'" : std::string(" at end of input")));
    }
    ++i_;
  }
  [[noreturn]] void fail(const std::string &msg) const { throw ParseError(i_, msg); }

  std::string_view s_;
  std::size_t i_ = 0;
};

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  // Shortest form that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return s;
}

void print(const Expr &e, std::string &out, int parentPrec) {
  switch (e.kind) {
  case Expr::Access:
    out += e.tensor + "(";
    for (std::size_t k = 0; k < e.vars.size(); ++k)
      out += (k ? "," : "") + e.vars[k];
    out += ")";
    return;
  case Expr::Literal: out += format_number(e.value); return;
  case Expr::Add:
  case Expr::Mul: {
    int prec = e.kind == Expr::Add ? 1 : 2;
    bool paren = prec < parentPrec;
    if (paren) out += "(";
    print(*e.lhs, out, prec);
    out += e.kind == Expr::Add ? " + " : " * ";
    // Both operators associate left, so a right operand of equal precedence
    // needs parentheses to keep its tree shape.
    print(*e.rhs, out, prec + 1);
    if (paren) out += ")";
    return;
  }
  }
}

void collect_leaves(const Expr &e, std::vector<const Expr *> &out) {
  if (e.is_leaf()) {
    out.push_back(&e);
    return;
  }
  collect_leaves(*e.lhs, out);
  collect_leaves(*e.rhs, out);
}

} // namespace

Assignment parse(std::string_view text) { return Parser(text).parse(); }

std::string to_string(const Expr &e) {
  std::string out;
  print(e, out, 0);
  return out;
}

std::string to_string(const Assignment &a) {
  std::string out = a.tensor + "(";
  for (std::size_t k = 0; k < a.vars.size(); ++k)
    out += (k ? "," : "") + a.vars[k];
  out += ") = ";
  if (a.rhs) out += to_string(*a.rhs);
  return out;
}

bool structurally_equal(const Expr &a, const Expr &b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
  case Expr::Access: return a.tensor == b.tensor && a.vars == b.vars;
  case Expr::Literal: return a.value == b.value;
  default: return structurally_equal(*a.lhs, *b.lhs) && structurally_equal(*a.rhs, *b.rhs);
  }
}

bool structurally_equal(const Assignment &a, const Assignment &b) {
  return a.tensor == b.tensor && a.vars == b.vars && a.rhs && b.rhs &&
         structurally_equal(*a.rhs, *b.rhs);
}

std::vector<const Expr *> leaves(const Expr &e) {
  std::vector<const Expr *> out;
  collect_leaves(e, out);
  return out;
}

std::vector<std::string> vars_of(const Expr &e) {
  std::vector<std::string> out;
  for (const Expr *l : leaves(e)) {
    for (const std::string &v : l->vars) {
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  }
  return out;
}

ExprPtr number_leaves(const ExprPtr &e, int &next) {
  auto copy = std::make_shared<Expr>(*e);
  if (e->is_leaf()) {
    copy->leaf = next++;
  } else {
    copy->lhs = number_leaves(e->lhs, next);
    copy->rhs = number_leaves(e->rhs, next);
  }
  return copy;
}

CheckedAssignment validate(const Assignment &a, const ShapeBindings &bindings) {
  CheckedAssignment out;
  out.assignment = a;
  if (!a.rhs) throw ValidationError("assignment has no right-hand side");

  struct Use {
    std::string tensor;
    const std::vector<std::string> *vars;
  };
  std::vector<Use> uses{{a.tensor, &a.vars}};
  for (const Expr *l : leaves(*a.rhs)) {
    if (l->kind != Expr::Access) continue;
    if (l->tensor == a.tensor) {
      throw ValidationError("output tensor " + a.tensor + " also appears on the right-hand side");
    }
    uses.push_back({l->tensor, &l->vars});
  }

  for (const Use &u : uses) {
    auto it = bindings.find(u.tensor);
    if (it == bindings.end()) throw ValidationError("tensor " + u.tensor + " is not bound");
    const TensorShape &shape = it->second;
    if (static_cast<int>(u.vars->size()) != shape.order) {
      throw ValidationError("arity mismatch: " + u.tensor + " has order " +
                            std::to_string(shape.order) + " but is accessed with " +
                            std::to_string(u.vars->size()) + " index variables");
    }
    std::set<std::string> seen;
    for (std::size_t k = 0; k < u.vars->size(); ++k) {
      const std::string &v = (*u.vars)[k];
      if (!seen.insert(v).second) {
        throw ValidationError("index variable " + v + " is repeated in the access of " + u.tensor);
      }
      Index extent = shape.dims.at(k);
      auto [pos, inserted] = out.extents.emplace(v, extent);
      if (!inserted && pos->second != extent) {
        throw ValidationError("dimension mismatch for index variable " + v + ": " +
                              std::to_string(pos->second) + " vs " + std::to_string(extent) + " (" +
                              u.tensor + ")");
      }
    }
  }

  std::vector<std::string> rhsVars = vars_of(*a.rhs);
  for (const std::string &v : a.vars) {
    if (std::find(rhsVars.begin(), rhsVars.end(), v) == rhsVars.end()) {
      throw ValidationError("index variable " + v +
                            " of the output does not appear on the "
                            "right-hand side");
    }
  }
  out.vars = a.vars;
  for (const std::string &v : rhsVars) {
    if (std::find(a.vars.begin(), a.vars.end(), v) == a.vars.end()) {
      out.vars.push_back(v);
      out.reductionVars.push_back(v);
    }
  }
  return out;
}

} // namespace spl
