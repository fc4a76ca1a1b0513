#include "spl/codegen_ir.hpp"

#include <charconv>
#include <functional>
#include <set>

namespace spl::ir {

CExprPtr var(std::string name) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Var;
  e->name = std::move(name);
  return e;
}

CExprPtr lit(Index v) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Int;
  e->ival = v;
  return e;
}

CExprPtr real(double v) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Real;
  e->rval = v;
  return e;
}

CExprPtr load(std::string array, CExprPtr index) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Load;
  e->name = std::move(array);
  e->args = {std::move(index)};
  return e;
}

CExprPtr bin(std::string op, CExprPtr a, CExprPtr b) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Binary;
  e->name = std::move(op);
  e->args = {std::move(a), std::move(b)};
  return e;
}

CExprPtr un(std::string op, CExprPtr a) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Unary;
  e->name = std::move(op);
  e->args = {std::move(a)};
  return e;
}

CExprPtr call(std::string fn, std::vector<CExprPtr> args) {
  auto e = std::make_shared<CExpr>();
  e->kind = CExpr::Call;
  e->name = std::move(fn);
  e->args = std::move(args);
  return e;
}

namespace {

bool is_int(const CExprPtr &e, Index v) { return e->kind == CExpr::Int && e->ival == v; }

} // namespace

CExprPtr add(CExprPtr a, CExprPtr b) {
  if (is_int(a, 0)) return b;
  if (is_int(b, 0)) return a;
  if (a->kind == CExpr::Int && b->kind == CExpr::Int) return lit(a->ival + b->ival);
  return bin("+", std::move(a), std::move(b));
}

CExprPtr sub(CExprPtr a, CExprPtr b) {
  if (is_int(b, 0)) return a;
  if (a->kind == CExpr::Int && b->kind == CExpr::Int) return lit(a->ival - b->ival);
  return bin("-", std::move(a), std::move(b));
}

CExprPtr mul(CExprPtr a, CExprPtr b) {
  if (is_int(a, 1)) return b;
  if (is_int(b, 1)) return a;
  if (is_int(a, 0) || is_int(b, 0)) return lit(0);
  return bin("*", std::move(a), std::move(b));
}

bool is_true(const CExprPtr &e) { return !e || (e->kind == CExpr::Int && e->ival != 0); }

CExprPtr land(CExprPtr a, CExprPtr b) {
  if (is_true(a)) return b ? b : lit(1);
  if (is_true(b)) return a;
  return bin("&&", std::move(a), std::move(b));
}

StmtPtr for_range(std::string v, CExprPtr lo, CExprPtr hi, StmtList body) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::ForRange;
  s->var = std::move(v);
  s->lo = std::move(lo);
  s->hi = std::move(hi);
  s->body = std::move(body);
  return s;
}

StmtPtr while_loop(CExprPtr cond, StmtList body) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::While;
  s->value = std::move(cond);
  s->body = std::move(body);
  return s;
}

StmtPtr if_chain(std::vector<CExprPtr> conds, std::vector<StmtList> bodies) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::If;
  s->conds = std::move(conds);
  s->bodies = std::move(bodies);
  return s;
}

StmtPtr level_call(LevelCallInfo info) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::LevelCall;
  s->call = std::move(info);
  return s;
}

StmtPtr assign(CExprPtr target, CExprPtr value) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Assign;
  s->target = std::move(target);
  s->value = std::move(value);
  return s;
}

StmtPtr accumulate(CExprPtr target, CExprPtr value) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Accumulate;
  s->target = std::move(target);
  s->value = std::move(value);
  return s;
}

StmtPtr min_of(std::string target, std::vector<CExprPtr> conds, std::vector<CExprPtr> values) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Min;
  s->var = std::move(target);
  s->conds = std::move(conds);
  s->values = std::move(values);
  return s;
}

StmtPtr decl(CType type, std::string name, CExprPtr init) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Decl;
  s->type = type;
  s->var = std::move(name);
  s->value = std::move(init);
  return s;
}

StmtPtr block(StmtList body) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Block;
  s->body = std::move(body);
  return s;
}

StmtPtr comment(std::string text) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Comment;
  s->text = std::move(text);
  return s;
}

// Level function bodies

namespace {

std::string lname(const LevelCallInfo &c, const std::string &field) {
  return c.tensor + std::to_string(c.level + 1) + "_" + field;
}

CExprPtr crd_load(const LevelCallInfo &c, CExprPtr q) {
  return load(lname(c, "crd"), mul(std::move(q), lit(c.crdStride)));
}

struct Inlined {
  std::vector<CExprPtr> values; // one per result; nullptr marks constant true
  StmtList effects;             // statements without results
};

[[noreturn]] void unknown(const LevelCallInfo &c) {
  throw UnsupportedError("codegen", "no inline body for " + c.function + " on " +
                                        std::string(to_string(c.kind)) + " levels");
}

Inlined body_of(const LevelCallInfo &c) {
  const auto &a = c.args;
  const std::string &fn = c.function;
  auto N = var(lname(c, "N"));
  auto W = var(lname(c, "W"));
  switch (c.kind) {
  case LevelKind::Dense:
    if (fn == "coord_bounds") return {{lit(0), N}, {}};
    if (fn == "coord_access" || fn == "locate") return {{add(mul(a[0], N), a[1]), nullptr}, {}};
    if (fn == "insert_coord") return {{add(mul(a[0], N), a[1])}, {}};
    if (fn == "size") return {{mul(a[0], N)}, {}};
    break;
  case LevelKind::Range:
    if (fn == "coord_bounds") {
      auto off = load(lname(c, "off"), a[0]);
      return {{call("SPL_MAX", {lit(0), un("-", off)}),
               call("SPL_MIN", {N, sub(var(lname(c, "M")), off)})},
              {}};
    }
    if (fn == "coord_access") return {{add(mul(a[0], N), a[1]), nullptr}, {}};
    break;
  case LevelKind::Compressed:
    if (fn == "pos_bounds") {
      return {{load(lname(c, "pos"), a[0]), load(lname(c, "pos"), add(a[0], lit(1)))}, {}};
    }
    if (fn == "pos_access") return {{crd_load(c, a[0]), nullptr}, {}};
    if (fn == "append_coord") {
      return {{},
              {assign(nullptr, call("spl_set", {un("&", var(lname(c, "crd"))),
                                                un("&", var(lname(c, "crd_cap"))), a[0], a[1]}))}};
    }
    if (fn == "append_edges") {
      return {{},
              {assign(nullptr, call("spl_set", {un("&", var(lname(c, "pos"))),
                                                un("&", var(lname(c, "pos_cap"))),
                                                add(a[0], lit(1)), a[2]}))}};
    }
    break;
  case LevelKind::Singleton:
    if (fn == "pos_bounds") return {{a[0], add(a[0], lit(1))}, {}};
    if (fn == "pos_access") return {{crd_load(c, a[0]), nullptr}, {}};
    if (fn == "append_coord") {
      return {{},
              {assign(nullptr, call("spl_set", {un("&", var(lname(c, "crd"))),
                                                un("&", var(lname(c, "crd_cap"))), a[0], a[1]}))}};
    }
    if (fn == "append_edges") return {{}, {}};
    break;
  case LevelKind::Offset:
    if (fn == "pos_bounds") return {{a[0], add(a[0], lit(1))}, {}};
    if (fn == "pos_access") {
      auto diag = bin("/", a[0], var(lname(c, "rangeN")));
      return {{add(a[1], load(lname(c, "off"), diag)), nullptr}, {}};
    }
    break;
  case LevelKind::Hashed:
    if (fn == "pos_bounds") return {{mul(a[0], W), mul(add(a[0], lit(1)), W)}, {}};
    if (fn == "pos_access") {
      auto held = load(lname(c, "crd"), a[0]);
      return {{held, bin("!=", held, lit(kEmptyBucket))}, {}};
    }
    if (fn == "locate") {
      return {{call("spl_hash_locate", {var(lname(c, "crd")), W, a[0], a[1]}), nullptr}, {}};
    }
    if (fn == "insert_coord") {
      return {{call("spl_hash_insert",
                    {var(lname(c, "crd")), W, a[0], a[1], un("&", var("spl_status"))})},
              {}};
    }
    if (fn == "size") return {{mul(a[0], W)}, {}};
    break;
  }
  unknown(c);
}

// Substitutes constant-true flags and drops the conditionals they decide.
class Inliner {
public:
  StmtList run(const StmtList &in) {
    StmtList out;
    for (const StmtPtr &s : in)
      lower(s, out);
    return out;
  }

private:
  CExprPtr subst(const CExprPtr &e) const {
    if (!e) return e;
    if (e->kind == CExpr::Var && trueFlags_.count(e->name)) return lit(1);
    if (e->args.empty()) return e;
    auto copy = std::make_shared<CExpr>(*e);
    for (auto &a : copy->args)
      a = subst(a);
    if (copy->kind == CExpr::Binary && copy->name == "&&")
      return land(copy->args[0], copy->args[1]);
    if (copy->kind == CExpr::Unary && copy->name == "!" && copy->args[0]->kind == CExpr::Int) {
      return lit(copy->args[0]->ival == 0);
    }
    return copy;
  }

  void lower(const StmtPtr &s, StmtList &out) {
    switch (s->kind) {
    case Stmt::LevelCall: {
      const LevelCallInfo &c = s->call;
      Inlined body = body_of(c);
      for (std::size_t k = 0; k < c.results.size(); ++k) {
        CExprPtr v = k < body.values.size() ? body.values[k] : nullptr;
        if (!v) {
          // Found flags of kinds whose access never fails.
          trueFlags_.insert(c.results[k]);
          continue;
        }
        bool isFlag = k == 1 && (c.function == "pos_access" || c.function == "coord_access" ||
                                 c.function == "locate");
        if (c.function == "locate" && c.kind == LevelKind::Hashed && k == 0) {
          out.push_back(decl(CType::Index, c.results[0], subst(v)));
          out.push_back(decl(CType::Bool, c.results[1], bin(">=", var(c.results[0]), lit(0))));
          break;
        }
        out.push_back(decl(isFlag ? CType::Bool : CType::Index, c.results[k], subst(v)));
      }
      for (const StmtPtr &e : body.effects)
        lower(e, out);
      return;
    }
    case Stmt::If: {
      std::vector<CExprPtr> conds;
      std::vector<StmtList> bodies;
      for (std::size_t k = 0; k < s->bodies.size(); ++k) {
        bool hasCond = k < s->conds.size();
        CExprPtr c = hasCond ? subst(s->conds[k]) : nullptr;
        if (hasCond && c->kind == CExpr::Int && c->ival == 0) continue;
        StmtList b = run(s->bodies[k]);
        if (!hasCond || is_true(c)) {
          if (conds.empty()) {
            for (auto &x : b)
              out.push_back(x);
            return;
          }
          bodies.push_back(std::move(b));
          break;
        }
        conds.push_back(c);
        bodies.push_back(std::move(b));
      }
      if (!bodies.empty()) out.push_back(if_chain(std::move(conds), std::move(bodies)));
      return;
    }
    default: break;
    }
    auto copy = std::make_shared<Stmt>(*s);
    copy->value = subst(copy->value);
    copy->target = subst(copy->target);
    copy->lo = subst(copy->lo);
    copy->hi = subst(copy->hi);
    for (auto &c : copy->conds)
      c = subst(c);
    for (auto &v : copy->values)
      v = subst(v);
    copy->body = run(copy->body);
    if (copy->kind == Stmt::While && copy->value->kind == CExpr::Int && copy->value->ival == 0)
      return;
    out.push_back(copy);
  }

  std::set<std::string> trueFlags_;
};

void walk(const StmtList &body, const std::function<void(const Stmt &)> &f) {
  for (const StmtPtr &s : body) {
    f(*s);
    walk(s->body, f);
    for (const StmtList &b : s->bodies)
      walk(b, f);
  }
}

} // namespace

StmtList inline_levels(const StmtList &body) { return Inliner().run(body); }

int count_level_calls(const StmtList &body) {
  int n = 0;
  walk(body, [&](const Stmt &s) { n += s.kind == Stmt::LevelCall; });
  return n;
}

namespace {

class ScopeChecker {
public:
  explicit ScopeChecker(const std::vector<std::string> &params) {
    scopes_.emplace_back(params.begin(), params.end());
  }

  std::string check(const StmtList &body) {
    scopes_.emplace_back();
    for (const StmtPtr &s : body) {
      if (!stmt(*s)) break;
    }
    scopes_.pop_back();
    return bad_;
  }

private:
  bool declared(const std::string &n) const {
    for (const auto &sc : scopes_) {
      if (sc.count(n)) return true;
    }
    return false;
  }

  void expr(const CExprPtr &e) {
    if (!e || !bad_.empty()) return;
    if ((e->kind == CExpr::Var || e->kind == CExpr::Load) && !declared(e->name)) bad_ = e->name;
    for (const auto &a : e->args)
      expr(a);
  }

  bool stmt(const Stmt &s) {
    switch (s.kind) {
    case Stmt::Decl:
      expr(s.value);
      scopes_.back().insert(s.var);
      break;
    case Stmt::ForRange:
      expr(s.lo);
      expr(s.hi);
      scopes_.emplace_back(std::set<std::string>{s.var});
      check(s.body);
      scopes_.pop_back();
      break;
    case Stmt::While:
      expr(s.value);
      check(s.body);
      break;
    case Stmt::If:
      for (const auto &c : s.conds)
        expr(c);
      for (const auto &b : s.bodies)
        check(b);
      break;
    case Stmt::LevelCall:
      for (const auto &a : s.call.args)
        expr(a);
      for (const auto &r : s.call.results)
        scopes_.back().insert(r);
      break;
    case Stmt::Min:
      for (const auto &c : s.conds)
        expr(c);
      for (const auto &v : s.values)
        expr(v);
      if (!declared(s.var) && bad_.empty()) bad_ = s.var;
      break;
    case Stmt::Block: check(s.body); break;
    case Stmt::Comment: break;
    default:
      expr(s.target);
      expr(s.value);
      break;
    }
    return bad_.empty();
  }

  std::vector<std::set<std::string>> scopes_;
  std::string bad_;
};

void skeleton_rec(const StmtList &body, int depth, std::string &out) {
  for (const StmtPtr &s : body) {
    switch (s->kind) {
    case Stmt::ForRange:
      out += std::string(static_cast<std::size_t>(depth) * 2, ' ') + "for\n";
      skeleton_rec(s->body, depth + 1, out);
      break;
    case Stmt::While:
      out += std::string(static_cast<std::size_t>(depth) * 2, ' ') + "while\n";
      skeleton_rec(s->body, depth + 1, out);
      break;
    case Stmt::If:
      for (const auto &b : s->bodies)
        skeleton_rec(b, depth, out);
      break;
    case Stmt::Block: skeleton_rec(s->body, depth, out); break;
    default: break;
    }
  }
}

std::string type_name(CType t) {
  switch (t) {
  case CType::Index: return "index";
  case CType::Double: return "double";
  case CType::Bool: return "bool";
  case CType::IndexPtr: return "index*";
  case CType::DoublePtr: return "double*";
  }
  return "?";
}

void dump_rec(const StmtList &body, int depth, std::string &out) {
  std::string ind(static_cast<std::size_t>(depth) * 2, ' ');
  auto ex = [](const CExprPtr &e) { return e ? to_c(*e) : std::string("-"); };
  for (const StmtPtr &s : body) {
    switch (s->kind) {
    case Stmt::ForRange:
      out += ind + "ForRange " + s->var + " in [" + ex(s->lo) + ", " + ex(s->hi) + ")\n";
      dump_rec(s->body, depth + 1, out);
      break;
    case Stmt::While:
      out += ind + "While " + ex(s->value) + "\n";
      dump_rec(s->body, depth + 1, out);
      break;
    case Stmt::If:
      for (std::size_t k = 0; k < s->bodies.size(); ++k) {
        out +=
            ind + (k < s->conds.size() ? (k ? "ElseIf " : "If ") + ex(s->conds[k]) : "Else") + "\n";
        dump_rec(s->bodies[k], depth + 1, out);
      }
      break;
    case Stmt::LevelCall: {
      const LevelCallInfo &c = s->call;
      out += ind + "LevelCall " + std::string(to_string(c.kind)) + "." + c.function + "(" +
             c.tensor + std::to_string(c.level + 1);
      for (const auto &a : c.args)
        out += ", " + ex(a);
      out += ")";
      if (!c.results.empty()) {
        out += " ->";
        for (const auto &r : c.results)
          out += " " + r;
      }
      out += "\n";
      break;
    }
    case Stmt::Assign:
      out += ind + (s->target ? "Assign " + ex(s->target) + " = " : "Eval ") + ex(s->value) + "\n";
      break;
    case Stmt::Accumulate:
      out += ind + "Accumulate " + ex(s->target) + " += " + ex(s->value) + "\n";
      break;
    case Stmt::Min: {
      out += ind + "Min " + s->var + " =";
      for (std::size_t k = 0; k < s->values.size(); ++k)
        out += " [" + ex(s->conds[k]) + "] " + ex(s->values[k]);
      out += "\n";
      break;
    }
    case Stmt::Decl:
      out += ind + "Decl " + type_name(s->type) + " " + s->var + " = " + ex(s->value) + "\n";
      break;
    case Stmt::Block:
      out += ind + "Block\n";
      dump_rec(s->body, depth + 1, out);
      break;
    case Stmt::Comment: out += ind + "// " + s->text + "\n"; break;
    }
  }
}

int precedence(const std::string &op) {
  if (op == "*" || op == "/" || op == "%") return 5;
  if (op == "+" || op == "-") return 4;
  if (op == "<" || op == "<=" || op == ">" || op == ">=") return 3;
  if (op == "==" || op == "!=") return 2;
  if (op == "&&") return 1;
  return 0;
}

std::string to_c_prec(const CExpr &e, int parent, bool right) {
  switch (e.kind) {
  case CExpr::Var: return e.name;
  case CExpr::Int: return std::to_string(e.ival);
  case CExpr::Real: {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, e.rval);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return e.rval < 0 ? "(" + s + ")" : s;
  }
  case CExpr::Load: return e.name + "[" + to_c_prec(*e.args[0], 0, false) + "]";
  case CExpr::Unary: return e.name + to_c_prec(*e.args[0], 6, false);
  case CExpr::Call: {
    std::string s = e.name + "(";
    for (std::size_t k = 0; k < e.args.size(); ++k)
      s += (k ? ", " : "") + to_c_prec(*e.args[k], 0, false);
    return s + ")";
  }
  case CExpr::Binary: {
    int p = precedence(e.name);
    std::string s =
        to_c_prec(*e.args[0], p, false) + " " + e.name + " " + to_c_prec(*e.args[1], p, true);
    bool paren = p < parent || (p == parent && right);
    return paren ? "(" + s + ")" : s;
  }
  }
  return "";
}

} // namespace

std::string check_scoped(const StmtList &body, const std::vector<std::string> &params) {
  return ScopeChecker(params).check(body);
}

std::string skeleton(const StmtList &body) {
  std::string out;
  skeleton_rec(body, 0, out);
  return out;
}

std::string dump(const StmtList &body) {
  std::string out;
  dump_rec(body, 0, out);
  return out;
}

std::string to_c(const CExpr &e) { return to_c_prec(e, 0, false); }

} // namespace spl::ir
