#include "spl/codegen_lower.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>

namespace spl {

using namespace ir;

namespace {

// Positions reached in one level, known by shape at generation time.
struct GroupC {
  enum Shape { None, Single, Strided, Slice };
  Shape shape = None;
  CExprPtr first;
  CExprPtr count;
  CExprPtr stride;
  std::string array; // Slice: positions live in array[first .. first+count)
  /// Sum of the leaf values over the group, when already accumulated.
  CExprPtr value;
  bool mayBeEmpty = false;

  bool contiguous() const {
    return shape == Single || (shape == Strided && stride->kind == CExpr::Int && stride->ival == 1);
  }
  CExprPtr at(const CExprPtr &k) const {
    switch (shape) {
    case Single: return first;
    case Strided: return add(first, mul(k, stride));
    case Slice: return load(array, add(first, k));
    default: return lit(0);
    }
  }
  CExprPtr size() const { return shape == Single ? lit(1) : count; }
};

GroupC single(CExprPtr p) {
  GroupC g;
  g.shape = GroupC::Single;
  g.first = std::move(p);
  return g;
}

GroupC strided(CExprPtr first, CExprPtr count, CExprPtr stride) {
  GroupC g;
  g.shape = GroupC::Strided;
  g.first = std::move(first);
  g.count = std::move(count);
  g.stride = std::move(stride);
  return g;
}

GroupC slice(std::string array, CExprPtr first, CExprPtr count) {
  GroupC g;
  g.shape = GroupC::Slice;
  g.array = std::move(array);
  g.first = std::move(first);
  g.count = std::move(count);
  return g;
}

struct LeafState {
  std::vector<GroupC> grp;  // grp[k]: positions of level k-1, grp[0] the root
  std::vector<CExprPtr> lc; // coordinate of each level
};

struct State {
  std::vector<LeafState> leaves;
  std::vector<CExprPtr> bind; // value of each loop variable
};

// One co-iterated dimension inside a loop node.
struct It {
  enum Mode { Counter, Value, Positions, Sorted };
  Mode mode = Counter;
  const NodeIter *ni = nullptr;
  int leaf = -1;
  int level = -1;
  GroupC parent;
  CExprPtr lo;
  CExprPtr hi;
  std::string cur;
  std::string coord; // per-iteration coordinate variable
  std::string next;  // end of the current duplicate run
  std::string vsum;  // accumulated value of the run
  std::string srtCrd;
  std::string srtPos;
  bool scan = false;
  bool accumulate = false;
  bool skipEmpty = false;
  bool straight = false; // exactly one position under a single parent
};

const char *const kKeywords[] = {
    "auto",   "break",    "case",     "char",   "const",    "continue", "default",  "do",
    "double", "else",     "enum",     "extern", "float",    "for",      "goto",     "if",
    "int",    "long",     "register", "return", "short",    "signed",   "sizeof",   "static",
    "struct", "switch",   "typedef",  "union",  "unsigned", "void",     "volatile", "while",
    "inline", "restrict", "free",     "malloc", "realloc",  "memset"};

std::string identifier(const std::string &raw) {
  std::string s;
  for (char ch : raw) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
      s += ch;
    } else if (ch == '/') {
      s += "_o";
    } else if (ch == '%') {
      s += "_i";
    } else {
      s += '_';
    }
  }
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) s = "v" + s;
  for (const char *k : kKeywords) {
    if (s == k) return s + "_";
  }
  return s;
}

class Lowerer {
public:
  explicit Lowerer(const Schedule &s) : s_(s) {
    for (const char *reserved : {"spl_status", "SPL_MIN", "SPL_MAX", "SPL_INDEX_MAX"}) {
      used_.insert(reserved);
    }
    const Assignment &a = s.expr.assignment;
    out_ = identifier(a.tensor);
    std::map<std::string, int> occurrences;
    for (const LeafInfo &info : s.leaves) {
      if (!info.literal) ++occurrences[info.tensor];
    }
    labels_.resize(s.leaves.size());
    tensors_.resize(s.leaves.size());
    for (const LeafInfo &info : s.leaves) {
      if (info.literal) continue;
      tensors_[info.leaf] = identifier(info.tensor);
      labels_[info.leaf] = tensors_[info.leaf];
      if (occurrences[info.tensor] > 1) labels_[info.leaf] += "_" + std::to_string(info.leaf);
    }
    varNames_.resize(s.graph.vars.size());
    for (std::size_t v = 0; v < s.graph.vars.size(); ++v) {
      varNames_[v] = identifier(s.graph.vars[v].name);
    }
    collect_candidates();
  }

  Kernel run(const std::string &name) {
    Kernel k;
    k.name = identifier(name);
    k.mode = s_.mode;

    State st;
    st.leaves.resize(s_.leaves.size());
    st.bind.assign(s_.graph.vars.size(), nullptr);
    for (const LeafInfo &info : s_.leaves) {
      if (info.literal) continue;
      std::size_t nl = s_.graph.paths[info.path].levels.size();
      st.leaves[info.leaf].grp.assign(nl + 1, GroupC{});
      st.leaves[info.leaf].grp[0] = single(lit(0));
      st.leaves[info.leaf].lc.assign(nl, nullptr);
    }

    StmtList main;
    if (s_.mode == Schedule::Gather) gather_prologue();
    descend(main, *s_.root, st);

    StmtList body;
    body.push_back(decl(CType::Bool, "spl_status", lit(0)));
    for (const std::string &b : buffers_) {
      body.push_back(decl(CType::IndexPtr, b, lit(0)));
      body.push_back(decl(CType::Index, b + "_cap", lit(0)));
    }
    for (auto &s : prologue_)
      body.push_back(s);
    for (auto &s : main)
      body.push_back(s);
    if (s_.mode == Schedule::Gather) gather_epilogue(body);
    for (const std::string &b : buffers_)
      body.push_back(assign(nullptr, call("free", {var(b)})));
    k.body = std::move(body);

    // Parameters the inlined body actually reads, in a stable order.
    std::set<std::string> reads;
    auto note = [&](const CExprPtr &e, auto &&self) -> void {
      if (!e) return;
      if (e->kind == CExpr::Var || e->kind == CExpr::Load) reads.insert(e->name);
      for (const auto &a : e->args)
        self(a, self);
    };
    std::function<void(const StmtList &)> walk = [&](const StmtList &list) {
      for (const StmtPtr &s : list) {
        for (const CExprPtr &e : {s->target, s->value, s->lo, s->hi})
          note(e, note);
        for (const auto &e : s->conds)
          note(e, note);
        for (const auto &e : s->values)
          note(e, note);
        for (const auto &e : s->call.args)
          note(e, note);
        walk(s->body);
        for (const auto &b : s->bodies)
          walk(b);
      }
    };
    walk(k.body);
    walk(inline_levels(k.body));
    for (const KernelParam &p : candidates_) {
      if (reads.count(p.name)) k.params.push_back(p);
    }
    return k;
  }

private:
  std::string fresh(const std::string &base) {
    std::string name = base;
    for (int n = 1; used_.count(name); ++n)
      name = base + "_" + std::to_string(n);
    used_.insert(name);
    return name;
  }

  std::string field(int leaf, int k, const std::string &f) const {
    return tensors_[leaf] + std::to_string(k + 1) + "_" + f;
  }
  std::string out_field(int k, const std::string &f) const {
    return out_ + std::to_string(k + 1) + "_" + f;
  }
  std::string vals(int leaf) const { return tensors_[leaf] + "_vals"; }

  const TensorPath &path(int leaf) const { return s_.graph.paths[s_.leaves[leaf].path]; }
  const FormatLevel &flevel(int leaf, int k) const { return path(leaf).format.levels[k]; }
  int num_levels(int leaf) const { return static_cast<int>(path(leaf).levels.size()); }

  // Candidate parameters, in the order they appear in kernel signatures.
  void collect_candidates() {
    auto add_param = [&](KernelParam p) {
      used_.insert(p.name);
      candidates_.push_back(std::move(p));
    };
    const TensorPath &out = s_.output();
    for (std::size_t k = 0; k < out.format.levels.size(); ++k) {
      int lk = static_cast<int>(k);
      LevelKind kind = out.format.levels[k].fmt.kind;
      auto p = [&](const std::string &f, KernelParam::Type t) {
        KernelParam q;
        q.name = out_field(lk, f) +
                 (s_.mode == Schedule::Gather && t != KernelParam::IndexScalar ? "_out" : "");
        q.type = t;
        q.tensor = s_.expr.assignment.tensor;
        q.level = lk;
        q.field = f;
        q.output = true;
        add_param(q);
      };
      if (kind == LevelKind::Dense) p("N", KernelParam::IndexScalar);
      if (kind == LevelKind::Hashed) {
        p("crd", KernelParam::IndexArray);
        p("W", KernelParam::IndexScalar);
      }
      if (s_.mode == Schedule::Gather &&
          (kind == LevelKind::Compressed || kind == LevelKind::Singleton)) {
        if (kind == LevelKind::Compressed) p("pos", KernelParam::OutIndexArray);
        p("crd", KernelParam::OutIndexArray);
        p("size", KernelParam::OutIndexScalar);
      }
    }
    {
      KernelParam q;
      q.tensor = s_.expr.assignment.tensor;
      q.field = "vals";
      q.output = true;
      if (s_.mode == Schedule::Gather) {
        q.name = out_ + "_vals_out";
        q.type = KernelParam::OutValueArray;
        add_param(q);
        q.name = out_ + "_nvals_out";
        q.field = "nvals";
        q.type = KernelParam::OutIndexScalar;
        add_param(q);
      } else {
        q.name = out_ + "_vals";
        q.type = KernelParam::ValueArray;
        add_param(q);
      }
    }
    std::set<std::string> seen;
    for (const LeafInfo &info : s_.leaves) {
      if (info.literal || !seen.insert(tensors_[info.leaf]).second) continue;
      int leaf = info.leaf;
      for (int k = 0; k < num_levels(leaf); ++k) {
        auto p = [&](const std::string &f, KernelParam::Type t) {
          KernelParam q;
          q.name = field(leaf, k, f);
          q.type = t;
          q.tensor = info.tensor;
          q.level = k;
          q.field = f;
          add_param(q);
        };
        switch (flevel(leaf, k).fmt.kind) {
        case LevelKind::Dense: p("N", KernelParam::IndexScalar); break;
        case LevelKind::Range:
          p("off", KernelParam::IndexArray);
          p("N", KernelParam::IndexScalar);
          p("M", KernelParam::IndexScalar);
          break;
        case LevelKind::Compressed:
          p("pos", KernelParam::IndexArray);
          p("crd", KernelParam::IndexArray);
          break;
        case LevelKind::Singleton: p("crd", KernelParam::IndexArray); break;
        case LevelKind::Offset:
          p("off", KernelParam::IndexArray);
          p("rangeN", KernelParam::IndexScalar);
          break;
        case LevelKind::Hashed:
          p("crd", KernelParam::IndexArray);
          p("W", KernelParam::IndexScalar);
          break;
        }
      }
      KernelParam q;
      q.name = vals(leaf);
      q.type = KernelParam::ValueArray;
      q.tensor = info.tensor;
      q.field = "vals";
      add_param(q);
    }
    for (std::size_t v = 0; v < s_.graph.vars.size(); ++v) {
      const LoopVar &lv = s_.graph.vars[v];
      if (lv.kind == LoopVar::Synthetic) continue;
      KernelParam q;
      q.name = "ext_" + varNames_[v];
      q.type = KernelParam::IndexScalar;
      q.field = "extent";
      q.var = lv.name;
      add_param(q);
    }
    for (const std::string &n : varNames_)
      used_.insert(n);
  }

  StmtPtr lcall(int leaf, int k, const std::string &fn, std::vector<CExprPtr> args,
                std::vector<std::string> results) {
    LevelCallInfo c;
    c.tensor = tensors_[leaf];
    c.level = k;
    c.kind = flevel(leaf, k).fmt.kind;
    c.function = fn;
    c.args = std::move(args);
    c.results = std::move(results);
    c.crdStride = path(leaf).format.arrayOfStructs ? num_levels(leaf) : 1;
    return level_call(std::move(c));
  }

  StmtPtr out_call(int k, const std::string &fn, std::vector<CExprPtr> args,
                   std::vector<std::string> results = {}) {
    LevelCallInfo c;
    c.tensor = out_;
    c.level = k;
    c.kind = s_.output().format.levels[k].fmt.kind;
    c.function = fn;
    c.args = std::move(args);
    c.results = std::move(results);
    c.output = true;
    return level_call(std::move(c));
  }

  CExprPtr extent(int v) const {
    const LoopVar &lv = s_.graph.vars[v];
    if (lv.kind == LoopVar::Synthetic) return var(field(lv.leaf, lv.level, "N"));
    return var("ext_" + varNames_[v]);
  }

  CExprPtr logical(const std::string &name, const State &st) const {
    const IterationGraph &g = s_.graph;
    int id = g.var_id(name);
    if (id >= 0) return st.bind[id];
    CExprPtr outer, inner;
    Index block = 1;
    for (std::size_t k = 0; k < g.vars.size(); ++k) {
      if (g.vars[k].base != name) continue;
      if (g.vars[k].kind == LoopVar::Outer) outer = st.bind[k];
      if (g.vars[k].kind == LoopVar::Inner) inner = st.bind[k];
      block = g.vars[k].block;
    }
    if (!outer || !inner)
      throw UnsupportedError("codegen", "index variable " + name + " is unbound");
    return add(mul(outer, lit(block)), inner);
  }

  CExprPtr mapped(const LevelMap &m, const std::vector<std::string> &ivars, const State &st) const {
    CExprPtr x = logical(ivars.at(m.dim), st);
    switch (m.kind) {
    case LevelMap::BlockOuter: return bin("/", x, lit(m.block));
    case LevelMap::BlockInner: return bin("%", x, lit(m.block));
    default: return x;
    }
  }

  // Gathers the child positions of every parent in `parents` that `fn`
  // finds at coordinate `c` into a scratch buffer.
  GroupC materialize(StmtList &out, int leaf, int k, const GroupC &parents, const std::string &fn,
                     const CExprPtr &c) {
    std::string tag = labels_[leaf] + std::to_string(k + 1);
    std::string buf = fresh("buf" + tag);
    buffers_.push_back(buf);
    std::string n = fresh("n" + tag);
    std::string kk = fresh("k" + tag);
    std::string r = fresh("r" + tag);
    std::string f = fresh("f" + tag);
    out.push_back(decl(CType::Index, n, lit(0)));
    StmtList body;
    body.push_back(lcall(leaf, k, fn, {parents.at(var(kk)), c}, {r, f}));
    body.push_back(if_chain(
        {var(f)}, {{assign(nullptr, call("spl_set", {un("&", var(buf)), un("&", var(buf + "_cap")),
                                                     var(n), var(r)})),
                    assign(var(n), add(var(n), lit(1)))}}));
    out.push_back(for_range(kk, lit(0), parents.size(), std::move(body)));
    GroupC g = slice(buf, lit(0), var(n));
    g.mayBeEmpty = true;
    return g;
  }

  // Locates level k of `leaf` at coordinate c; returns the presence test.
  CExprPtr locate_level(StmtList &out, int leaf, int k, const CExprPtr &c, State &st) {
    LeafState &ls = st.leaves[leaf];
    ls.lc[k] = c;
    const GroupC &parents = ls.grp[k];
    LevelKind kind = flevel(leaf, k).fmt.kind;
    if (parents.shape == GroupC::Single) {
      std::string tag = labels_[leaf] + std::to_string(k + 1);
      std::string p = fresh("p" + tag);
      std::string f = fresh("f" + tag);
      out.push_back(lcall(leaf, k, "locate", {parents.first, c}, {p, f}));
      ls.grp[k + 1] = single(var(p));
      return var(f);
    }
    if (kind == LevelKind::Dense && parents.shape == GroupC::Strided) {
      CExprPtr N = var(field(leaf, k, "N"));
      ls.grp[k + 1] = strided(add(mul(parents.first, N), c), parents.count, mul(parents.stride, N));
      ls.grp[k + 1].mayBeEmpty = parents.mayBeEmpty;
      return parents.mayBeEmpty ? bin(">", parents.count, lit(0)) : lit(1);
    }
    ls.grp[k + 1] = materialize(out, leaf, k, parents, "locate", c);
    return bin(">", ls.grp[k + 1].count, lit(0));
  }

  void process_derived(StmtList &out, const LoopNode &node, int leaf, State &st) {
    const LeafInfo &info = s_.leaves[leaf];
    const auto &at = info.levelsAt[node.depth];
    const Dim &d = node.dims.at(leaf);
    const TensorPath &p = path(leaf);
    LeafState &ls = st.leaves[leaf];
    for (std::size_t j = d.kind == Dim::Level ? 1 : 0; j < at.size(); ++j) {
      int k = at[j];
      CExprPtr c = mapped(p.format.levels[k].map, p.ivars, st);
      std::string tag = labels_[leaf] + std::to_string(k + 1);
      std::string cv = fresh("i" + tag);
      out.push_back(decl(CType::Index, cv, c));
      ls.lc[k] = var(cv);
      const GroupC &parents = ls.grp[k];
      if (parents.shape == GroupC::Single) {
        std::string pv = fresh("p" + tag);
        std::string f = fresh("f" + tag);
        out.push_back(lcall(leaf, k, "locate", {parents.first, var(cv)}, {pv, f}));
        ls.grp[k + 1] = single(var(pv));
      } else if (parents.shape == GroupC::Strided) {
        CExprPtr N = var(field(leaf, k, "N"));
        GroupC g =
            strided(add(mul(parents.first, N), var(cv)), parents.count, mul(parents.stride, N));
        g.mayBeEmpty = parents.mayBeEmpty;
        ls.grp[k + 1] = g;
      } else {
        ls.grp[k + 1] = materialize(out, leaf, k, parents, "locate", var(cv));
      }
    }
  }

  CExprPtr eval(StmtList &out, const Expr &e, const State &st) {
    switch (e.kind) {
    case Expr::Literal: return real(e.value);
    case Expr::Access: {
      const GroupC &g = st.leaves[e.leaf].grp.back();
      if (g.value) return g.value;
      if (g.shape == GroupC::Single) return load(vals(e.leaf), g.first);
      std::string sum = fresh("v" + labels_[e.leaf]);
      std::string kk = fresh("k" + labels_[e.leaf]);
      out.push_back(decl(CType::Double, sum, real(0.0)));
      out.push_back(for_range(kk, lit(0), g.count,
                              {accumulate(var(sum), load(vals(e.leaf), g.at(var(kk))))}));
      return var(sum);
    }
    case Expr::Add: {
      CExprPtr l = eval(out, *e.lhs, st);
      return bin("+", l, eval(out, *e.rhs, st));
    }
    case Expr::Mul: {
      CExprPtr l = eval(out, *e.lhs, st);
      return bin("*", l, eval(out, *e.rhs, st));
    }
    }
    return real(0.0);
  }

  void descend(StmtList &out, const LoopNode &node, const State &st) {
    if (node.depth != s_.outDepth) {
      visit(out, node, st);
      return;
    }
    acc_ = fresh("acc");
    touched_ = fresh("touched");
    std::string acc = acc_, touched = touched_;
    out.push_back(decl(CType::Double, acc, real(0.0)));
    out.push_back(decl(CType::Bool, touched, lit(0)));
    visit(out, node, st);
    StmtList e;
    emit_output(e, st, var(acc));
    out.push_back(if_chain({var(touched)}, {std::move(e)}));
  }

  // Output level coordinates from the bound variables.
  std::vector<CExprPtr> output_coords(const State &st) const {
    const TensorPath &o = s_.output();
    std::vector<CExprPtr> c;
    for (const FormatLevel &fl : o.format.levels) {
      if (fl.map.kind == LevelMap::Synthetic) {
        throw UnsupportedError("codegen", "output levels cannot be structural");
      }
      c.push_back(mapped(fl.map, o.ivars, st));
    }
    return c;
  }

  void emit_output(StmtList &out, const State &st, const CExprPtr &acc) {
    std::vector<CExprPtr> oc = output_coords(st);
    int n = static_cast<int>(oc.size());
    if (s_.mode == Schedule::Scatter) {
      CExprPtr p = lit(0);
      for (int k = 0; k < n; ++k) {
        std::string pv = fresh(out_ + std::to_string(k + 1) + "_p");
        out.push_back(out_call(k, "insert_coord", {p, oc[k]}, {pv}));
        p = var(pv);
      }
      out.push_back(accumulate(load(out_ + "_vals", p), acc));
      return;
    }

    // Gather: coordinates arrive in lexicographic order; positions are fresh
    // from the first level that differs from the previous emission.
    std::vector<std::string> cvars;
    for (int k = 0; k < n; ++k) {
      std::string cv = fresh(out_ + std::to_string(k + 1) + "_c");
      out.push_back(decl(CType::Index, cv, oc[k]));
      cvars.push_back(cv);
    }
    std::string d = fresh("diverge");
    out.push_back(decl(CType::Index, d, lit(n)));
    std::vector<CExprPtr> conds;
    std::vector<StmtList> bodies;
    for (int k = 0; k < n; ++k) {
      CExprPtr differs = bin("!=", var(cvars[k]), var(gLast_[k]));
      if (k == 0) differs = bin("||", bin("<", var(gPos_[0]), lit(0)), differs);
      conds.push_back(differs);
      bodies.push_back({assign(var(d), lit(k))});
    }
    out.push_back(if_chain(std::move(conds), std::move(bodies)));
    const TensorFormat &f = s_.output().format;
    for (int k = n - 1; k >= 1; --k) {
      if (f.levels[k].fmt.kind == LevelKind::Singleton) {
        out.push_back(if_chain({bin("==", var(d), lit(k))}, {{assign(var(d), lit(k - 1))}}));
      }
    }
    for (int k = 0; k < n; ++k) {
      CExprPtr parent = k == 0 ? lit(0) : var(gPos_[k - 1]);
      StmtList open;
      switch (f.levels[k].fmt.kind) {
      case LevelKind::Dense: {
        std::string pv = fresh(out_ + std::to_string(k + 1) + "_p");
        open.push_back(out_call(k, "insert_coord", {parent, var(cvars[k])}, {pv}));
        open.push_back(assign(var(gPos_[k]), var(pv)));
        break;
      }
      case LevelKind::Compressed:
      case LevelKind::Singleton: {
        std::string size = out_field(k, "size");
        open.push_back(assign(var(gPos_[k]), var(size)));
        open.push_back(out_call(k, "append_coord", {var(size), var(cvars[k])}));
        open.push_back(assign(var(size), add(var(size), lit(1))));
        if (f.levels[k].fmt.kind == LevelKind::Compressed) {
          open.push_back(out_call(k, "append_edges", {parent, lit(0), var(size)}));
        }
        break;
      }
      default: break;
      }
      open.push_back(assign(var(gLast_[k]), var(cvars[k])));
      out.push_back(if_chain({bin("<=", var(d), lit(k))}, {std::move(open)}));
    }
    CExprPtr leafPos = n == 0 ? lit(0) : var(gPos_[n - 1]);
    out.push_back(
        assign(nullptr, call("spl_addd", {un("&", var(out_ + "_vals")),
                                          un("&", var(out_ + "_vals_cap")), leafPos, acc})));
  }

  void gather_prologue() {
    const TensorFormat &f = s_.output().format;
    bool appended = false;
    for (std::size_t k = 0; k < f.levels.size(); ++k) {
      LevelKind kind = f.levels[k].fmt.kind;
      if (kind == LevelKind::Compressed || kind == LevelKind::Singleton) {
        appended = true;
      } else if (kind != LevelKind::Dense || appended) {
        throw UnsupportedError("codegen", "gather outputs need dense levels above appended ones, "
                                          "got " +
                                              f.str());
      }
    }
    for (std::size_t k = 0; k < f.levels.size(); ++k) {
      int lk = static_cast<int>(k);
      gPos_.push_back(fresh(out_ + std::to_string(k + 1) + "_pos_cur"));
      gLast_.push_back(fresh(out_ + std::to_string(k + 1) + "_last"));
      prologue_.push_back(decl(CType::Index, gPos_.back(), lit(-1)));
      prologue_.push_back(decl(CType::Index, gLast_.back(), lit(-1)));
      LevelKind kind = f.levels[k].fmt.kind;
      if (kind == LevelKind::Compressed || kind == LevelKind::Singleton) {
        for (const char *a : {"pos", "crd"}) {
          if (kind == LevelKind::Singleton && std::string(a) == "pos") continue;
          prologue_.push_back(decl(CType::IndexPtr, out_field(lk, a), lit(0)));
          prologue_.push_back(decl(CType::Index, out_field(lk, std::string(a) + "_cap"), lit(0)));
          used_.insert(out_field(lk, a));
          used_.insert(out_field(lk, std::string(a) + "_cap"));
        }
        prologue_.push_back(decl(CType::Index, out_field(lk, "size"), lit(0)));
        used_.insert(out_field(lk, "size"));
      }
    }
    prologue_.push_back(decl(CType::DoublePtr, out_ + "_vals", lit(0)));
    prologue_.push_back(decl(CType::Index, out_ + "_vals_cap", lit(0)));
    used_.insert(out_ + "_vals");
    used_.insert(out_ + "_vals_cap");
  }

  void gather_epilogue(StmtList &body) {
    const TensorFormat &f = s_.output().format;
    CExprPtr size = lit(1);
    for (std::size_t k = 0; k < f.levels.size(); ++k) {
      int lk = static_cast<int>(k);
      switch (f.levels[k].fmt.kind) {
      case LevelKind::Dense: size = mul(size, var(out_field(lk, "N"))); break;
      case LevelKind::Compressed:
        body.push_back(assign(
            nullptr, call("spl_pos_finish", {un("&", var(out_field(lk, "pos"))),
                                             un("&", var(out_field(lk, "pos_cap"))), size})));
        body.push_back(assign(un("*", var(out_field(lk, "pos_out"))), var(out_field(lk, "pos"))));
        [[fallthrough]];
      case LevelKind::Singleton:
        body.push_back(assign(un("*", var(out_field(lk, "crd_out"))), var(out_field(lk, "crd"))));
        body.push_back(assign(un("*", var(out_field(lk, "size_out"))), var(out_field(lk, "size"))));
        size = var(out_field(lk, "size"));
        break;
      default: break;
      }
    }
    body.push_back(assign(nullptr, call("spl_growd", {un("&", var(out_ + "_vals")),
                                                      un("&", var(out_ + "_vals_cap")), size})));
    body.push_back(assign(un("*", var(out_ + "_vals_out")), var(out_ + "_vals")));
    body.push_back(assign(un("*", var(out_ + "_nvals_out")), size));
  }

  // Iterators

  It make_iter(StmtList &out, const LoopNode &node, const NodeIter &ni, const State &st) {
    It it;
    it.ni = &ni;
    it.leaf = ni.leaf;
    it.level = ni.level;
    const std::string &vname = varNames_[node.var];
    std::string L = labels_[ni.leaf];
    if (ni.kind != Dim::Level) {
      it.mode = It::Counter;
      it.lo = lit(0);
      it.hi = extent(node.var);
      it.cur = fresh(vname + L);
      it.coord = it.cur;
      return it;
    }
    int k = ni.level;
    std::string tag = L + std::to_string(k + 1);
    const LeafState &ls = st.leaves[ni.leaf];
    const FormatLevel &fl = flevel(ni.leaf, k);
    it.parent = ls.grp[k];
    CExprPtr prefixLast = k > 0 ? ls.lc[k - 1] : lit(0);
    if (fl.fmt.kind == LevelKind::Dense || fl.fmt.kind == LevelKind::Range) {
      it.mode = It::Value;
      std::string lo = fresh(vname + tag + "_begin");
      std::string hi = fresh(vname + tag + "_end");
      out.push_back(lcall(ni.leaf, k, "coord_bounds", {prefixLast}, {lo, hi}));
      it.lo = var(lo);
      it.hi = var(hi);
      it.cur = fresh(vname + L);
      it.coord = it.cur;
      return it;
    }
    bool ordered = fl.fmt.props.ordered && fl.fmt.kind != LevelKind::Hashed;
    bool branchlessKind = fl.fmt.kind == LevelKind::Singleton || fl.fmt.kind == LevelKind::Offset;
    bool last = k + 1 == num_levels(ni.leaf);
    if (!ni.sort && (it.parent.shape == GroupC::Single || (it.parent.contiguous() && ordered))) {
      it.mode = It::Positions;
      std::string b = fresh("p" + tag + "_begin");
      std::string e = fresh("p" + tag + "_end");
      if (it.parent.shape == GroupC::Single) {
        out.push_back(lcall(ni.leaf, k, "pos_bounds", {it.parent.first}, {b, e}));
      } else {
        std::string e0 = fresh("p" + tag + "_first_end");
        std::string b1 = fresh("p" + tag + "_last_begin");
        out.push_back(lcall(ni.leaf, k, "pos_bounds", {it.parent.first}, {b, e0}));
        out.push_back(lcall(ni.leaf, k, "pos_bounds",
                            {add(it.parent.first, sub(it.parent.count, lit(1)))}, {b1, e}));
      }
      it.lo = var(b);
      it.hi = var(e);
      it.cur = fresh("p" + tag);
      it.coord = fresh(vname + L);
      bool singleParent = it.parent.shape == GroupC::Single;
      it.scan = !ni.raw && !(singleParent && (fl.fmt.props.unique || branchlessKind));
      it.accumulate = it.scan && last;
      it.skipEmpty = fl.fmt.kind == LevelKind::Hashed;
      it.straight = singleParent && branchlessKind;
      if (it.scan) it.next = fresh("p" + tag + "_next");
      if (it.accumulate) it.vsum = fresh("v" + tag);
      return it;
    }

    // Collect (coordinate, position) pairs of every parent and sort them.
    it.mode = It::Sorted;
    it.srtCrd = fresh("sorted" + tag + "_crd");
    it.srtPos = fresh("sorted" + tag + "_pos");
    buffers_.push_back(it.srtCrd);
    buffers_.push_back(it.srtPos);
    std::string n = fresh("n" + tag);
    out.push_back(decl(CType::Index, n, lit(0)));
    std::string q = fresh("q" + tag);
    std::string t = fresh("c" + tag);
    std::string f = fresh("f" + tag);
    std::string b = fresh("p" + tag + "_begin");
    std::string e = fresh("p" + tag + "_end");
    std::vector<CExprPtr> accessArgs = {var(q)};
    if (fl.fmt.kind == LevelKind::Offset) accessArgs.push_back(prefixLast);
    StmtList push = {
        assign(nullptr, call("spl_set", {un("&", var(it.srtCrd)), un("&", var(it.srtCrd + "_cap")),
                                         var(n), var(t)})),
        assign(nullptr, call("spl_set", {un("&", var(it.srtPos)), un("&", var(it.srtPos + "_cap")),
                                         var(n), var(q)})),
        assign(var(n), add(var(n), lit(1)))};
    StmtList inner = {lcall(ni.leaf, k, "pos_access", accessArgs, {t, f}),
                      if_chain({var(f)}, {std::move(push)})};
    auto collect = [&](const CExprPtr &parent) {
      return StmtList{lcall(ni.leaf, k, "pos_bounds", {parent}, {b, e}),
                      for_range(q, var(b), var(e), std::move(inner))};
    };
    if (it.parent.shape == GroupC::Single) {
      for (auto &s : collect(it.parent.first))
        out.push_back(s);
    } else {
      std::string kk = fresh("k" + tag);
      out.push_back(for_range(kk, lit(0), it.parent.size(), collect(it.parent.at(var(kk)))));
    }
    out.push_back(
        assign(nullptr, call("spl_sort_pairs", {var(it.srtCrd), var(it.srtPos), var(n)})));
    it.lo = lit(0);
    it.hi = var(n);
    it.cur = fresh("s" + tag);
    it.coord = fresh(vname + L);
    it.scan = !ni.raw;
    it.accumulate = it.scan && last;
    if (it.scan) it.next = fresh("s" + tag + "_next");
    if (it.accumulate) it.vsum = fresh("v" + tag);
    return it;
  }

  std::vector<CExprPtr> access_args(const It &it, const CExprPtr &q, const State &st) const {
    std::vector<CExprPtr> args = {q};
    if (flevel(it.leaf, it.level).fmt.kind == LevelKind::Offset) {
      args.push_back(st.leaves[it.leaf].lc[it.level - 1]);
    }
    return args;
  }

  // Moves a hashed cursor past empty buckets.
  void skip_empty(StmtList &out, const It &it, const State &st) {
    if (!it.skipEmpty) return;
    std::string go = fresh("skip");
    std::string t = fresh("c" + labels_[it.leaf]);
    std::string f = fresh("f" + labels_[it.leaf]);
    out.push_back(decl(CType::Bool, go, lit(1)));
    StmtList body = {
        lcall(it.leaf, it.level, "pos_access", access_args(it, var(it.cur), st), {t, f}),
        if_chain({var(f)},
                 {{assign(var(go), lit(0))}, {assign(var(it.cur), add(var(it.cur), lit(1)))}})};
    out.push_back(while_loop(bin("&&", var(go), bin("<", var(it.cur), it.hi)), std::move(body)));
  }

  // Advances a cursor past every coordinate up to `lastC`.
  void skip_through(StmtList &out, const It &it, const std::string &lastC, const State &st) {
    CExprPtr next = add(var(lastC), lit(1));
    if (it.mode == It::Counter || it.mode == It::Value) {
      out.push_back(if_chain({bin("<", var(it.cur), next)}, {{assign(var(it.cur), next)}}));
      return;
    }
    if (it.mode == It::Sorted) {
      out.push_back(while_loop(
          land(bin("<", var(it.cur), it.hi), bin("<=", load(it.srtCrd, var(it.cur)), var(lastC))),
          {assign(var(it.cur), add(var(it.cur), lit(1)))}));
      return;
    }
    std::string go = fresh("skip");
    std::string t = fresh("c" + labels_[it.leaf]);
    std::string f = fresh("f" + labels_[it.leaf]);
    out.push_back(decl(CType::Bool, go, lit(1)));
    StmtList body = {
        lcall(it.leaf, it.level, "pos_access", access_args(it, var(it.cur), st), {t, f}),
        if_chain({land(var(f), bin(">", var(t), var(lastC)))},
                 {{assign(var(go), lit(0))}, {assign(var(it.cur), add(var(it.cur), lit(1)))}})};
    out.push_back(while_loop(bin("&&", var(go), bin("<", var(it.cur), it.hi)), std::move(body)));
  }

  // Reads the coordinate at the cursor and, for deduplicated iterators,
  // scans ahead over the run of equal coordinates.
  void load_head(StmtList &out, const It &it, const State &st) {
    if (it.mode == It::Counter || it.mode == It::Value) return;
    StmtList scan;
    if (it.mode == It::Positions) {
      std::string f = fresh("f" + labels_[it.leaf]);
      out.push_back(
          lcall(it.leaf, it.level, "pos_access", access_args(it, var(it.cur), st), {it.coord, f}));
    } else {
      out.push_back(decl(CType::Index, it.coord, load(it.srtCrd, var(it.cur))));
    }
    if (!it.scan) return;
    CExprPtr valPos = it.mode == It::Sorted ? load(it.srtPos, var(it.next)) : var(it.next);
    CExprPtr firstPos = it.mode == It::Sorted ? load(it.srtPos, var(it.cur)) : var(it.cur);
    out.push_back(decl(CType::Index, it.next, add(var(it.cur), lit(1))));
    if (it.accumulate) out.push_back(decl(CType::Double, it.vsum, load(vals(it.leaf), firstPos)));
    StmtList grow;
    if (it.accumulate) grow.push_back(accumulate(var(it.vsum), load(vals(it.leaf), valPos)));
    grow.push_back(assign(var(it.next), add(var(it.next), lit(1))));
    if (it.mode == It::Sorted) {
      out.push_back(while_loop(land(bin("<", var(it.next), it.hi),
                                    bin("==", load(it.srtCrd, var(it.next)), var(it.coord))),
                               std::move(grow)));
      return;
    }
    std::string go = fresh("dedup");
    std::string t = fresh("c" + labels_[it.leaf]);
    std::string f = fresh("f" + labels_[it.leaf]);
    out.push_back(decl(CType::Bool, go, lit(1)));
    StmtList body = {
        lcall(it.leaf, it.level, "pos_access", access_args(it, var(it.next), st), {t, f}),
        if_chain({land(var(f), bin("==", var(t), var(it.coord)))},
                 {std::move(grow), {assign(var(go), lit(0))}})};
    out.push_back(while_loop(bin("&&", var(go), bin("<", var(it.next), it.hi)), std::move(body)));
  }

  CExprPtr next_of(const It &it) const { return it.scan ? var(it.next) : add(var(it.cur), lit(1)); }

  // Positions of the present iterator's level at the current coordinate.
  void set_group(StmtList &out, const It &it, State &st) {
    if (it.mode == It::Counter) return;
    LeafState &ls = st.leaves[it.leaf];
    int k = it.level;
    ls.lc[k] = var(it.coord);
    if (it.mode == It::Value) {
      if (it.parent.shape == GroupC::Single) {
        std::string tag = labels_[it.leaf] + std::to_string(k + 1);
        std::string p = fresh("p" + tag);
        std::string f = fresh("f" + tag);
        out.push_back(lcall(it.leaf, k, "coord_access", {it.parent.first, var(it.coord)}, {p, f}));
        ls.grp[k + 1] = single(var(p));
      } else if (flevel(it.leaf, k).fmt.kind == LevelKind::Dense &&
                 it.parent.shape == GroupC::Strided) {
        CExprPtr N = var(field(it.leaf, k, "N"));
        ls.grp[k + 1] = strided(add(mul(it.parent.first, N), var(it.coord)), it.parent.count,
                                mul(it.parent.stride, N));
      } else {
        ls.grp[k + 1] = materialize(out, it.leaf, k, it.parent, "coord_access", var(it.coord));
      }
      return;
    }
    GroupC g;
    if (it.mode == It::Positions) {
      g = it.scan ? strided(var(it.cur), sub(var(it.next), var(it.cur)), lit(1))
                  : single(var(it.cur));
    } else {
      g = it.scan ? slice(it.srtPos, var(it.cur), sub(var(it.next), var(it.cur)))
                  : single(load(it.srtPos, var(it.cur)));
    }
    if (it.accumulate) g.value = var(it.vsum);
    ls.grp[k + 1] = g;
  }

  void visit(StmtList &out, const LoopNode &node, const State &st) {
    if (node.terminal) {
      CExprPtr e = eval(out, *node.expr, st);
      out.push_back(accumulate(var(acc_), e));
      out.push_back(assign(var(touched_), lit(1)));
      return;
    }
    std::vector<It> its;
    for (const NodeIter &ni : node.iters)
      its.push_back(make_iter(out, node, ni, st));

    const LoopPoint &p0 = node.points.front();
    bool fast = node.points.size() == 1 && p0.coiter.size() == 1 && !its[p0.coiter[0]].scan;
    if (fast) {
      lower_single(out, node, p0, its[p0.coiter[0]], its, st);
      return;
    }
    for (It &it : its) {
      out.push_back(decl(CType::Index, it.cur, it.lo));
      skip_empty(out, it, st);
    }
    std::string lastC;
    if (node.points.size() > 1) {
      lastC = fresh("last_" + varNames_[node.var]);
      out.push_back(decl(CType::Index, lastC, lit(-1)));
    }
    std::set<int> always; // iterators in every point so far
    for (std::size_t p = 0; p < node.points.size(); ++p) {
      const LoopPoint &lp = node.points[p];
      if (p > 0) {
        for (int idx : lp.coiter) {
          if (!always.count(idx)) skip_through(out, its[idx], lastC, st);
        }
      }
      lower_merge(out, node, lp, its, st, lastC);
      std::set<int> now(lp.coiter.begin(), lp.coiter.end());
      if (p == 0) {
        always = now;
      } else {
        std::set<int> keep;
        for (int idx : always) {
          if (now.count(idx)) keep.insert(idx);
        }
        always = keep;
      }
    }
  }

  // One iterator with no duplicate runs: a counted loop, or straight-line
  // code when the level holds exactly one position per parent.
  void lower_single(StmtList &out, const LoopNode &node, const LoopPoint &lp, It &it,
                    const std::vector<It> &its, const State &st) {
    const std::string &vname = varNames_[node.var];
    StmtList body;
    CExprPtr present = lit(1);
    if (it.mode == It::Counter || it.mode == It::Value) {
      it.cur = vname;
      it.coord = vname;
      State inner = st;
      inner.bind[node.var] = var(vname);
      lower_body(body, node, lp, its, {{it.leaf, present}}, inner);
      out.push_back(for_range(vname, it.lo, it.hi, std::move(body)));
      return;
    }
    it.coord = vname;
    if (it.mode == It::Positions) {
      std::string f = fresh("f" + labels_[it.leaf]);
      body.push_back(
          lcall(it.leaf, it.level, "pos_access", access_args(it, var(it.cur), st), {vname, f}));
      present = var(f);
    } else {
      body.push_back(decl(CType::Index, vname, load(it.srtCrd, var(it.cur))));
    }
    State inner = st;
    inner.bind[node.var] = var(vname);
    lower_body(body, node, lp, its, {{it.leaf, present}}, inner);
    if (it.straight) {
      StmtList b = {decl(CType::Index, it.cur, it.lo)};
      for (auto &s : body)
        b.push_back(s);
      out.push_back(block(std::move(b)));
      return;
    }
    out.push_back(for_range(it.cur, it.lo, it.hi, std::move(body)));
  }

  // A merge loop over the iterators of one lattice point.
  void lower_merge(StmtList &out, const LoopNode &node, const LoopPoint &lp, std::vector<It> &its,
                   const State &st, const std::string &lastC) {
    const std::string &vname = varNames_[node.var];
    std::vector<int> terminating;
    for (int idx : lp.coiter) {
      if (!lp.fullTerminates || node.iters[idx].full) terminating.push_back(idx);
    }
    auto valid = [&](int idx) { return bin("<", var(its[idx].cur), its[idx].hi); };
    CExprPtr cond = lit(1);
    for (int idx : terminating)
      cond = land(cond, valid(idx));
    if (terminating.size() != lp.coiter.size()) {
      CExprPtr any;
      for (int idx : lp.coiter)
        any = any ? bin("||", any, valid(idx)) : valid(idx);
      cond = land(cond, any);
    }
    std::set<int> term(terminating.begin(), terminating.end());
    bool sole = lp.coiter.size() == 1;

    StmtList body;
    std::vector<CExprPtr> guards;
    for (int idx : lp.coiter) {
      It &it = its[idx];
      bool guarded = !sole && !term.count(idx);
      guards.push_back(guarded ? valid(idx) : lit(1));
      if (!guarded) {
        load_head(body, it, st);
        continue;
      }
      if (it.mode == It::Counter || it.mode == It::Value) continue;
      // Only read the cursor when it is in range.
      StmtList head;
      load_head(head, it, st);
      std::string c = it.coord;
      std::string hc = fresh(c + "_at");
      for (auto &s : head) {
        if (s->kind == Stmt::LevelCall && !s->call.results.empty() && s->call.results[0] == c) {
          s->call.results[0] = hc;
        }
        if (s->kind == Stmt::Decl && s->var == c) s->var = hc;
      }
      rename_reads(head, c, hc);
      body.push_back(decl(CType::Index, c, lit(0)));
      if (it.scan) body.push_back(decl(CType::Index, it.next, add(var(it.cur), lit(1))));
      if (it.accumulate) body.push_back(decl(CType::Double, it.vsum, real(0.0)));
      StmtList assigned;
      for (auto &s : head) {
        if (s->kind == Stmt::Decl && (s->var == it.next || s->var == it.vsum)) {
          assigned.push_back(assign(var(s->var), s->value));
        } else {
          assigned.push_back(s);
        }
      }
      assigned.push_back(assign(var(c), var(hc)));
      body.push_back(if_chain({valid(idx)}, {std::move(assigned)}));
    }

    std::map<int, CExprPtr> present;
    if (sole) {
      body.push_back(decl(CType::Index, vname, var(its[lp.coiter[0]].coord)));
      present[its[lp.coiter[0]].leaf] = lit(1);
    } else {
      std::vector<CExprPtr> values;
      for (int idx : lp.coiter)
        values.push_back(var(its[idx].coord));
      body.push_back(decl(CType::Index, vname));
      body.push_back(min_of(vname, guards, values));
      for (std::size_t j = 0; j < lp.coiter.size(); ++j) {
        const It &it = its[lp.coiter[j]];
        present[it.leaf] = land(guards[j], bin("==", var(it.coord), var(vname)));
      }
    }
    State inner = st;
    inner.bind[node.var] = var(vname);
    lower_body(body, node, lp, its, present, inner);

    for (int idx : lp.coiter) {
      const It &it = its[idx];
      StmtList adv = {assign(var(it.cur), next_of(it))};
      skip_empty(adv, it, st);
      if (sole) {
        for (auto &s : adv)
          body.push_back(s);
      } else {
        body.push_back(if_chain({present.at(it.leaf)}, {std::move(adv)}));
      }
    }
    if (!lastC.empty()) body.push_back(assign(var(lastC), var(vname)));
    out.push_back(while_loop(cond, std::move(body)));
  }

  static void rename_reads(StmtList &list, const std::string &from, const std::string &to) {
    std::function<CExprPtr(const CExprPtr &)> re = [&](const CExprPtr &e) -> CExprPtr {
      if (!e) return e;
      if (e->kind == CExpr::Var && e->name == from) return var(to);
      if (e->args.empty()) return e;
      auto copy = std::make_shared<CExpr>(*e);
      for (auto &a : copy->args)
        a = re(a);
      return copy;
    };
    for (StmtPtr &s : list) {
      auto copy = std::make_shared<Stmt>(*s);
      copy->target = re(copy->target);
      copy->value = re(copy->value);
      copy->lo = re(copy->lo);
      copy->hi = re(copy->hi);
      for (auto &c : copy->conds)
        c = re(c);
      for (auto &v : copy->values)
        v = re(v);
      for (auto &a : copy->call.args)
        a = re(a);
      rename_reads(copy->body, from, to);
      for (auto &b : copy->bodies)
        rename_reads(b, from, to);
      s = copy;
    }
  }

  // Locates, case dispatch and descent for one loop iteration. `present`
  // holds the presence test of each co-iterated leaf.
  void lower_body(StmtList &body, const LoopNode &node, const LoopPoint &lp,
                  const std::vector<It> &its, std::map<int, CExprPtr> present, State &st) {
    CExprPtr c = st.bind[node.var];
    for (std::size_t k = 0; k < lp.locate.size(); ++k) {
      int leaf = lp.locate[k];
      present[leaf] =
          lp.locateLevel[k] < 0 ? lit(1) : locate_level(body, leaf, lp.locateLevel[k], c, st);
    }
    std::vector<CExprPtr> conds;
    std::vector<StmtList> bodies;
    for (int ci : lp.cases) {
      CExprPtr cond = lit(1);
      bool possible = true;
      for (const auto &[leaf, d] : node.dims) {
        if (!(node.caseDims[ci] & bit(leaf))) continue;
        auto it = present.find(leaf);
        if (it == present.end()) {
          possible = false;
          break;
        }
        cond = land(cond, it->second);
      }
      if (!possible) continue;
      State inner = st;
      StmtList b;
      for (int idx : lp.coiter) {
        if (node.caseDims[ci] & bit(its[idx].leaf)) set_group(b, its[idx], inner);
      }
      for (int leaf : node.derivedLeaves) {
        if (node.caseDims[ci] & bit(leaf)) process_derived(b, node, leaf, inner);
      }
      descend(b, *node.children[ci], inner);
      conds.push_back(cond);
      bodies.push_back(std::move(b));
      if (is_true(cond)) break;
    }
    if (bodies.empty()) return;
    if (conds.size() == 1 && is_true(conds[0])) {
      for (auto &s : bodies[0])
        body.push_back(s);
      return;
    }
    if (is_true(conds.back())) conds.pop_back();
    body.push_back(if_chain(std::move(conds), std::move(bodies)));
  }

  const Schedule &s_;
  std::string out_;
  std::vector<std::string> labels_;
  std::vector<std::string> tensors_;
  std::vector<std::string> varNames_;
  std::set<std::string> used_;
  std::vector<KernelParam> candidates_;
  std::vector<std::string> buffers_;
  StmtList prologue_;
  std::vector<std::string> gPos_;
  std::vector<std::string> gLast_;
  std::string acc_;
  std::string touched_;
};

} // namespace

Kernel lower(const Schedule &schedule, const std::string &name) {
  return Lowerer(schedule).run(name);
}

} // namespace spl
