#include "spl/schedule.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace spl {

namespace {

bool contains_structural(const Expr &e, const IterationGraph &g) {
  for (const Expr *l : leaves(e)) {
    if (l->kind != Expr::Access) continue;
    for (const FormatLevel &fl : g.path_for_leaf(l->leaf).format.levels) {
      if (fl.map.kind == LevelMap::Synthetic) return true;
    }
  }
  return false;
}

void check_sums(const Expr &e, const IterationGraph &g) {
  if (e.is_leaf()) return;
  if (e.kind == Expr::Add && (contains_structural(*e.lhs, g) || contains_structural(*e.rhs, g))) {
    throw UnsupportedError("schedule",
                           "tensors stored with structural levels (DIA, ELL) can only be "
                           "multiplied, not added: their diagonal/slot index would be summed "
                           "over the other operand as well");
  }
  check_sums(*e.lhs, g);
  check_sums(*e.rhs, g);
}

int directive_strength(Directive d) {
  switch (d) {
  case Directive::None: return 0;
  case Directive::AccessByLocate: return 0;
  case Directive::DedupChained: return 1;
  case Directive::DedupScratch: return 2;
  case Directive::ReorderScratch: return 3;
  }
  return 0;
}

bool is_position(LevelKind k) { return has_capability(k, Capability::PositionIteration); }

class Builder {
public:
  Builder(Schedule &s) : s_(s), n_(s.num_vars()) {}

  void build_leaves() {
    const Assignment &a = s_.expr.assignment;
    s_.leaves.resize(a.numLeaves);
    for (const Expr *l : leaves(*a.rhs)) {
      LeafInfo &info = s_.leaves[l->leaf];
      info.leaf = l->leaf;
      info.levelsAt.assign(n_, {});
      info.processedBefore.assign(n_ + 1, 0);
      if (l->kind == Expr::Literal) {
        info.literal = true;
        info.value = l->value;
        continue;
      }
      info.tensor = l->tensor;
      for (std::size_t p = 0; p < s_.graph.paths.size(); ++p) {
        if (s_.graph.paths[p].leaf == l->leaf) info.path = static_cast<int>(p);
      }
      const TensorPath &path = s_.graph.paths[info.path];
      for (std::size_t k = 0; k < path.levels.size(); ++k) {
        const LevelPlan &lp = path.levels[k];
        if (!lp.direct && path.format.levels[k].fmt.kind != LevelKind::Dense) {
          throw UnsupportedError("schedule", "level " + std::to_string(k) + " of " + l->tensor +
                                                 " is indexed by a blocked variable and must be "
                                                 "dense to be located");
        }
        if (lp.home < 0) continue;
        auto &at = info.levelsAt[lp.home];
        if (lp.direct && !at.empty()) {
          throw UnsupportedError("schedule", "two iterated levels of " + l->tensor +
                                                 " fall on one loop variable");
        }
        at.push_back(static_cast<int>(k));
      }
      for (int r = 0; r <= n_; ++r) {
        int count = 0;
        for (const LevelPlan &lp : path.levels) {
          if (lp.home < r) ++count;
        }
        info.processedBefore[r] = count;
      }
    }
  }

  void choose_mode() {
    const TensorPath &out = s_.output();
    bool insertable = true, direct = true;
    std::set<int> deps;
    int maxRank = -1;
    for (std::size_t k = 0; k < out.levels.size(); ++k) {
      LevelKind kind = out.format.levels[k].fmt.kind;
      if (kind != LevelKind::Dense && kind != LevelKind::Hashed) insertable = false;
      if (kind == LevelKind::Range || kind == LevelKind::Offset) {
        throw UnsupportedError("schedule", "output format " + out.format.str() +
                                               " has levels without assembly capabilities");
      }
      if (!out.levels[k].direct) direct = false;
      for (int d : out.levels[k].deps) {
        deps.insert(d);
        maxRank = std::max(maxRank, s_.graph.rank[d]);
      }
    }
    s_.outDepth = maxRank + 1;
    bool gatherOk = direct && static_cast<int>(deps.size()) == maxRank + 1;
    if (insertable) {
      s_.mode = Schedule::Scatter;
    } else if (gatherOk) {
      s_.mode = Schedule::Gather;
    } else {
      throw UnsupportedError("schedule",
                             "output format " + out.format.str() +
                                 " is assembled by appending, which needs every output coordinate "
                                 "produced once and in order, but the loop order interleaves other "
                                 "index variables or blocked coordinates; use an insert-capable "
                                 "(dense or hashed) output");
    }
  }

  Dim dim_for(const Expr &leaf, int depth) const {
    Dim d;
    d.leaf = leaf.leaf;
    if (leaf.kind == Expr::Literal) {
      d.name = "#" + std::to_string(leaf.leaf);
      return d;
    }
    const LeafInfo &info = s_.leaves[leaf.leaf];
    const TensorPath &path = s_.graph.paths[info.path];
    const auto &at = info.levelsAt[depth];
    std::string base =
        leaf.tensor + (count_tensor(leaf.tensor) > 1 ? "'" + std::to_string(leaf.leaf) : "");
    if (at.empty()) {
      d.name = base + ":-";
      return d;
    }
    int k = at.front();
    d.level = k;
    if (!path.levels[k].direct) {
      d.kind = Dim::Derived;
      d.name = base + ":" + std::to_string(k) + "'";
      return d;
    }
    d.kind = Dim::Level;
    d.fmt = path.format.levels[k].fmt;
    d.fmt.props.unique = effective_unique(path, k);
    d.name = base + ":" + std::to_string(k);
    return d;
  }

  int count_tensor(const std::string &t) const {
    int c = 0;
    for (const LeafInfo &l : s_.leaves)
      c += !l.literal && l.tensor == t;
    return c;
  }

  // A position level under a parent whose groups can hold several positions
  // may see a coordinate more than once.
  static bool effective_unique(const TensorPath &path, int k) {
    bool multi = false;
    for (int j = 0; j < k; ++j) {
      const LevelFormat &f = path.format.levels[j].fmt;
      if (is_position(f.kind) && !f.props.unique) multi = true;
    }
    const LevelFormat &f = path.format.levels[k].fmt;
    if (!is_position(f.kind)) return f.props.unique;
    return f.props.unique && !multi;
  }

  std::shared_ptr<LoopNode> build_node(int depth, const ExprPtr &expr) {
    auto node = std::make_shared<LoopNode>();
    node->id = s_.numNodes++;
    node->depth = depth;
    node->expr = expr;
    if (depth == n_) {
      node->terminal = true;
      return node;
    }
    node->var = s_.graph.order[depth];
    for (const Expr *l : leaves(*expr))
      node->dims[l->leaf] = dim_for(*l, depth);

    for (const auto &[leaf, d] : node->dims) {
      if (d.kind == Dim::Universe) continue;
      std::size_t direct = d.kind == Dim::Level ? 1 : 0;
      if (s_.leaves[leaf].levelsAt[depth].size() > direct) node->derivedLeaves.push_back(leaf);
    }
    node->lattice = build_lattice(expr, node->dims);
    if (s_.options.pruneFull) node->lattice = prune_full(node->lattice, node->dims);

    std::map<int, PlanContext> ctx;
    for (auto &[leaf, d] : node->dims) {
      if (d.kind != Dim::Level) continue;
      const TensorPath &path = s_.graph.paths[s_.leaves[leaf].path];
      PlanContext c;
      c.isLeafLevel = d.level + 1 == static_cast<int>(path.levels.size());
      if (!c.isLeafLevel) {
        const LevelFormat &child = path.format.levels[d.level + 1].fmt;
        c.childPositionIterable = is_position(child.kind);
        c.childOrdered = child.props.ordered;
        c.childCompact = child.props.compact;
      }
      ctx[leaf] = c;
    }
    bool needsOrder = s_.mode == Schedule::Gather && depth < s_.outDepth;
    plan_lattice(node->lattice, node->dims, needsOrder, ctx);

    const MergeLattice &L = node->lattice;
    std::map<int, int> iterIndex;
    for (std::size_t p = 0; p < L.points.size(); ++p) {
      for (int leaf : L.coiter[p]) {
        Directive dir = L.plans[p].at(leaf);
        auto it = iterIndex.find(leaf);
        if (it == iterIndex.end()) {
          NodeIter ni;
          const Dim &d = node->dims.at(leaf);
          ni.leaf = leaf;
          ni.kind = d.kind;
          ni.level = d.level;
          ni.full = d.full();
          ni.directive = dir;
          iterIndex[leaf] = static_cast<int>(node->iters.size());
          node->iters.push_back(ni);
        } else if (directive_strength(dir) >
                   directive_strength(node->iters[it->second].directive)) {
          node->iters[it->second].directive = dir;
        }
      }
    }
    // A loop that takes over from an earlier point resumes past the last
    // merged coordinate, so an iterator joining there must be ordered.
    std::set<int> started;
    for (std::size_t p = 0; p < L.points.size(); ++p) {
      for (int leaf : L.coiter[p]) {
        NodeIter &ni = node->iters[iterIndex.at(leaf)];
        if (p > 0 && !started.count(leaf) && !node->dims.at(leaf).ordered()) {
          ni.directive = Directive::ReorderScratch;
        }
      }
      for (int leaf : L.coiter[p])
        started.insert(leaf);
    }
    for (NodeIter &ni : node->iters) {
      ni.sort =
          ni.directive == Directive::ReorderScratch || ni.directive == Directive::DedupScratch;
    }
    for (std::size_t p = 0; p < L.points.size(); ++p) {
      LoopPoint lp;
      for (int leaf : L.points[p].dims)
        lp.dims |= bit(leaf);
      for (int leaf : L.coiter[p]) {
        lp.coiter.push_back(iterIndex.at(leaf));
        if (node->dims.at(leaf).full()) lp.fullTerminates = true;
      }
      lp.locate = L.locate[p];
      for (int leaf : lp.locate) {
        const Dim &d = node->dims.at(leaf);
        lp.locateLevel.push_back(d.kind == Dim::Level ? d.level : -1);
      }
      lp.cases = dominated_points(L, L.points[p]);
      node->points.push_back(std::move(lp));
    }
    for (const LatticePoint &ap : L.allPoints) {
      std::uint64_t m = 0;
      for (int leaf : ap.dims)
        m |= bit(leaf);
      node->caseDims.push_back(m);
      node->children.push_back(build_node(depth + 1, ap.expr));
    }
    return node;
  }

  // Marks iterators that can walk raw positions together with a branchless
  // child level one variable further down.
  void fuse(LoopNode &node) {
    if (node.terminal) return;
    bool outputVar = s_.mode == Schedule::Gather && node.depth < s_.outDepth;
    for (std::size_t i = 0; i < node.iters.size(); ++i) {
      NodeIter &it = node.iters[i];
      if (it.kind != Dim::Level || outputVar) continue;
      if (!sole_everywhere(node, static_cast<int>(i))) continue;
      const LeafInfo &info = s_.leaves[it.leaf];
      const TensorPath &path = s_.graph.paths[info.path];
      int child = it.level + 1;
      if (child >= static_cast<int>(path.levels.size())) continue;
      if (!path.levels[child].direct || path.levels[child].home != node.depth + 1) continue;
      if (!path.format.levels[child].fmt.props.branchless) continue;
      bool ok = true;
      for (const auto &ch : node.children) {
        if (ch->terminal || !ch->dims.count(it.leaf)) continue;
        int ci = -1;
        for (std::size_t j = 0; j < ch->iters.size(); ++j) {
          if (ch->iters[j].leaf == it.leaf) ci = static_cast<int>(j);
        }
        if (ci < 0 || !sole_everywhere(*ch, ci)) ok = false;
      }
      if (!ok) continue;
      it.raw = true;
      it.sort = false;
      it.directive = Directive::None;
      for (auto &ch : node.children) {
        for (NodeIter &cj : ch->iters) {
          if (cj.leaf == it.leaf && !cj.sort) cj.directive = Directive::None;
        }
      }
    }
    for (auto &ch : node.children)
      fuse(*ch);
  }

  static bool sole_everywhere(const LoopNode &node, int iter) {
    bool seen = false;
    for (const LoopPoint &p : node.points) {
      if (std::find(p.coiter.begin(), p.coiter.end(), iter) == p.coiter.end()) {
        // Present but located would break the one-loop walk.
        const Dim &d = node.dims.at(node.iters[iter].leaf);
        if (p.dims & bit(d.leaf)) {
          if (std::find(p.locate.begin(), p.locate.end(), d.leaf) != p.locate.end()) return false;
        }
        continue;
      }
      seen = true;
      if (p.coiter.size() != 1) return false;
    }
    return seen;
  }

private:
  Schedule &s_;
  int n_;
};

void dump_node(const LoopNode &node, const Schedule &s, std::string &out,
               const std::string &label) {
  if (node.terminal) return;
  std::string indent(static_cast<std::size_t>(node.depth) * 2, ' ');
  out += indent + s.graph.vars[node.var].name + label + ": " +
         std::to_string(node.lattice.points.size()) + " point" +
         (node.lattice.points.size() == 1 ? "" : "s") + "\n";
  std::string body = node.lattice.dump(node.dims);
  std::size_t start = 0;
  while (start < body.size()) {
    std::size_t end = body.find('\n', start);
    out += indent + "  " + body.substr(start, end - start) + "\n";
    start = end + 1;
  }
  for (const NodeIter &it : node.iters) {
    if (it.raw) out += indent + "  fused: " + node.dims.at(it.leaf).name + "\n";
  }
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    std::string caseLabel =
        " [case " + std::to_string(k) + " " + to_string(*node.lattice.allPoints[k].expr) + "]";
    dump_node(*node.children[k], s, out, caseLabel);
  }
}

} // namespace

Schedule make_schedule(const CheckedAssignment &expr, const FormatBindings &formats,
                       ScheduleOptions options) {
  Schedule s;
  s.expr = expr;
  s.options = options;
  s.graph = build_graph(expr, formats);
  order_vars(s.graph);
  if (expr.assignment.numLeaves > 63) {
    throw UnsupportedError("schedule", "expressions are limited to 63 operands");
  }
  check_sums(*expr.assignment.rhs, s.graph);
  Builder b(s);
  b.build_leaves();
  b.choose_mode();
  s.root = b.build_node(0, expr.assignment.rhs);
  if (options.fuse) b.fuse(*s.root);
  return s;
}

std::string Schedule::dump_lattices() const {
  std::string out;
  if (root) dump_node(*root, *this, out, "");
  return out;
}

} // namespace spl
