#include "spl/lattice.hpp"

#include <algorithm>
#include <set>

namespace spl {

std::string_view to_string(Directive d) {
  switch (d) {
  case Directive::None: return "none";
  case Directive::DedupChained: return "dedup-chained";
  case Directive::DedupScratch: return "dedup-scratch";
  case Directive::ReorderScratch: return "reorder-scratch";
  case Directive::AccessByLocate: return "access-by-locate";
  }
  return "?";
}

namespace {

using Points = std::vector<LatticePoint>;

std::vector<int> set_union(const std::vector<int> &a, const std::vector<int> &b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int> set_minus(const std::vector<int> &a, const std::vector<int> &b) {
  std::vector<int> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool subset(const std::vector<int> &a, const std::vector<int> &b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

void add_point(Points &pts, LatticePoint p) {
  for (LatticePoint &q : pts) {
    if (q.dims == p.dims) {
      q.expr = make_add(q.expr, p.expr);
      return;
    }
  }
  pts.push_back(std::move(p));
}

Points build(const ExprPtr &e, const DimTable &dims) {
  if (e->is_leaf()) {
    if (!dims.count(e->leaf)) {
      throw Error("lattice", "no dimension recorded for leaf " + std::to_string(e->leaf));
    }
    return {LatticePoint{{e->leaf}, e}};
  }
  Points a = build(e->lhs, dims);
  Points b = build(e->rhs, dims);
  Points out;
  for (const LatticePoint &pa : a) {
    for (const LatticePoint &pb : b) {
      ExprPtr ex = e->kind == Expr::Mul ? make_mul(pa.expr, pb.expr) : make_add(pa.expr, pb.expr);
      add_point(out, LatticePoint{set_union(pa.dims, pb.dims), ex});
    }
  }
  if (e->kind == Expr::Add) {
    for (const LatticePoint &pa : a)
      add_point(out, pa);
    for (const LatticePoint &pb : b)
      add_point(out, pb);
  }
  return out;
}

struct SplitRec {
  std::vector<int> coiter;
  std::vector<int> locatable;
};

SplitRec split_rec(const Expr &e, const DimTable &dims) {
  if (e.is_leaf()) {
    SplitRec r{{e.leaf}, {}};
    if (dims.at(e.leaf).locatable()) r.locatable = {e.leaf};
    return r;
  }
  SplitRec l = split_rec(*e.lhs, dims);
  SplitRec r = split_rec(*e.rhs, dims);
  SplitRec out;
  out.locatable = set_union(l.locatable, r.locatable);
  if (e.kind == Expr::Add) {
    out.coiter = set_union(l.coiter, r.coiter);
  } else {
    std::vector<int> first = set_union(l.coiter, set_minus(r.coiter, r.locatable));
    std::vector<int> second = set_union(r.coiter, set_minus(l.coiter, l.locatable));
    out.coiter = second.size() < first.size() ? second : first;
  }
  return out;
}

int dim_rank(const Dim &d) {
  switch (d.kind) {
  case Dim::Level: return 0;
  case Dim::Derived: return 1;
  case Dim::Universe: return 2;
  }
  return 3;
}

} // namespace

MergeLattice build_lattice(const ExprPtr &expr, const DimTable &dims) {
  Points pts = build(expr, dims);
  std::stable_sort(pts.begin(), pts.end(), [](const LatticePoint &a, const LatticePoint &b) {
    return a.dims.size() > b.dims.size();
  });
  MergeLattice l;
  l.allPoints = pts;
  l.points = pts;
  return l;
}

MergeLattice prune_full(MergeLattice lattice, const DimTable &dims) {
  if (lattice.allPoints.empty()) return lattice;
  std::vector<int> fullDims;
  for (int d : lattice.allPoints.front().dims) {
    if (dims.at(d).full()) fullDims.push_back(d);
  }
  Points kept;
  for (const LatticePoint &p : lattice.points) {
    if (subset(fullDims, p.dims)) kept.push_back(p);
  }
  lattice.points = std::move(kept);
  return lattice;
}

std::vector<int> dominated_points(const MergeLattice &lattice, const LatticePoint &point) {
  std::vector<int> out;
  for (std::size_t k = 0; k < lattice.allPoints.size(); ++k) {
    if (subset(lattice.allPoints[k].dims, point.dims)) out.push_back(static_cast<int>(k));
  }
  return out;
}

CoiterSplit split_coiter_locate(const LatticePoint &point, const DimTable &dims, bool forceFull) {
  std::vector<int> coiter = split_rec(*point.expr, dims).coiter;

  auto best_full = [&]() {
    int best = -1;
    for (int d : point.dims) {
      const Dim &dim = dims.at(d);
      if (!dim.full() || !dim.locatable()) continue;
      if (best < 0 || dim_rank(dim) < dim_rank(dims.at(best))) best = d;
    }
    return best;
  };

  std::vector<int> fullCoiter;
  for (int d : coiter) {
    if (dims.at(d).full()) fullCoiter.push_back(d);
  }
  if (!fullCoiter.empty()) {
    bool anyUnlocatable = std::any_of(fullCoiter.begin(), fullCoiter.end(),
                                      [&](int d) { return !dims.at(d).locatable(); });
    std::vector<int> drop;
    for (int d : fullCoiter) {
      if (dims.at(d).locatable()) drop.push_back(d);
    }
    coiter = set_minus(coiter, drop);
    if (!anyUnlocatable) coiter = set_union(coiter, {best_full()});
  } else if (forceFull) {
    int best = best_full();
    if (best < 0) {
      // Only full dimensions without locate remain; any of them spans the range.
      for (int d : point.dims) {
        if (dims.at(d).full()) {
          best = d;
          break;
        }
      }
    }
    if (best >= 0) coiter = set_union(coiter, {best});
  }
  return CoiterSplit{coiter, set_minus(point.dims, coiter)};
}

Directive build_plan(const Dim &dim, const PlanContext &ctx) {
  if (dim.kind != Dim::Level) return Directive::None;
  if (ctx.located) return dim.ordered() ? Directive::None : Directive::AccessByLocate;
  if (!dim.ordered()) {
    if (!ctx.needsOrder && dim.unique()) return Directive::None;
    return Directive::ReorderScratch;
  }
  if (dim.unique()) return Directive::None;
  bool chain = ctx.isLeafLevel || (ctx.childPositionIterable && ctx.childOrdered &&
                                   ctx.childCompact && dim.fmt.props.compact);
  return chain ? Directive::DedupChained : Directive::DedupScratch;
}

void plan_lattice(MergeLattice &lattice, const DimTable &dims, bool needsOrder,
                  const std::map<int, PlanContext> &context) {
  lattice.coiter.clear();
  lattice.locate.clear();
  lattice.plans.clear();
  for (const LatticePoint &p : lattice.points) {
    bool pruned = false;
    for (int k : dominated_points(lattice, p)) {
      const auto &dimsK = lattice.allPoints[k].dims;
      bool present = std::any_of(lattice.points.begin(), lattice.points.end(),
                                 [&](const LatticePoint &q) { return q.dims == dimsK; });
      if (!present) pruned = true;
    }
    CoiterSplit split = split_coiter_locate(p, dims, pruned);
    std::map<int, Directive> plan;
    for (int d : p.dims) {
      PlanContext ctx;
      auto it = context.find(d);
      if (it != context.end()) ctx = it->second;
      ctx.located = std::find(split.locate.begin(), split.locate.end(), d) != split.locate.end();
      ctx.needsOrder = needsOrder || split.coiter.size() > 1;
      plan[d] = build_plan(dims.at(d), ctx);
    }
    lattice.coiter.push_back(split.coiter);
    lattice.locate.push_back(split.locate);
    lattice.plans.push_back(std::move(plan));
  }
}

std::string MergeLattice::dump(const DimTable &dims) const {
  auto names = [&](const std::vector<int> &ds) {
    std::string s = "{";
    for (std::size_t k = 0; k < ds.size(); ++k)
      s += (k ? ", " : "") + dims.at(ds[k]).name;
    return s + "}";
  };
  std::string out;
  for (std::size_t k = 0; k < points.size(); ++k) {
    out += "point " + std::to_string(k) + ": " + names(points[k].dims) + " = " +
           to_string(*points[k].expr);
    if (k < coiter.size()) {
      out += " | coiterate " + names(coiter[k]) + " locate " + names(locate[k]);
      std::string plan;
      for (auto [d, dir] : plans[k]) {
        if (dir == Directive::None) continue;
        plan += " " + dims.at(d).name + ":" + std::string(to_string(dir));
      }
      if (!plan.empty()) out += " |" + plan;
    }
    out += "\n";
  }
  return out;
}

} // namespace spl
