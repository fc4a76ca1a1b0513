#ifndef SPL_LATTICE_HPP
#define SPL_LATTICE_HPP

#include <map>
#include <string>
#include <vector>

#include "spl/levels.hpp"
#include "spl/notation.hpp"

namespace spl {

/// What one leaf of the expression contributes at one loop variable.
struct Dim {
  enum Kind {
    Universe, // no storage level at this variable: every coordinate is present
    Level,    // a direct storage level iterated or located at this variable
    Derived   // dense levels located from already bound variables
  };
  int leaf = -1;
  Kind kind = Universe;
  int level = -1;
  LevelFormat fmt = dense();
  std::string name;

  bool full() const { return kind != Level || fmt.props.full; }
  bool locatable() const { return kind != Level || fmt.locatable(); }
  bool ordered() const { return kind != Level || fmt.props.ordered; }
  bool unique() const { return kind != Level || fmt.props.unique; }
};

using DimTable = std::map<int, Dim>;

struct LatticePoint {
  /// Leaf ids, sorted.
  std::vector<int> dims;
  ExprPtr expr;
};

enum class Directive { None, DedupChained, DedupScratch, ReorderScratch, AccessByLocate };

std::string_view to_string(Directive d);

struct MergeLattice {
  /// Every point of the construction, top-down. Cases inside a loop are
  /// selected from these.
  std::vector<LatticePoint> allPoints;
  /// Points that get a loop, after pruning.
  std::vector<LatticePoint> points;
  std::vector<std::vector<int>> coiter;
  std::vector<std::vector<int>> locate;
  std::vector<std::map<int, Directive>> plans;

  std::string dump(const DimTable &dims) const;
};

/// Recursive construction: an access is one point, a product takes pairwise
/// meets, a sum takes the meets plus the points of each side. Points with the
/// same dimension set are merged by adding their expressions. Points are
/// ordered by decreasing size, ties in construction order.
MergeLattice build_lattice(const ExprPtr &expr, const DimTable &dims);

/// Drops every point that lacks one of the full dimensions.
MergeLattice prune_full(MergeLattice lattice, const DimTable &dims);

/// Indices into `allPoints` of the points whose dimensions are a subset of
/// `point`'s.
std::vector<int> dominated_points(const MergeLattice &lattice, const LatticePoint &point);

struct CoiterSplit {
  std::vector<int> coiter;
  std::vector<int> locate;
};

/// Co-iterated and located dimensions of one point. Sums co-iterate both
/// sides; products locate into whichever side leaves the smaller co-iteration
/// set. Of several full co-iterated dimensions only those without locate are
/// kept, or the best single one when all can locate. `forceFull` puts a full
/// dimension in the co-iteration set so the loop covers the whole range.
CoiterSplit split_coiter_locate(const LatticePoint &point, const DimTable &dims,
                                bool forceFull = false);

/// Inputs to the conversion choice for one dimension.
struct PlanContext {
  bool located = false;
  /// Several dimensions are merged, or the coordinates feed an output that
  /// needs them in order.
  bool needsOrder = false;
  bool isLeafLevel = false;
  bool childPositionIterable = false;
  bool childOrdered = false;
  bool childCompact = false;
};

Directive build_plan(const Dim &dim, const PlanContext &ctx);

/// Computes split, coiteration sets and plans for every loop point.
/// `needsOrder` says whether a lone iterator must still produce ordered
/// coordinates; `context` supplies the child level facts per leaf.
void plan_lattice(MergeLattice &lattice, const DimTable &dims, bool needsOrder,
                  const std::map<int, PlanContext> &context);

} // namespace spl

#endif
