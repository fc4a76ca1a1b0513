#ifndef SPL_SCHEDULE_HPP
#define SPL_SCHEDULE_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spl/graph.hpp"
#include "spl/lattice.hpp"

namespace spl {

struct ScheduleOptions {
  /// Fuse branchless levels into their parent's loop.
  bool fuse = true;
  /// Remove lattice points that miss a full dimension.
  bool pruneFull = true;
};

/// How a co-iterated dimension is walked inside one loop node.
struct NodeIter {
  int leaf = -1;
  Dim::Kind kind = Dim::Universe;
  int level = -1;
  Directive directive = Directive::None;
  /// Visit every stored position separately (fused with a branchless child).
  bool raw = false;
  /// Collect the coordinates and sort them before merging.
  bool sort = false;
  bool full = false;
};

struct LoopPoint {
  std::uint64_t dims = 0;
  /// Indices into the node's `iters`.
  std::vector<int> coiter;
  /// Leaves located at this variable.
  std::vector<int> locate;
  /// Storage level located for each entry of `locate`, -1 when the leaf has
  /// no direct level here.
  std::vector<int> locateLevel;
  bool fullTerminates = false;
  /// Indices into the lattice's allPoints, in order, that the loop body can
  /// dispatch to.
  std::vector<int> cases;
};

struct LoopNode {
  /// Preorder number, unique within a schedule.
  int id = 0;
  int depth = 0;
  int var = -1;
  ExprPtr expr;
  bool terminal = false;
  DimTable dims;
  MergeLattice lattice;
  std::vector<NodeIter> iters;
  std::vector<LoopPoint> points;
  std::vector<std::uint64_t> caseDims;
  /// Leaves with derived levels processed at this variable.
  std::vector<int> derivedLeaves;
  /// Child per allPoints entry.
  std::vector<std::shared_ptr<LoopNode>> children;
};

struct LeafInfo {
  int leaf = -1;
  bool literal = false;
  double value = 0.0;
  std::string tensor;
  int path = -1;
  /// Level indices processed at each depth.
  std::vector<std::vector<int>> levelsAt;
  /// Number of levels processed before each depth (one extra entry for the
  /// terminal depth).
  std::vector<int> processedBefore;
};

struct Schedule {
  enum Mode { Gather, Scatter };

  CheckedAssignment expr;
  IterationGraph graph;
  ScheduleOptions options;
  Mode mode = Scatter;
  /// Number of leading variables that bind every output coordinate. The
  /// result is emitted once per binding at this depth.
  int outDepth = 0;
  std::vector<LeafInfo> leaves;
  std::shared_ptr<LoopNode> root;
  int numNodes = 0;

  int num_vars() const { return static_cast<int>(graph.order.size()); }
  const LoopVar &var_at(int depth) const { return graph.vars[graph.order[depth]]; }
  const TensorPath &output() const { return graph.paths[0]; }

  /// Lattices of every node, indented by depth.
  std::string dump_lattices() const;
};

Schedule make_schedule(const CheckedAssignment &expr, const FormatBindings &formats,
                       ScheduleOptions options = {});

inline std::uint64_t bit(int leaf) { return std::uint64_t{1} << leaf; }

} // namespace spl

#endif
