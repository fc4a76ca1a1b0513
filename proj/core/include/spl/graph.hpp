#ifndef SPL_GRAPH_HPP
#define SPL_GRAPH_HPP

#include <map>
#include <string>
#include <vector>

#include "spl/formats.hpp"
#include "spl/notation.hpp"

namespace spl {

/// A loop variable of the iteration space. Blocked operand levels split a
/// logical variable into an outer and an inner part; DIA diagonals and ELL
/// slots introduce synthetic variables private to one access.
struct LoopVar {
  enum Kind { Logical, Outer, Inner, Synthetic };
  std::string name;
  Kind kind = Logical;
  std::string base; // logical variable an Outer/Inner part belongs to
  Index block = 1;
  int leaf = -1; // owning access for synthetic variables
  int level = -1;
  /// Iteration extent; -1 for synthetic variables, whose extent is read from
  /// the bound storage.
  Index extent = -1;
};

/// How one storage level of an access is reached.
struct LevelPlan {
  /// Loop variables the level's coordinate is computed from.
  std::vector<int> deps;
  /// Direct levels are iterated (or located) at their single dependency.
  /// Derived levels are located once every dependency is bound.
  bool direct = true;
  /// Position in the variable order at which the level is processed.
  int home = -1;
};

struct TensorPath {
  std::string tensor;
  int leaf = -1; // -1 for the output
  std::vector<std::string> ivars;
  TensorFormat format;
  std::vector<LevelPlan> levels;
};

struct IterationGraph {
  std::vector<LoopVar> vars;
  /// paths[0] is the output; the rest follow the leaves of the right-hand side.
  std::vector<TensorPath> paths;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> order;
  std::vector<int> rank;

  int var_id(const std::string &name) const;
  const TensorPath &path_for_leaf(int leaf) const;
  std::string dump() const;
};

using FormatBindings = std::map<std::string, TensorFormat>;

IterationGraph build_graph(const CheckedAssignment &expr, const FormatBindings &formats);

/// Topological order of the loop variables, ties broken by first appearance.
/// Also fills `rank` and the level homes. Throws GraphError on a cycle.
std::vector<int> order_vars(IterationGraph &graph);

} // namespace spl

#endif
