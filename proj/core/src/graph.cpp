#include "spl/graph.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace spl {

int IterationGraph::var_id(const std::string &name) const {
  for (std::size_t v = 0; v < vars.size(); ++v) {
    if (vars[v].name == name) return static_cast<int>(v);
  }
  return -1;
}

const TensorPath &IterationGraph::path_for_leaf(int leaf) const {
  for (const TensorPath &p : paths) {
    if (p.leaf == leaf) return p;
  }
  throw GraphError("no path for leaf " + std::to_string(leaf));
}

namespace {

std::string outer_name(const std::string &v, Index b) { return v + "/" + std::to_string(b); }
std::string inner_name(const std::string &v, Index b) { return v + "%" + std::to_string(b); }

} // namespace

IterationGraph build_graph(const CheckedAssignment &checked, const FormatBindings &formats) {
  const Assignment &a = checked.assignment;
  IterationGraph g;

  auto format_of = [&](const std::string &t) -> const TensorFormat & {
    auto it = formats.find(t);
    if (it == formats.end()) throw ValidationError("tensor " + t + " has no format");
    return it->second;
  };

  // Split factors come from operand levels only.
  std::map<std::string, Index> split;
  std::vector<const Expr *> accessLeaves;
  for (const Expr *l : leaves(*a.rhs)) {
    if (l->kind != Expr::Access) continue;
    accessLeaves.push_back(l);
    for (const FormatLevel &fl : format_of(l->tensor).levels) {
      if (fl.map.kind != LevelMap::BlockOuter && fl.map.kind != LevelMap::BlockInner) continue;
      const std::string &v = l->vars.at(fl.map.dim);
      auto [it, inserted] = split.emplace(v, fl.map.block);
      if (!inserted && it->second != fl.map.block) {
        throw UnsupportedError(
            "graph", "index variable " + v + " is blocked with different block sizes (" +
                         std::to_string(it->second) + " and " + std::to_string(fl.map.block) + ")");
      }
    }
  }

  auto add_var = [&](LoopVar lv) {
    int id = g.var_id(lv.name);
    if (id >= 0) return id;
    g.vars.push_back(std::move(lv));
    return static_cast<int>(g.vars.size()) - 1;
  };
  auto logical_var = [&](const std::string &v) {
    LoopVar lv;
    lv.name = v;
    lv.extent = checked.extents.at(v);
    return add_var(lv);
  };
  auto part_var = [&](const std::string &v, bool isOuter) {
    Index b = split.at(v);
    Index extent = checked.extents.at(v);
    if (extent % b != 0) {
      throw FormatError("inconsistent blocking parameters: extent " + std::to_string(extent) +
                        " of " + v + " is not a multiple of block size " + std::to_string(b));
    }
    LoopVar lv;
    lv.name = isOuter ? outer_name(v, b) : inner_name(v, b);
    lv.kind = isOuter ? LoopVar::Outer : LoopVar::Inner;
    lv.base = v;
    lv.block = b;
    lv.extent = isOuter ? extent / b : b;
    return add_var(lv);
  };
  // Variables a logical index variable's value is computed from.
  auto value_deps = [&](const std::string &v) -> std::vector<int> {
    if (split.count(v)) return {part_var(v, true), part_var(v, false)};
    return {logical_var(v)};
  };

  auto make_path = [&](const std::string &tensor, const std::vector<std::string> &ivars, int leaf) {
    TensorPath p;
    p.tensor = tensor;
    p.leaf = leaf;
    p.ivars = ivars;
    p.format = format_of(tensor);
    bool isOutput = leaf < 0;
    for (std::size_t k = 0; k < p.format.levels.size(); ++k) {
      const FormatLevel &fl = p.format.levels[k];
      LevelPlan lp;
      switch (fl.map.kind) {
      case LevelMap::Whole: {
        const std::string &v = ivars.at(fl.map.dim);
        lp.deps = value_deps(v);
        lp.direct = lp.deps.size() == 1;
        break;
      }
      case LevelMap::BlockOuter:
      case LevelMap::BlockInner: {
        const std::string &v = ivars.at(fl.map.dim);
        auto it = split.find(v);
        if (it != split.end() && it->second == fl.map.block) {
          lp.deps = {part_var(v, fl.map.kind == LevelMap::BlockOuter)};
          lp.direct = true;
        } else {
          lp.deps = value_deps(v);
          lp.direct = false;
        }
        break;
      }
      case LevelMap::Synthetic: {
        if (isOutput) {
          throw UnsupportedError("graph", "output format " + p.format.str() +
                                              " has structural levels that cannot be assembled");
        }
        LoopVar lv;
        lv.name = tensor + "#" + std::to_string(k);
        if (g.var_id(lv.name) >= 0) lv.name += "." + std::to_string(leaf);
        lv.kind = LoopVar::Synthetic;
        lv.leaf = leaf;
        lv.level = static_cast<int>(k);
        lp.deps = {add_var(lv)};
        lp.direct = true;
        break;
      }
      }
      p.levels.push_back(std::move(lp));
    }
    return p;
  };

  // Operand paths first so variables are numbered by first appearance on the
  // right-hand side; the output path goes to the front afterwards.
  std::vector<TensorPath> operandPaths;
  for (const Expr *l : accessLeaves)
    operandPaths.push_back(make_path(l->tensor, l->vars, l->leaf));
  // Variables only reachable through literals or the output still need a loop.
  for (const std::string &v : checked.vars)
    value_deps(v);
  g.paths.push_back(make_path(a.tensor, a.vars, -1));
  for (TensorPath &p : operandPaths)
    g.paths.push_back(std::move(p));

  std::set<std::pair<int, int>> edges;
  for (const TensorPath &p : g.paths) {
    for (std::size_t k = 0; k < p.levels.size(); ++k) {
      if (!p.levels[k].direct) continue;
      int target = p.levels[k].deps[0];
      for (std::size_t j = 0; j < k; ++j) {
        for (int u : p.levels[j].deps) {
          if (u != target) edges.insert({u, target});
        }
      }
    }
  }
  // Keep edges in a deterministic, appearance-based order.
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

std::vector<int> order_vars(IterationGraph &g) {
  const int n = static_cast<int>(g.vars.size());
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  for (auto [u, v] : g.edges) {
    succ[u].push_back(v);
    ++indeg[v];
  }
  std::vector<int> order;
  std::vector<bool> done(n, false);
  for (int step = 0; step < n; ++step) {
    int pick = -1;
    for (int v = 0; v < n; ++v) {
      if (!done[v] && indeg[v] == 0) {
        pick = v;
        break;
      }
    }
    if (pick < 0) {
      // Report one cycle among the remaining variables.
      std::vector<int> state(n, 0), stack;
      std::vector<int> cycle;
      std::function<bool(int)> dfs = [&](int u) {
        state[u] = 1;
        stack.push_back(u);
        for (int w : succ[u]) {
          if (done[w]) continue;
          if (state[w] == 1) {
            auto it = std::find(stack.begin(), stack.end(), w);
            cycle.assign(it, stack.end());
            cycle.push_back(w);
            return true;
          }
          if (state[w] == 0 && dfs(w)) return true;
        }
        stack.pop_back();
        state[u] = 2;
        return false;
      };
      for (int v = 0; v < n && cycle.empty(); ++v) {
        if (!done[v] && state[v] == 0) dfs(v);
      }
      std::string msg = "cyclic ordering constraints between index variables: ";
      for (std::size_t k = 0; k < cycle.size(); ++k)
        msg += (k ? " -> " : "") + g.vars[cycle[k]].name;
      msg += "; change the mode ordering of one of the tensors";
      throw GraphError(msg);
    }
    done[pick] = true;
    order.push_back(pick);
    for (int w : succ[pick])
      --indeg[w];
  }
  g.order = order;
  g.rank.assign(n, 0);
  for (int r = 0; r < n; ++r)
    g.rank[order[r]] = r;
  for (TensorPath &p : g.paths) {
    int prev = -1;
    for (LevelPlan &lp : p.levels) {
      int home = prev;
      for (int d : lp.deps)
        home = std::max(home, g.rank[d]);
      lp.home = home;
      prev = home;
    }
  }
  return order;
}

std::string IterationGraph::dump() const {
  std::string out = "vars:";
  for (const LoopVar &v : vars)
    out += " " + v.name;
  out += "\norder:";
  for (int v : order)
    out += " " + vars[v].name;
  out += "\n";
  for (const TensorPath &p : paths) {
    out += p.tensor + (p.leaf < 0 ? " (output)" : "") + ":";
    for (std::size_t k = 0; k < p.levels.size(); ++k) {
      const LevelPlan &lp = p.levels[k];
      out += k ? " ->" : "";
      out += " ";
      if (!lp.direct) out += "[";
      for (std::size_t d = 0; d < lp.deps.size(); ++d)
        out += (d ? "," : "") + vars[lp.deps[d]].name;
      if (!lp.direct) out += "]";
    }
    out += "\n";
  }
  out += "edges:";
  for (auto [u, v] : edges)
    out += " " + vars[u].name + "->" + vars[v].name;
  out += "\n";
  return out;
}

} // namespace spl
