#include "spl/engine.hpp"

#include <algorithm>
#include <memory>

#include "spl/assembler.hpp"

namespace spl {

// LevelIterator

void LevelIterator::reset(const LevelStorage &level, Group parents, std::span<const Index> prefix,
                          Options options) {
  level_ = &level;
  parents_ = parents;
  coords_.assign(prefix.begin(), prefix.end());
  coords_.push_back(0);
  raw_ = options.raw;
  valid_ = false;
  if (parents_.size() == 0) return;
  if (level.kind == LevelKind::Dense || level.kind == LevelKind::Range) {
    mode_ = Value;
    Bounds b = coord_bounds(level, prefix);
    cur_ = b.begin;
    end_ = b.end;
    load_value();
    return;
  }
  bool contiguous = !parents_.list && parents_.stride == 1;
  bool ordered = options.ordered && level.kind != LevelKind::Hashed;
  if (!options.sort && (parents_.size() == 1 || (contiguous && ordered))) {
    mode_ = Positions;
    cur_ = pos_bounds(level, parents_.at(0)).begin;
    end_ = pos_bounds(level, parents_.at(parents_.size() - 1)).end;
    load_positions();
    return;
  }
  mode_ = Sorted;
  sorted_.clear();
  for (Index k = 0; k < parents_.size(); ++k) {
    Bounds b = pos_bounds(level, parents_.at(k));
    for (Index q = b.begin; q < b.end; ++q) {
      Found f = pos_access(level, q, prefix);
      if (f.found) sorted_.emplace_back(f.value, q);
    }
  }
  std::stable_sort(sorted_.begin(), sorted_.end(),
                   [](const auto &a, const auto &b) { return a.first < b.first; });
  scratch_.resize(sorted_.size());
  for (std::size_t k = 0; k < sorted_.size(); ++k)
    scratch_[k] = sorted_[k].second;
  cur_ = 0;
  end_ = static_cast<Index>(sorted_.size());
  load_sorted();
}

void LevelIterator::reset_counter(Index extent) {
  mode_ = Counter;
  level_ = nullptr;
  cur_ = 0;
  end_ = extent;
  valid_ = extent > 0;
  coord_ = 0;
  next_ = 1;
}

LevelIterator LevelIterator::counter(Index extent) {
  LevelIterator it;
  it.reset_counter(extent);
  return it;
}

void LevelIterator::load_value() {
  valid_ = cur_ < end_;
  if (!valid_) return;
  coord_ = cur_;
  next_ = cur_ + 1;
  coords_.back() = coord_;
  const LevelStorage &lvl = *level_;
  if (parents_.size() == 1) {
    group_ = {coord_access(lvl, parents_.at(0), coords_).value, 1, 1, nullptr};
  } else if (lvl.kind == LevelKind::Dense && !parents_.list) {
    group_ = {parents_.first * lvl.N + coord_, parents_.count, parents_.stride * lvl.N, nullptr};
  } else {
    scratch_.clear();
    for (Index k = 0; k < parents_.size(); ++k) {
      scratch_.push_back(coord_access(lvl, parents_.at(k), coords_).value);
    }
    group_ = {0, static_cast<Index>(scratch_.size()), 1, &scratch_};
  }
}

void LevelIterator::load_positions() {
  const LevelStorage &lvl = *level_;
  std::span<const Index> prefix(coords_.data(), coords_.size() - 1);
  Found f{};
  while (cur_ < end_) {
    f = pos_access(lvl, cur_, prefix);
    if (f.found) break;
    ++cur_;
  }
  valid_ = cur_ < end_;
  if (!valid_) return;
  coord_ = f.value;
  next_ = cur_ + 1;
  if (!raw_) {
    while (next_ < end_) {
      Found g = pos_access(lvl, next_, prefix);
      if (!g.found || g.value != coord_) break;
      ++next_;
    }
  }
  group_ = {cur_, next_ - cur_, 1, nullptr};
}

void LevelIterator::load_sorted() {
  valid_ = cur_ < end_;
  if (!valid_) return;
  coord_ = sorted_[cur_].first;
  next_ = cur_ + 1;
  if (!raw_) {
    while (next_ < end_ && sorted_[next_].first == coord_)
      ++next_;
  }
  group_ = {cur_, next_ - cur_, 1, &scratch_};
}

void LevelIterator::advance() {
  if (!valid_) return;
  cur_ = next_;
  switch (mode_) {
  case Counter:
    valid_ = cur_ < end_;
    coord_ = cur_;
    next_ = cur_ + 1;
    break;
  case Value: load_value(); break;
  case Positions: load_positions(); break;
  case Sorted: load_sorted(); break;
  }
}

Group locate_group(const LevelStorage &level, const Group &parents, std::span<const Index> coords,
                   std::vector<Index> &buffer) {
  if (level.kind == LevelKind::Dense && !parents.list) {
    Index c = coords.back();
    return {parents.first * level.N + c, parents.count, parents.stride * level.N, nullptr};
  }
  if (parents.size() == 1) {
    Found f = locate(level, parents.at(0), coords);
    return f.found ? Group{f.value, 1, 1, nullptr} : Group{};
  }
  buffer.clear();
  for (Index k = 0; k < parents.size(); ++k) {
    Found f = locate(level, parents.at(k), coords);
    if (f.found) buffer.push_back(f.value);
  }
  return {0, static_cast<Index>(buffer.size()), 1, &buffer};
}

double group_value(const std::vector<double> &vals, const Group &g) {
  if (g.count == 1) return vals[g.at(0)];
  double sum = 0.0;
  for (Index k = 0; k < g.size(); ++k)
    sum += vals[g.at(k)];
  return sum;
}

std::int64_t coiterate(std::span<LevelIterator> its, std::uint64_t terminating,
                       const std::function<void(Index, std::uint64_t)> &visit) {
  if (terminating == 0) {
    for (std::size_t k = 0; k < its.size(); ++k)
      terminating |= bit(static_cast<int>(k));
  }
  std::int64_t visits = 0;
  while (true) {
    bool live = false;
    bool ended = false;
    Index c = 0;
    for (std::size_t k = 0; k < its.size(); ++k) {
      if (!its[k].valid()) {
        if (terminating & bit(static_cast<int>(k))) ended = true;
        continue;
      }
      if (!live || its[k].coord() < c) c = its[k].coord();
      live = true;
    }
    if (ended || !live) break;
    std::uint64_t present = 0;
    for (std::size_t k = 0; k < its.size(); ++k) {
      if (its[k].valid() && its[k].coord() == c) present |= bit(static_cast<int>(k));
    }
    ++visits;
    visit(c, present);
    for (std::size_t k = 0; k < its.size(); ++k) {
      if (present & bit(static_cast<int>(k))) its[k].advance();
    }
  }
  return visits;
}

namespace {

// Logical value of an index variable from the bound loop variables.
struct VarValue {
  int id = -1;
  int outer = -1;
  int inner = -1;
  Index block = 1;
};

class Interpreter {
public:
  Interpreter(const Schedule &s, const StorageBindings &inputs, EvalStats *stats)
      : s_(s), stats_(stats) {
    const Assignment &a = s.expr.assignment;
    const IterationGraph &g = s.graph;
    bind_.assign(g.vars.size(), 0);
    storage_.assign(s.leaves.size(), nullptr);
    grp_.resize(s.leaves.size());
    lc_.resize(s.leaves.size());
    for (const LeafInfo &info : s.leaves) {
      if (info.literal) continue;
      auto it = inputs.find(info.tensor);
      if (it == inputs.end() || !it->second) {
        throw ValidationError("tensor " + info.tensor + " has no storage bound");
      }
      const TensorStorage *st = it->second;
      if (!(st->format == g.paths[info.path].format)) {
        throw ValidationError("storage of " + info.tensor + " is in format " + st->format.str() +
                              " but the schedule was built for " + g.paths[info.path].format.str());
      }
      storage_[info.leaf] = st;
      std::size_t nl = g.paths[info.path].levels.size();
      grp_[info.leaf].assign(nl + 1, Group{});
      grp_[info.leaf][0] = {0, 1, 1, nullptr};
      lc_[info.leaf].assign(nl, 0);
    }
    for (const auto &[name, extent] : s.expr.extents) {
      VarValue v;
      v.id = g.var_id(name);
      if (v.id < 0) {
        for (std::size_t k = 0; k < g.vars.size(); ++k) {
          if (g.vars[k].base != name) continue;
          if (g.vars[k].kind == LoopVar::Outer) v.outer = static_cast<int>(k);
          if (g.vars[k].kind == LoopVar::Inner) v.inner = static_cast<int>(k);
          v.block = g.vars[k].block;
        }
      }
      values_[name] = v;
    }
    extents_.resize(g.vars.size());
    for (std::size_t k = 0; k < g.vars.size(); ++k) {
      const LoopVar &lv = g.vars[k];
      if (lv.kind == LoopVar::Synthetic) {
        extents_[k] = storage_[lv.leaf]->levels[lv.level].N;
      } else {
        extents_[k] = lv.extent;
      }
    }

    const TensorFormat &of = s.output().format;
    std::vector<Index> dims;
    for (const std::string &v : a.vars)
      dims.push_back(s.expr.extents.at(v));
    out_ = make_storage(of, dims);
    frames_.resize(static_cast<std::size_t>(s.numNodes));
    outLogical_.resize(a.vars.size());
    outLevel_.resize(of.levels.size());
  }

  TensorStorage run() {
    if (s_.mode == Schedule::Scatter) {
      scatter_ = std::make_unique<ScatterOutput>(out_);
    } else {
      gather_ = std::make_unique<OutputAssembler>(out_, false);
    }
    descend(*s_.root);
    if (scatter_) scatter_->finish();
    if (gather_) gather_->finish();
    return std::move(out_);
  }

private:
  // Per-node state. A node is never active twice at once, so each keeps
  // its iterators across visits and reuses their memory.
  struct Frame {
    std::vector<LevelIterator> its;
    std::vector<std::unique_ptr<std::vector<Index>>> buffers;
    std::size_t used = 0;

    std::vector<Index> &buffer() {
      if (used == buffers.size()) buffers.push_back(std::make_unique<std::vector<Index>>());
      return *buffers[used++];
    }
  };

  Index logical(const std::string &name) const {
    const VarValue &v = values_.at(name);
    if (v.id >= 0) return bind_[v.id];
    return bind_[v.outer] * v.block + bind_[v.inner];
  }

  Index mapped(const LevelMap &m, const std::vector<std::string> &ivars) const {
    Index x = logical(ivars.at(m.dim));
    switch (m.kind) {
    case LevelMap::BlockOuter: return x / m.block;
    case LevelMap::BlockInner: return x % m.block;
    default: return x;
    }
  }

  void descend(const LoopNode &node) {
    if (node.depth != s_.outDepth) {
      visit(node);
      return;
    }
    acc_ = 0.0;
    touched_ = false;
    visit(node);
    if (touched_) emit();
  }

  void emit() {
    const TensorPath &out = s_.output();
    for (std::size_t d = 0; d < out.ivars.size(); ++d)
      outLogical_[d] = logical(out.ivars[d]);
    to_level_coords(out.format, outLogical_.data(), outLevel_.data());
    if (scatter_) {
      scatter_->add(outLevel_.data(), acc_);
    } else {
      gather_->emit(outLevel_.data(), acc_);
    }
  }

  double eval(const Expr &e) const {
    switch (e.kind) {
    case Expr::Literal: return e.value;
    case Expr::Access: {
      const TensorStorage &st = *storage_[e.leaf];
      return group_value(st.vals, grp_[e.leaf].back());
    }
    case Expr::Add: return eval(*e.lhs) + eval(*e.rhs);
    case Expr::Mul: return eval(*e.lhs) * eval(*e.rhs);
    }
    return 0.0;
  }

  std::span<const Index> prefix(int leaf, int k) const {
    return std::span<const Index>(lc_[leaf].data(), static_cast<std::size_t>(k));
  }

  Group locate_in(const LevelStorage &lvl, const Group &parents, std::span<const Index> coords,
                  Frame &f) {
    if (parents.size() == 1 || (lvl.kind == LevelKind::Dense && !parents.list)) {
      return locate_group(lvl, parents, coords, unused_);
    }
    return locate_group(lvl, parents, coords, f.buffer());
  }

  // Locates the direct level of a located dimension at the current binding;
  // derived levels follow in process_derived.
  bool locate_level(int leaf, int k, Index c, Frame &f) {
    if (stats_) ++stats_->locates;
    const LevelStorage &lvl = storage_[leaf]->levels[k];
    lc_[leaf][k] = c;
    Group g = locate_in(lvl, grp_[leaf][k], prefix(leaf, k + 1), f);
    grp_[leaf][k + 1] = g;
    return g.size() > 0;
  }

  // Dense levels whose coordinates are computed from bound variables.
  void process_derived(const LoopNode &node, int leaf, Frame &f) {
    const LeafInfo &info = s_.leaves[leaf];
    const auto &at = info.levelsAt[node.depth];
    const Dim &d = node.dims.at(leaf);
    const TensorPath &path = s_.graph.paths[info.path];
    for (std::size_t j = d.kind == Dim::Level ? 1 : 0; j < at.size(); ++j) {
      int k = at[j];
      const LevelStorage &lvl = storage_[leaf]->levels[k];
      lc_[leaf][k] = mapped(path.format.levels[k].map, path.ivars);
      const Group &parents = grp_[leaf][k];
      if (!parents.list) {
        grp_[leaf][k + 1] = {parents.first * lvl.N + lc_[leaf][k], parents.count,
                             parents.stride * lvl.N, nullptr};
      } else {
        grp_[leaf][k + 1] = locate_in(lvl, parents, prefix(leaf, k + 1), f);
      }
    }
  }

  void visit(const LoopNode &node) {
    if (node.terminal) {
      acc_ += eval(*node.expr);
      touched_ = true;
      return;
    }
    Frame &f = frames_[node.id];
    f.its.resize(node.iters.size());
    f.used = 0;
    for (std::size_t k = 0; k < node.iters.size(); ++k) {
      const NodeIter &ni = node.iters[k];
      if (ni.kind != Dim::Level) {
        f.its[k].reset_counter(extents_[node.var]);
        continue;
      }
      const LevelStorage &lvl = storage_[ni.leaf]->levels[ni.level];
      bool ordered =
          s_.graph.paths[s_.leaves[ni.leaf].path].format.levels[ni.level].fmt.props.ordered;
      f.its[k].reset(lvl, grp_[ni.leaf][ni.level], prefix(ni.leaf, ni.level),
                     LevelIterator::Options{ni.raw, ni.sort, ordered});
    }

    bool any = false;
    Index lastC = 0;
    for (std::size_t p = 0; p < node.points.size(); ++p) {
      const LoopPoint &lp = node.points[p];
      if (any) {
        for (int idx : lp.coiter)
          f.its[idx].skip_through(lastC);
      }
      while (true) {
        bool live = false, ended = false;
        Index c = 0;
        for (int idx : lp.coiter) {
          const LevelIterator &it = f.its[idx];
          if (!it.valid()) {
            if (!lp.fullTerminates || node.iters[idx].full) ended = true;
            continue;
          }
          if (!live || it.coord() < c) c = it.coord();
          live = true;
        }
        if (ended || !live) break;
        if (stats_) {
          ++stats_->visits;
          if (node.depth == 0) ++stats_->rootVisits;
        }
        bind_[node.var] = c;
        std::uint64_t present = 0;
        for (int idx : lp.coiter) {
          const LevelIterator &it = f.its[idx];
          if (!it.valid() || it.coord() != c) continue;
          int leaf = node.iters[idx].leaf;
          present |= bit(leaf);
          if (node.iters[idx].kind == Dim::Level) {
            lc_[leaf][node.iters[idx].level] = c;
            grp_[leaf][node.iters[idx].level + 1] = it.group();
          }
        }
        for (std::size_t k = 0; k < lp.locate.size(); ++k) {
          int leaf = lp.locate[k];
          if (lp.locateLevel[k] < 0 || locate_level(leaf, lp.locateLevel[k], c, f)) {
            present |= bit(leaf);
          }
        }
        int chosen = -1;
        for (int k : lp.cases) {
          if ((node.caseDims[k] & ~present) == 0) {
            chosen = k;
            break;
          }
        }
        if (chosen >= 0) {
          for (int leaf : node.derivedLeaves) {
            if (node.caseDims[chosen] & bit(leaf)) process_derived(node, leaf, f);
          }
          descend(*node.children[chosen]);
        }
        for (int idx : lp.coiter) {
          LevelIterator &it = f.its[idx];
          if (it.valid() && it.coord() == c) it.advance();
        }
        any = true;
        lastC = c;
        f.used = 0;
      }
    }
  }

  const Schedule &s_;
  EvalStats *stats_;
  std::vector<Index> bind_;
  std::vector<Index> extents_;
  std::vector<const TensorStorage *> storage_;
  std::vector<std::vector<Group>> grp_;
  std::vector<std::vector<Index>> lc_;
  std::map<std::string, VarValue> values_;
  TensorStorage out_;
  std::vector<Index> outLogical_;
  std::vector<Index> outLevel_;
  std::unique_ptr<ScatterOutput> scatter_;
  std::unique_ptr<OutputAssembler> gather_;
  std::vector<Index> unused_;
  std::vector<Frame> frames_;
  double acc_ = 0.0;
  bool touched_ = false;
};

CheckedAssignment check(std::string_view expr, const StorageBindings &inputs,
                        const TensorFormat &outFormat, FormatBindings &formats) {
  Assignment a = parse(expr);
  ShapeBindings shapes;
  std::map<std::string, Index> extents;
  for (const Expr *l : leaves(*a.rhs)) {
    if (l->kind != Expr::Access) continue;
    auto it = inputs.find(l->tensor);
    if (it == inputs.end() || !it->second)
      throw ValidationError("tensor " + l->tensor + " is not bound");
    const TensorStorage &st = *it->second;
    shapes[l->tensor] = TensorShape{static_cast<int>(st.dims.size()), st.dims};
    formats[l->tensor] = st.format;
    for (std::size_t k = 0; k < l->vars.size() && k < st.dims.size(); ++k) {
      extents.emplace(l->vars[k], st.dims[k]);
    }
  }
  if (static_cast<int>(a.vars.size()) != outFormat.order) {
    throw ValidationError("output " + a.tensor + " is accessed with " +
                          std::to_string(a.vars.size()) + " index variables but its format " +
                          outFormat.str() + " has order " + std::to_string(outFormat.order));
  }
  TensorShape outShape{outFormat.order, {}};
  for (const std::string &v : a.vars) {
    auto it = extents.find(v);
    if (it == extents.end()) {
      throw ValidationError("index variable " + v +
                            " of the output does not appear on the right-hand side");
    }
    outShape.dims.push_back(it->second);
  }
  shapes[a.tensor] = outShape;
  formats[a.tensor] = outFormat;
  return validate(a, shapes);
}

} // namespace

TensorStorage evaluate(const Schedule &schedule, const StorageBindings &inputs, EvalStats *stats) {
  Interpreter interp(schedule, inputs, stats);
  return interp.run();
}

Schedule plan(std::string_view expr, const StorageBindings &inputs, const TensorFormat &outFormat,
              ScheduleOptions options) {
  FormatBindings formats;
  CheckedAssignment checked = check(expr, inputs, outFormat, formats);
  return make_schedule(checked, formats, options);
}

TensorStorage evaluate(std::string_view expr, const StorageBindings &inputs,
                       const TensorFormat &outFormat, ScheduleOptions options, EvalStats *stats) {
  return evaluate(plan(expr, inputs, outFormat, options), inputs, stats);
}

TensorStorage convert(const TensorStorage &src, const TensorFormat &dst) {
  if (dst.order != src.format.order) {
    throw FormatError("cannot convert an order-" + std::to_string(src.format.order) +
                      " tensor to format " + dst.str() + " of order " + std::to_string(dst.order));
  }
  std::string vars;
  for (int d = 0; d < dst.order; ++d)
    vars += (d ? "," : "") + std::string("i") + std::to_string(d);
  std::string expr = "dst(" + vars + ") = src(" + vars + ")";
  if (dst.order == 0) expr = "dst = src";
  try {
    check_dims(dst, src.dims);
    return evaluate(expr, {{"src", &src}}, dst);
  } catch (const UnsupportedError &) {
  } catch (const GraphError &) {
  }
  return assemble(dst, src.dims, enumerate(src));
}

} // namespace spl
