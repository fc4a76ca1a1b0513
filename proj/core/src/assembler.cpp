#include "spl/assembler.hpp"

#include <algorithm>

namespace spl {

TensorStorage make_storage(const TensorFormat &format, const std::vector<Index> &dims,
                           Index defaultWidth) {
  check_dims(format, dims);
  TensorStorage s;
  s.format = format;
  s.dims = dims;
  for (const FormatLevel &lvl : format.levels) {
    Index extent = level_extent(lvl, dims);
    switch (lvl.fmt.kind) {
    case LevelKind::Dense: s.levels.push_back(make_dense_level(std::max<Index>(extent, 0))); break;
    case LevelKind::Compressed: s.levels.push_back(make_compressed_level()); break;
    case LevelKind::Singleton: s.levels.push_back(make_singleton_level()); break;
    case LevelKind::Hashed: {
      Index w = lvl.width;
      if (w <= 0) w = defaultWidth;
      if (w <= 0) {
        w = 1;
        while (w < extent)
          w <<= 1;
      }
      s.levels.push_back(make_hashed_level(w));
      break;
    }
    case LevelKind::Range:
    case LevelKind::Offset:
      throw UnsupportedError("formats", "range and offset levels cannot be assembled through "
                                        "insert/append; use the DIA preset");
    }
  }
  if (format.arrayOfStructs && s.levels.size() >= 2) {
    auto shared = std::make_shared<std::vector<Index>>();
    Index stride = static_cast<Index>(s.levels.size());
    for (std::size_t k = 0; k < s.levels.size(); ++k) {
      s.levels[k].crd = shared;
      s.levels[k].crdStride = stride;
      s.levels[k].crdBase = static_cast<Index>(k);
    }
  }
  return s;
}

OutputAssembler::OutputAssembler(TensorStorage &out, bool keepDuplicates)
    : out_(out), keepDuplicates_(keepDuplicates), n_(static_cast<int>(out.levels.size())) {
  last_.assign(n_, -1);
  pos_.assign(n_, 0);
  openParent_.assign(n_, -1);
  segBegin_.assign(n_, 0);
  knownSize_.assign(n_, -1);

  Index parentSize = 1;
  bool known = true;
  for (int k = 0; k < n_; ++k) {
    LevelStorage &lvl = out_.levels[k];
    const FormatLevel &fl = out_.format.levels[k];
    if (!fl.fmt.props.unique &&
        (lvl.kind == LevelKind::Compressed || lvl.kind == LevelKind::Singleton)) {
      deepestNonUnique_ = k;
    }
    switch (lvl.kind) {
    case LevelKind::Dense:
    case LevelKind::Hashed:
      if (!known) {
        if (lvl.kind == LevelKind::Hashed) {
          throw UnsupportedError("formats", "hashed output levels need insert-capable ancestors");
        }
        break;
      }
      {
        Index sz = size(lvl, parentSize);
        insert_init(lvl, parentSize, sz);
        parentSize = sz;
      }
      knownSize_[k] = parentSize;
      break;
    case LevelKind::Compressed:
    case LevelKind::Singleton:
      append_init(lvl, known ? parentSize : 0, 0);
      lvl.crd->clear();
      known = false;
      break;
    default:
      throw UnsupportedError("formats", std::string(to_string(lvl.kind)) +
                                            " levels have no assembly capability");
    }
  }
  out_.vals.clear();
  if (n_ > 0 && knownSize_[n_ - 1] >= 0) out_.vals.assign(knownSize_[n_ - 1], 0.0);
  if (n_ == 0) out_.vals.assign(1, 0.0);
}

void OutputAssembler::open_parent(int k, Index parentPos) {
  LevelStorage &lvl = out_.levels[k];
  if (parentPos == openParent_[k]) return;
  if (parentPos < openParent_[k]) {
    throw AssemblyError("output coordinates arrived out of order at level " + std::to_string(k));
  }
  if (openParent_[k] >= 0) append_edges(lvl, openParent_[k], segBegin_[k], lvl.appended);
  for (Index q = openParent_[k] + 1; q < parentPos; ++q) {
    append_edges(lvl, q, lvl.appended, lvl.appended);
  }
  openParent_[k] = parentPos;
  segBegin_[k] = lvl.appended;
}

void OutputAssembler::emit(const Index *c, double value) {
  if (n_ == 0) {
    out_.vals[0] += value;
    return;
  }
  int d = 0;
  if (hasLast_) {
    d = n_;
    for (int k = 0; k < n_; ++k) {
      if (c[k] != last_[k]) {
        if (c[k] < last_[k]) throw AssemblyError("output coordinates arrived out of order");
        d = k;
        break;
      }
    }
    if (d == n_) {
      if (!keepDuplicates_ || deepestNonUnique_ < 0) {
        out_.vals[pos_[n_ - 1]] += value;
        return;
      }
      d = deepestNonUnique_;
    }
  }
  for (int k = n_ - 1; k >= 1; --k) {
    if (out_.levels[k].kind == LevelKind::Singleton && d <= k) d = std::min(d, k - 1);
  }
  if (hasLast_ && c[d] == last_[d] &&
      (out_.format.levels[d].fmt.props.unique || !(out_.levels[d].kind == LevelKind::Compressed ||
                                                   out_.levels[d].kind == LevelKind::Singleton))) {
    throw AssemblyError("format " + out_.format.str() + " cannot hold these coordinates: level " +
                        std::to_string(d) + " would need a repeated coordinate");
  }
  for (int k = d; k < n_; ++k) {
    LevelStorage &lvl = out_.levels[k];
    Index parentPos = k == 0 ? 0 : pos_[k - 1];
    switch (lvl.kind) {
    case LevelKind::Dense:
    case LevelKind::Hashed: pos_[k] = insert_coord(lvl, parentPos, c[k]); break;
    case LevelKind::Compressed:
      open_parent(k, parentPos);
      pos_[k] = lvl.appended;
      append_coord(lvl, lvl.appended, c[k]);
      break;
    case LevelKind::Singleton:
      if (parentPos != lvl.appended) {
        throw AssemblyError("singleton level " + std::to_string(k) +
                            " needs exactly one child for every parent position");
      }
      pos_[k] = lvl.appended;
      append_coord(lvl, lvl.appended, c[k]);
      break;
    default: break;
    }
  }
  Index leaf = pos_[n_ - 1];
  if (static_cast<Index>(out_.vals.size()) <= leaf) out_.vals.resize(leaf + 1, 0.0);
  out_.vals[leaf] += value;
  std::copy(c, c + n_, last_.begin());
  hasLast_ = true;
}

Index OutputAssembler::level_size(int k) const {
  const LevelStorage &lvl = out_.levels[k];
  Index parentSize = k == 0 ? 1 : level_size(k - 1);
  switch (lvl.kind) {
  case LevelKind::Dense: return parentSize * lvl.N;
  case LevelKind::Hashed: return parentSize * lvl.W;
  default: return lvl.appended;
  }
}

void OutputAssembler::finish() {
  for (int k = 0; k < n_; ++k) {
    LevelStorage &lvl = out_.levels[k];
    if (lvl.kind == LevelKind::Compressed) {
      Index parentSize = k == 0 ? 1 : level_size(k - 1);
      if (parentSize > 0) {
        open_parent(k, parentSize - 1);
        append_edges(lvl, parentSize - 1, segBegin_[k], lvl.appended);
        openParent_[k] = parentSize;
      }
      lvl.pos.resize(parentSize + 1, lvl.appended);
      append_finalize(lvl, parentSize, lvl.appended);
    } else if (lvl.kind == LevelKind::Singleton) {
      append_finalize(lvl, k == 0 ? 1 : level_size(k - 1), lvl.appended);
    } else {
      insert_finalize(lvl, k == 0 ? 1 : level_size(k - 1), level_size(k));
    }
  }
  if (n_ > 0) out_.vals.resize(level_size(n_ - 1), 0.0);
}

ScatterOutput::ScatterOutput(TensorStorage &out) : out_(out) {
  Index parentSize = 1;
  for (LevelStorage &lvl : out_.levels) {
    if (!has_capability(lvl.kind, Capability::Insert)) {
      throw UnsupportedError("engine", "scatter output needs insert-capable levels, got " +
                                           std::string(to_string(lvl.kind)));
    }
    Index sz = size(lvl, parentSize);
    insert_init(lvl, parentSize, sz);
    parentSize = sz;
  }
  out_.vals.assign(parentSize, 0.0);
}

Index ScatterOutput::insert(const Index *c) {
  Index p = 0;
  for (std::size_t k = 0; k < out_.levels.size(); ++k)
    p = insert_coord(out_.levels[k], p, c[k]);
  return p;
}

void ScatterOutput::finish() {
  Index parentSize = 1;
  for (LevelStorage &lvl : out_.levels) {
    Index sz = size(lvl, parentSize);
    insert_finalize(lvl, parentSize, sz);
    parentSize = sz;
  }
}

} // namespace spl
