#include "spl/levels.hpp"

#include <algorithm>

namespace spl {

std::string_view to_string(LevelKind kind) {
  switch (kind) {
  case LevelKind::Dense: return "dense";
  case LevelKind::Range: return "range";
  case LevelKind::Compressed: return "compressed";
  case LevelKind::Singleton: return "singleton";
  case LevelKind::Offset: return "offset";
  case LevelKind::Hashed: return "hashed";
  }
  return "?";
}

std::optional<LevelKind> parse_level_kind(std::string_view name) {
  for (LevelKind k : kAllLevelKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Capability cap) {
  switch (cap) {
  case Capability::ValueIteration: return "coordinate value iteration";
  case Capability::PositionIteration: return "coordinate position iteration";
  case Capability::Locate: return "locate";
  case Capability::Insert: return "insert";
  case Capability::Append: return "append";
  }
  return "?";
}

bool has_capability(LevelKind kind, Capability cap) {
  switch (kind) {
  case LevelKind::Dense:
    return cap == Capability::ValueIteration || cap == Capability::Locate ||
           cap == Capability::Insert;
  case LevelKind::Range: return cap == Capability::ValueIteration;
  case LevelKind::Compressed:
  case LevelKind::Singleton:
    return cap == Capability::PositionIteration || cap == Capability::Append;
  case LevelKind::Offset: return cap == Capability::PositionIteration;
  case LevelKind::Hashed:
    return cap == Capability::PositionIteration || cap == Capability::Locate ||
           cap == Capability::Insert;
  }
  return false;
}

std::string_view to_string(Property prop) {
  switch (prop) {
  case Property::Full: return "full";
  case Property::Ordered: return "ordered";
  case Property::Unique: return "unique";
  case Property::Branchless: return "branchless";
  case Property::Compact: return "compact";
  }
  return "?";
}

bool PropertySet::get(Property p) const {
  switch (p) {
  case Property::Full: return full;
  case Property::Ordered: return ordered;
  case Property::Unique: return unique;
  case Property::Branchless: return branchless;
  case Property::Compact: return compact;
  }
  return false;
}

void PropertySet::set(Property p, bool value) {
  switch (p) {
  case Property::Full: full = value; break;
  case Property::Ordered: ordered = value; break;
  case Property::Unique: unique = value; break;
  case Property::Branchless: branchless = value; break;
  case Property::Compact: compact = value; break;
  }
}

std::optional<bool> fixed_property(LevelKind kind, Property prop) {
  switch (kind) {
  case LevelKind::Dense:
    if (prop == Property::Full || prop == Property::Compact) return true;
    if (prop == Property::Branchless) return false;
    return std::nullopt;
  case LevelKind::Range:
    if (prop == Property::Full || prop == Property::Branchless || prop == Property::Compact)
      return false;
    return std::nullopt;
  case LevelKind::Compressed:
    if (prop == Property::Compact) return true;
    if (prop == Property::Branchless) return false;
    return std::nullopt;
  case LevelKind::Singleton:
    if (prop == Property::Branchless || prop == Property::Compact) return true;
    return std::nullopt;
  case LevelKind::Offset:
    if (prop == Property::Branchless) return true;
    if (prop == Property::Full || prop == Property::Compact) return false;
    return std::nullopt;
  case LevelKind::Hashed:
    if (prop == Property::Ordered || prop == Property::Branchless || prop == Property::Compact)
      return false;
    return std::nullopt;
  }
  return std::nullopt;
}

PropertySet default_properties(LevelKind kind) {
  PropertySet props;
  props.full = false;
  props.ordered = true;
  props.unique = true;
  props.branchless = false;
  props.compact = false;
  for (Property p : kAllProperties) {
    if (auto fixed = fixed_property(kind, p)) props.set(p, *fixed);
  }
  return props;
}

std::string LevelFormat::str() const {
  std::string out(to_string(kind));
  std::string flags;
  PropertySet defaults = default_properties(kind);
  for (Property p : kAllProperties) {
    if (fixed_property(kind, p)) continue;
    if (props.get(p) == defaults.get(p)) continue;
    if (!flags.empty()) flags += ",";
    if (!props.get(p)) flags += "~";
    flags += to_string(p).substr(0, 1);
  }
  if (!flags.empty()) out += "(" + flags + ")";
  return out;
}

LevelFormat make_level(LevelKind kind, std::span<const std::pair<Property, bool>> overrides) {
  LevelFormat fmt{kind, default_properties(kind)};
  for (const auto &[prop, value] : overrides) {
    auto fixed = fixed_property(kind, prop);
    if (fixed && *fixed != value) {
      throw FormatError(std::string(to_string(kind)) + " levels are " +
                        (*fixed ? "always " : "never ") + std::string(to_string(prop)));
    }
    fmt.props.set(prop, value);
  }
  return fmt;
}

LevelFormat make_level(LevelKind kind, std::initializer_list<std::pair<Property, bool>> overrides) {
  return make_level(
      kind, std::span<const std::pair<Property, bool>>(overrides.begin(), overrides.size()));
}

LevelFormat dense(std::initializer_list<std::pair<Property, bool>> o) {
  return make_level(LevelKind::Dense, o);
}
LevelFormat range(std::initializer_list<std::pair<Property, bool>> o) {
  return make_level(LevelKind::Range, o);
}
LevelFormat compressed(std::initializer_list<std::pair<Property, bool>> o) {
  return make_level(LevelKind::Compressed, o);
}
LevelFormat singleton(std::initializer_list<std::pair<Property, bool>> o) {
  return make_level(LevelKind::Singleton, o);
}
LevelFormat offset(std::initializer_list<std::pair<Property, bool>> o) {
  return make_level(LevelKind::Offset, o);
}
LevelFormat hashed(std::initializer_list<std::pair<Property, bool>> o) {
  return make_level(LevelKind::Hashed, o);
}

LevelStorage make_dense_level(Index n) {
  LevelStorage s;
  s.kind = LevelKind::Dense;
  s.N = n;
  return s;
}

LevelStorage make_compressed_level() {
  LevelStorage s;
  s.kind = LevelKind::Compressed;
  return s;
}

LevelStorage make_singleton_level() {
  LevelStorage s;
  s.kind = LevelKind::Singleton;
  return s;
}

LevelStorage make_hashed_level(Index w) {
  if (w <= 0) throw FormatError("hashed segment width must be positive");
  LevelStorage s;
  s.kind = LevelKind::Hashed;
  s.W = w;
  return s;
}

LevelStorage make_range_level(Index rows, Index cols, std::shared_ptr<std::vector<Index>> offsets) {
  LevelStorage s;
  s.kind = LevelKind::Range;
  s.N = rows;
  s.M = cols;
  s.offset = std::move(offsets);
  return s;
}

LevelStorage make_offset_level(Index rows, std::shared_ptr<std::vector<Index>> offsets) {
  LevelStorage s;
  s.kind = LevelKind::Offset;
  s.rangeN = rows;
  s.offset = std::move(offsets);
  return s;
}

namespace {

void require(const LevelStorage &level, Capability cap, std::string_view fn) {
  if (!has_capability(level.kind, cap)) {
    throw CapabilityError(std::string(fn) + " is not defined for " +
                          std::string(to_string(level.kind)) + " levels (no " +
                          std::string(to_string(cap)) + " capability)");
  }
}

Index last_of(std::span<const Index> coords, std::string_view fn) {
  if (coords.empty()) throw CapabilityError(std::string(fn) + " needs a coordinate prefix");
  return coords.back();
}

} // namespace

Bounds coord_bounds(const LevelStorage &level, std::span<const Index> prefix) {
  require(level, Capability::ValueIteration, "coord_bounds");
  if (level.kind == LevelKind::Dense) return {0, level.N};
  Index off = (*level.offset)[last_of(prefix, "coord_bounds")];
  return {std::max<Index>(0, -off), std::min(level.N, level.M - off)};
}

Found coord_access(const LevelStorage &level, Index parentPos, std::span<const Index> coords) {
  require(level, Capability::ValueIteration, "coord_access");
  return {parentPos * level.N + last_of(coords, "coord_access"), true};
}

Bounds pos_bounds(const LevelStorage &level, Index parentPos) {
  require(level, Capability::PositionIteration, "pos_bounds");
  switch (level.kind) {
  case LevelKind::Compressed: return {level.pos[parentPos], level.pos[parentPos + 1]};
  case LevelKind::Hashed: return {parentPos * level.W, (parentPos + 1) * level.W};
  default: return {parentPos, parentPos + 1};
  }
}

Found pos_access(const LevelStorage &level, Index pos, std::span<const Index> prefix) {
  require(level, Capability::PositionIteration, "pos_access");
  switch (level.kind) {
  case LevelKind::Hashed: {
    Index c = level.crd_at(pos);
    return {c, c != kEmptyBucket};
  }
  case LevelKind::Offset: {
    Index diag = pos / level.rangeN;
    return {last_of(prefix, "pos_access") + (*level.offset)[diag], true};
  }
  default: return {level.crd_at(pos), true};
  }
}

Found locate(const LevelStorage &level, Index parentPos, std::span<const Index> coords) {
  require(level, Capability::Locate, "locate");
  Index c = last_of(coords, "locate");
  if (level.kind == LevelKind::Dense) return {parentPos * level.N + c, true};
  Index base = parentPos * level.W;
  Index home = hash_slot(c, level.W);
  for (Index probe = 0; probe < level.W; ++probe) {
    Index slot = base + (home + probe) % level.W;
    Index held = level.crd_at(slot);
    if (held == c) return {slot, true};
    if (held == kEmptyBucket) break;
  }
  return {-1, false};
}

Index size(const LevelStorage &level, Index parentSize) {
  require(level, Capability::Insert, "size");
  return level.kind == LevelKind::Dense ? parentSize * level.N : parentSize * level.W;
}

void insert_init(LevelStorage &level, Index /*parentSize*/, Index size) {
  require(level, Capability::Insert, "insert_init");
  if (level.kind == LevelKind::Hashed) {
    level.crdStride = 1;
    level.crdBase = 0;
    level.crd->assign(static_cast<std::size_t>(size), kEmptyBucket);
  }
}

Index insert_coord(LevelStorage &level, Index parentPos, Index coord) {
  require(level, Capability::Insert, "insert_coord");
  if (level.kind == LevelKind::Dense) return parentPos * level.N + coord;
  Index base = parentPos * level.W;
  Index home = hash_slot(coord, level.W);
  for (Index probe = 0; probe < level.W; ++probe) {
    Index slot = base + (home + probe) % level.W;
    Index &held = level.crd_at(slot);
    if (held == coord) return slot;
    if (held == kEmptyBucket) {
      held = coord;
      return slot;
    }
  }
  throw AssemblyError("hashed segment " + std::to_string(parentPos) + " is full (W=" +
                      std::to_string(level.W) + "); choose a larger segment width");
}

void insert_finalize(LevelStorage &level, Index, Index) {
  require(level, Capability::Insert, "insert_finalize");
}

void append_init(LevelStorage &level, Index parentSize, Index) {
  require(level, Capability::Append, "append_init");
  level.appended = 0;
  level.lastEdgeParent = -1;
  if (level.kind == LevelKind::Compressed) {
    level.pos.assign(static_cast<std::size_t>(std::max<Index>(parentSize, 0) + 1), 0);
  }
}

void append_coord(LevelStorage &level, Index pos, Index coord) {
  require(level, Capability::Append, "append_coord");
  if (pos != level.appended) {
    throw AssemblyError("append_coord at position " + std::to_string(pos) +
                        " but next free position is " + std::to_string(level.appended));
  }
  auto &crd = *level.crd;
  std::size_t need = static_cast<std::size_t>(pos * level.crdStride + level.crdBase + 1);
  if (crd.size() < need) crd.resize(need, 0);
  level.crd_at(pos) = coord;
  ++level.appended;
}

void append_edges(LevelStorage &level, Index parentPos, Index pbegin, Index pend) {
  require(level, Capability::Append, "append_edges");
  if (parentPos <= level.lastEdgeParent) {
    throw AssemblyError("append_edges for parent " + std::to_string(parentPos) + " after parent " +
                        std::to_string(level.lastEdgeParent));
  }
  if (level.kind == LevelKind::Compressed) {
    if (parentPos != level.lastEdgeParent + 1) {
      throw AssemblyError("append_edges skipped parent " +
                          std::to_string(level.lastEdgeParent + 1));
    }
    if (pbegin != level.pos[static_cast<std::size_t>(parentPos)] || pend < pbegin) {
      throw AssemblyError("append_edges segment [" + std::to_string(pbegin) + ", " +
                          std::to_string(pend) + ") does not continue the previous one");
    }
    if (level.pos.size() < static_cast<std::size_t>(parentPos + 2)) {
      level.pos.resize(static_cast<std::size_t>(parentPos + 2), pend);
    }
    level.pos[static_cast<std::size_t>(parentPos + 1)] = pend;
  }
  level.lastEdgeParent = parentPos;
}

void append_finalize(LevelStorage &level, Index, Index) {
  require(level, Capability::Append, "append_finalize");
}

Index default_hash_width(Index expectedPerParent) {
  Index target = 2 * std::max<Index>(1, expectedPerParent);
  Index w = 1;
  while (w < target)
    w <<= 1;
  return w;
}

} // namespace spl
