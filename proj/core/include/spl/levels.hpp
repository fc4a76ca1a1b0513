#ifndef SPL_LEVELS_HPP
#define SPL_LEVELS_HPP

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spl/error.hpp"

namespace spl {

/// The six per-dimension level formats.
enum class LevelKind { Dense, Range, Compressed, Singleton, Offset, Hashed };

inline constexpr std::array<LevelKind, 6> kAllLevelKinds = {
    LevelKind::Dense,     LevelKind::Range,  LevelKind::Compressed,
    LevelKind::Singleton, LevelKind::Offset, LevelKind::Hashed};

std::string_view to_string(LevelKind kind);
std::optional<LevelKind> parse_level_kind(std::string_view name);

enum class Capability {
  ValueIteration,    // coord_bounds, coord_access
  PositionIteration, // pos_bounds, pos_access
  Locate,
  Insert, // size, insert_init, insert_coord, insert_finalize
  Append  // append_init, append_coord, append_edges, append_finalize
};

std::string_view to_string(Capability cap);
bool has_capability(LevelKind kind, Capability cap);

enum class Property { Full, Ordered, Unique, Branchless, Compact };

inline constexpr std::array<Property, 5> kAllProperties = {
    Property::Full, Property::Ordered, Property::Unique, Property::Branchless, Property::Compact};

std::string_view to_string(Property prop);

struct PropertySet {
  bool full = false;
  bool ordered = true;
  bool unique = true;
  bool branchless = false;
  bool compact = false;

  bool get(Property p) const;
  void set(Property p, bool value);
  friend bool operator==(const PropertySet &, const PropertySet &) = default;
};

/// Value a property is pinned to for `kind`, or nullopt when configurable.
std::optional<bool> fixed_property(LevelKind kind, Property prop);

/// Properties a level of `kind` gets when nothing is configured: ordered and
/// unique everywhere except hashed (unordered), not full unless fixed.
PropertySet default_properties(LevelKind kind);

/// A level kind together with its configured property set. The unit of
/// format composition.
struct LevelFormat {
  LevelKind kind = LevelKind::Dense;
  PropertySet props;

  bool has(Capability cap) const { return has_capability(kind, cap); }
  bool iterable_by_value() const { return has(Capability::ValueIteration); }
  bool iterable_by_position() const { return has(Capability::PositionIteration); }
  bool locatable() const { return has(Capability::Locate); }

  std::string str() const;
  friend bool operator==(const LevelFormat &, const LevelFormat &) = default;
};

/// Builds a level format, applying `overrides` on top of the kind's defaults.
/// Throws FormatError when an override contradicts a fixed property.
LevelFormat make_level(LevelKind kind,
                       std::initializer_list<std::pair<Property, bool>> overrides = {});
LevelFormat make_level(LevelKind kind, std::span<const std::pair<Property, bool>> overrides);

LevelFormat dense(std::initializer_list<std::pair<Property, bool>> o = {});
LevelFormat range(std::initializer_list<std::pair<Property, bool>> o = {});
LevelFormat compressed(std::initializer_list<std::pair<Property, bool>> o = {});
LevelFormat singleton(std::initializer_list<std::pair<Property, bool>> o = {});
LevelFormat offset(std::initializer_list<std::pair<Property, bool>> o = {});
LevelFormat hashed(std::initializer_list<std::pair<Property, bool>> o = {});

/// Sentinel marking an empty hashed bucket.
inline constexpr Index kEmptyBucket = -1;

/// Physical storage of one coordinate hierarchy level.
///
/// Which fields are meaningful depends on the kind:
///   Dense      N
///   Range      N (rows), M (columns), offset (shared with the Offset level)
///   Compressed pos, crd
///   Singleton  crd
///   Offset     offset, rangeN (size of the enclosing Range level)
///   Hashed     W, crd
///
/// `crd` may be shared between levels (array-of-structs COO); element `p` of
/// this level lives at `crd[p * crdStride + crdBase]`.
struct LevelStorage {
  LevelKind kind = LevelKind::Dense;
  Index N = 0;
  Index M = 0;
  Index W = 0;
  Index rangeN = 0;
  std::vector<Index> pos;
  std::shared_ptr<std::vector<Index>> crd = std::make_shared<std::vector<Index>>();
  Index crdStride = 1;
  Index crdBase = 0;
  std::shared_ptr<std::vector<Index>> offset;

  /// Number of coordinates appended so far (append-capable levels).
  Index appended = 0;
  /// Parent position passed to the latest append_edges call.
  Index lastEdgeParent = -1;

  Index crd_at(Index p) const { return (*crd)[p * crdStride + crdBase]; }
  Index &crd_at(Index p) { return (*crd)[p * crdStride + crdBase]; }
};

LevelStorage make_dense_level(Index n);
LevelStorage make_compressed_level();
LevelStorage make_singleton_level();
LevelStorage make_hashed_level(Index w);
LevelStorage make_range_level(Index rows, Index cols, std::shared_ptr<std::vector<Index>> offsets);
LevelStorage make_offset_level(Index rows, std::shared_ptr<std::vector<Index>> offsets);

/// Result of the access functions: a position or coordinate plus found flag.
struct Found {
  Index value = 0;
  bool found = false;
  friend bool operator==(const Found &, const Found &) = default;
};

struct Bounds {
  Index begin = 0;
  Index end = 0;
  friend bool operator==(const Bounds &, const Bounds &) = default;
};

// Access capabilities. `coords` carries the ancestor coordinates i1..i(k-1)
// and, for coord_access and locate, the coordinate i_k as its last element.

Bounds coord_bounds(const LevelStorage &level, std::span<const Index> prefix);
Found coord_access(const LevelStorage &level, Index parentPos, std::span<const Index> coords);
Bounds pos_bounds(const LevelStorage &level, Index parentPos);
Found pos_access(const LevelStorage &level, Index pos, std::span<const Index> prefix);
Found locate(const LevelStorage &level, Index parentPos, std::span<const Index> coords);

// Insert capability.

Index size(const LevelStorage &level, Index parentSize);
void insert_init(LevelStorage &level, Index parentSize, Index size);
/// Inserts `coord` under `parentPos` and returns its position. Dense levels
/// compute it arithmetically; hashed levels probe linearly from the home slot
/// `coord mod W` and reuse a slot already holding `coord`.
Index insert_coord(LevelStorage &level, Index parentPos, Index coord);
void insert_finalize(LevelStorage &level, Index parentSize, Index size);

// Append capability. Coordinates must arrive in order and append_edges must
// be called once per parent position, in ascending order.

void append_init(LevelStorage &level, Index parentSize, Index size);
void append_coord(LevelStorage &level, Index pos, Index coord);
void append_edges(LevelStorage &level, Index parentPos, Index pbegin, Index pend);
void append_finalize(LevelStorage &level, Index parentSize, Index size);

/// Home slot of `coord` within a hashed segment of width `w`.
inline Index hash_slot(Index coord, Index w) { return coord % w; }

/// Smallest power of two that is at least 2 * max(1, expected).
Index default_hash_width(Index expectedPerParent);

} // namespace spl

#endif
