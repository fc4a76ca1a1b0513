#ifndef SPL_FORMATS_HPP
#define SPL_FORMATS_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spl/levels.hpp"

namespace spl {

/// How a storage level's coordinate relates to the tensor's logical modes.
struct LevelMap {
  enum Kind {
    Whole,      // coordinate is logical mode `dim`
    BlockOuter, // coordinate is mode `dim` divided by `block`
    BlockInner, // coordinate is mode `dim` modulo `block`
    Synthetic   // structural coordinate (DIA diagonal, ELL slot)
  };
  Kind kind = Whole;
  int dim = 0;
  Index block = 1;

  friend bool operator==(const LevelMap &, const LevelMap &) = default;
};

struct FormatLevel {
  LevelFormat fmt;
  LevelMap map;
  /// Hashed segment width; 0 picks one from the data at assembly time.
  Index width = 0;

  friend bool operator==(const FormatLevel &, const FormatLevel &) = default;
};

/// Special storage layouts that are assembled directly rather than through
/// the insert/append protocol.
enum class Layout { Generic, Diagonal, Ellpack };

struct TensorFormat {
  std::string name;
  int order = 0;
  /// modeOrdering[k] is the logical mode stored at the k-th whole level.
  std::vector<int> modeOrdering;
  std::vector<FormatLevel> levels;
  Layout layout = Layout::Generic;
  /// Coordinates of a COO format share one interleaved array.
  bool arrayOfStructs = false;

  bool has_synthetic_levels() const;
  /// Preset name when there is one, else the composition string.
  std::string str() const;
  /// Composition string form: `{dense,compressed}` plus `@(..)` when the
  /// mode ordering is not the identity.
  std::string composition() const;

  friend bool operator==(const TensorFormat &a, const TensorFormat &b) {
    return a.order == b.order && a.modeOrdering == b.modeOrdering && a.levels == b.levels &&
           a.layout == b.layout && a.arrayOfStructs == b.arrayOfStructs;
  }
};

struct PresetParams {
  /// Order for the `dense` preset; ignored by presets of fixed order.
  int order = 1;
  /// Block size for BCSR, CSB and mode-generic.
  Index block = 2;
};

const std::vector<std::string> &preset_names();
TensorFormat preset(std::string_view name, PresetParams params = {});

/// Parses a preset name (case-insensitive, optional `:block` suffix, e.g.
/// `bcsr:4`, or `dense:3` for a third-order dense tensor) or a composition
/// such as `{compressed(~u),singleton}@(1,0)`.
TensorFormat parse_format(std::string_view text);

/// Composes a format with one whole level per mode; `modeOrdering` defaults to
/// the identity.
TensorFormat compose(std::vector<LevelFormat> levels, std::vector<int> modeOrdering = {});

/// Coordinate list in row-major flat layout.
struct CoordList {
  int order = 0;
  std::vector<Index> coords;
  std::vector<double> vals;
  bool canonical = false;

  CoordList() = default;
  explicit CoordList(int ord) : order(ord) {}

  std::size_t size() const { return vals.size(); }
  bool empty() const { return vals.empty(); }
  const Index *coord(std::size_t e) const { return coords.data() + e * order; }
  void push(std::initializer_list<Index> c, double v);
  void push(const Index *c, double v);
  void reserve(std::size_t n);
};

/// Sorts lexicographically and sums duplicate coordinates.
CoordList canonicalize(CoordList list);
/// Canonical form without explicitly stored zeros. Dense and padded layouts
/// enumerate zeros, so this is the form used to compare tensors.
CoordList canonical_nonzeros(CoordList list);
/// True when both canonical nonzero lists match coordinate for coordinate and
/// every value agrees within `relTol` relative (absolute for tiny magnitudes).
bool approx_equal(const CoordList &a, const CoordList &b, double relTol = 1e-12,
                  std::string *why = nullptr);

struct TensorStorage {
  TensorFormat format;
  std::vector<Index> dims;
  std::vector<LevelStorage> levels;
  std::vector<double> vals;
};

/// Builds storage for `data`. Formats with a non-unique level keep duplicate
/// coordinates as separate entries; all others sum them.
TensorStorage assemble(const TensorFormat &format, const std::vector<Index> &dims,
                       const CoordList &data);

/// All root-to-leaf paths with found=true at every level, in storage order.
CoordList enumerate(const TensorStorage &storage);

/// Re-encodes `src` in `dst`. Runs an identity assignment through the engine
/// when it can be scheduled and falls back to enumerate + assemble otherwise.
TensorStorage convert(const TensorStorage &src, const TensorFormat &dst);

/// Validates the dimension sizes against the format (block divisibility).
void check_dims(const TensorFormat &format, const std::vector<Index> &dims);

/// Extent of a level's coordinate space for given logical dims; synthetic
/// levels return -1 (their extent is data dependent).
Index level_extent(const FormatLevel &level, const std::vector<Index> &dims);

/// Maps logical coordinates to per-level coordinates (synthetic levels get 0).
void to_level_coords(const TensorFormat &format, const Index *logical, Index *out);

} // namespace spl

#endif
