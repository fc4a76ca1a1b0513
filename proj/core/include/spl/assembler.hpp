#ifndef SPL_ASSEMBLER_HPP
#define SPL_ASSEMBLER_HPP

#include <vector>

#include "spl/formats.hpp"

namespace spl {

/// Empty storage for `format` with level sizes taken from `dims`. Hashed
/// levels use their configured width, else `defaultWidth` (or the smallest
/// power of two covering the level extent when that is 0).
TensorStorage make_storage(const TensorFormat &format, const std::vector<Index> &dims,
                           Index defaultWidth = 0);

/// Streams entries, given as per-level coordinates in lexicographic order,
/// into storage through the insert and append level functions.
///
/// A new entry gets fresh positions from the first level where its
/// coordinates differ from the previous entry's. Branchless levels need a
/// fresh parent for every child, so the divergence point moves up past them.
/// Compressed segments are closed with append_edges once per parent position,
/// in ascending order, including empty parents.
class OutputAssembler {
public:
  /// `keepDuplicates` stores repeated coordinates as separate entries under
  /// the deepest non-unique level; otherwise their values are summed.
  OutputAssembler(TensorStorage &out, bool keepDuplicates = false);

  void emit(const Index *levelCoords, double value);
  void finish();

private:
  void open_parent(int k, Index parentPos);
  Index level_size(int k) const;

  TensorStorage &out_;
  bool keepDuplicates_;
  int n_;
  int deepestNonUnique_ = -1;
  bool hasLast_ = false;
  std::vector<Index> last_;
  std::vector<Index> pos_;
  std::vector<Index> openParent_;
  std::vector<Index> segBegin_;
  std::vector<Index> knownSize_; // -1 where the size depends on appends
};

/// Scatter-accumulates into storage whose levels all support insert.
class ScatterOutput {
public:
  explicit ScatterOutput(TensorStorage &out);

  /// Position of the leaf for `levelCoords`, inserting it if needed.
  Index insert(const Index *levelCoords);
  void add(const Index *levelCoords, double value) { out_.vals[insert(levelCoords)] += value; }
  void finish();

private:
  TensorStorage &out_;
};

} // namespace spl

#endif
