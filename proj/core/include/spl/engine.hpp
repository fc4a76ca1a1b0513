#ifndef SPL_ENGINE_HPP
#define SPL_ENGINE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spl/formats.hpp"
#include "spl/schedule.hpp"

namespace spl {

/// A set of positions in one level: either the arithmetic progression
/// first, first + stride, ... or, when `list` is set, the slice
/// list[first .. first + count).
struct Group {
  Index first = 0;
  Index count = 0;
  Index stride = 1;
  const std::vector<Index> *list = nullptr;

  Index size() const { return count; }
  Index at(Index k) const { return list ? (*list)[first + k] : first + k * stride; }
};

/// Walks the coordinates a level stores under a group of parent positions,
/// yielding each distinct coordinate with the group of positions holding it.
///
/// Position-iterable levels under a single parent walk pos_bounds directly.
/// Under a contiguous group an ordered level chains the segments from the
/// first parent's begin to the last parent's end; anything else is copied to
/// a scratch array and stably sorted by coordinate. Runs of equal adjacent
/// coordinates form one group unless `raw` is set.
class LevelIterator {
public:
  struct Options {
    bool raw = false;
    bool sort = false;
    /// The level keeps coordinates ordered within and across segments.
    bool ordered = true;
  };

  LevelIterator() = default;
  LevelIterator(const LevelStorage &level, Group parents, std::span<const Index> prefix,
                Options options) {
    reset(level, parents, prefix, options);
  }
  LevelIterator(const LevelStorage &level, Group parents, std::span<const Index> prefix)
      : LevelIterator(level, parents, prefix, Options{}) {}
  /// Iterates 0 .. extent-1 with no storage behind it.
  static LevelIterator counter(Index extent);

  /// Restarts the iterator, reusing its scratch memory.
  void reset(const LevelStorage &level, Group parents, std::span<const Index> prefix,
             Options options);
  void reset_counter(Index extent);

  bool valid() const { return valid_; }
  Index coord() const { return coord_; }
  const Group &group() const { return group_; }
  void advance();
  /// Skips every coordinate <= c.
  void skip_through(Index c) {
    while (valid_ && coord_ <= c)
      advance();
  }

private:
  enum Mode { Counter, Value, Positions, Sorted };

  void load_value();
  void load_positions();
  void load_sorted();

  Mode mode_ = Counter;
  const LevelStorage *level_ = nullptr;
  Group parents_;
  std::vector<Index> coords_; // prefix plus the current coordinate
  bool raw_ = false;
  Index cur_ = 0;
  Index end_ = 0;
  bool valid_ = false;
  Index coord_ = 0;
  Index next_ = 0;
  Group group_;
  std::vector<Index> scratch_;
  std::vector<std::pair<Index, Index>> sorted_;
};

/// Positions of `coord` under each parent in `parents`, as found by locate.
/// Empty when no parent holds it. `buffer` backs the result when it is not
/// an arithmetic progression.
Group locate_group(const LevelStorage &level, const Group &parents, std::span<const Index> coords,
                   std::vector<Index> &buffer);

/// Sum of `vals` over the positions of a group; duplicates of a bottom
/// level collapse to one value this way.
double group_value(const std::vector<double> &vals, const Group &g);

/// Merges ordered iterators, calling `visit(coord, presentMask)` for every
/// candidate coordinate while the iterators in `terminating` (a bit mask
/// over `its`; 0 means all) are in bounds. Returns the number of visits.
std::int64_t coiterate(std::span<LevelIterator> its, std::uint64_t terminating,
                       const std::function<void(Index, std::uint64_t)> &visit);

struct EvalStats {
  /// Iterations of co-iteration loops, summed over every loop node.
  std::int64_t visits = 0;
  /// Iterations of the loops of the outermost variable only.
  std::int64_t rootVisits = 0;
  std::int64_t locates = 0;
};

using StorageBindings = std::map<std::string, const TensorStorage *>;

/// Runs a schedule over bound operand storage and returns the output.
TensorStorage evaluate(const Schedule &schedule, const StorageBindings &inputs,
                       EvalStats *stats = nullptr);

/// Builds the schedule for `expr` from the operands' formats and runs it.
Schedule plan(std::string_view expr, const StorageBindings &inputs, const TensorFormat &outFormat,
              ScheduleOptions options = {});
TensorStorage evaluate(std::string_view expr, const StorageBindings &inputs,
                       const TensorFormat &outFormat, ScheduleOptions options = {},
                       EvalStats *stats = nullptr);

} // namespace spl

#endif
