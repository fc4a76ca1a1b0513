#ifndef SPL_BENCH_HPP
#define SPL_BENCH_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spl/formats.hpp"

namespace spl {

/// Wall-clock samples of one timed leg, in seconds.
struct Timing {
  std::vector<double> samples;

  double median() const;
  double min() const;
  double mean() const;
  double stddev() const;
};

/// Runs `fn` `reps` times after one untimed warm-up. Before every run a
/// scratch buffer larger than the last-level cache is rewritten so inputs
/// start out of cache; this approximates flushing the cache.
Timing time_leg(int reps, const std::function<void()> &fn);

enum class BenchMode { Interp, Codegen };

struct BenchOptions {
  std::string scenario;
  /// Matrix file; when absent the matrix is synthesized.
  std::optional<std::string> input;
  std::string synth = "banded:5";
  /// Synthetic matrix dimensions; empty picks the scenario's default
  /// (250000x250000, or 10000x10000 for vector-formats).
  std::vector<Index> dims;
  int reps = 5;
  std::uint64_t seed = 1;
  BenchMode mode = BenchMode::Interp;
};

struct BenchRow {
  std::string matrix;
  std::string leg;
  Timing timing;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  /// Derived quantities and qualitative checks, as key/value lines.
  std::vector<std::pair<std::string, std::string>> notes;
};

const std::vector<std::string> &bench_scenarios();

/// Scenarios:
///   coo-vs-csr-spmv  COO SpMV, COO to CSR conversion, CSR SpMV and the
///                    number of SpMVs after which converting pays off.
///   dia-vs-csr-spmv  CSR SpMV against DIA SpMV.
///   vector-formats   CSR SpMV with a dense, sparse or hashed input vector
///                    over a grid of matrix and vector densities.
BenchReport run_bench(const BenchOptions &options);

/// Smallest number of SpMVs for which convert + n * faster < n * slower, or
/// nullopt when the converted format is not faster per SpMV.
std::optional<std::int64_t> break_even(double convert, double slower, double faster);

/// Tab-separated: a header, one row per leg, then `# key<TAB>value` notes.
void write_tsv(std::ostream &out, const BenchReport &report);

} // namespace spl

#endif
