#ifndef SPL_IO_HPP
#define SPL_IO_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spl/formats.hpp"
#include "spl/notation.hpp"

namespace spl {

/// Coordinates plus the declared dimension sizes.
struct TensorData {
  CoordList data;
  std::vector<Index> dims;
};

/// Reads `%%MatrixMarket matrix coordinate {real|integer|pattern} general`.
/// Entries keep file order; duplicates are preserved.
TensorData read_mtx(std::istream &in);
TensorData read_mtx(const std::string &path);
void write_mtx(std::ostream &out, const CoordList &data, const std::vector<Index> &dims);
void write_mtx(const std::string &path, const CoordList &data, const std::vector<Index> &dims);

/// FROSTT text: one entry per line, 1-based coordinates then the value;
/// `#` starts a comment. Dimensions are the per-mode maxima unless given.
TensorData read_tns(std::istream &in, const std::optional<std::vector<Index>> &dims = {});
TensorData read_tns(const std::string &path, const std::optional<std::vector<Index>> &dims = {});
void write_tns(std::ostream &out, const CoordList &data);
void write_tns(const std::string &path, const CoordList &data);

/// Sizes from `<path>.dims` (whitespace-separated), if that file exists.
std::optional<std::vector<Index>> read_dims_sidecar(const std::string &path);

/// Picks the reader by extension (.mtx or .tns). A .tns file takes its
/// dimensions from the sidecar when present; writing one records a sidecar
/// whenever the dimensions exceed the coordinate maxima.
TensorData read_tensor(const std::string &path);
void write_tensor(const std::string &path, const CoordList &data, const std::vector<Index> &dims);

/// Row-major dense tensor.
struct DenseTensor {
  std::vector<Index> dims;
  std::vector<double> vals;

  DenseTensor() : vals(1, 0.0) {}
  explicit DenseTensor(std::vector<Index> d);
  static DenseTensor from_coords(const CoordList &data, const std::vector<Index> &dims);

  Index offset(const Index *idx) const;
  double &at(const Index *idx) { return vals[offset(idx)]; }
  double at(const Index *idx) const { return vals[offset(idx)]; }
  /// Every nonzero in row-major order.
  CoordList to_coords() const;
};

/// Brute-force evaluation: loops over the full extent of every index
/// variable and accumulates the right-hand side into the output.
DenseTensor oracle_eval(const CheckedAssignment &expr,
                        const std::map<std::string, DenseTensor> &inputs);
DenseTensor oracle_eval(const std::string &expr, const std::map<std::string, DenseTensor> &inputs);

struct SynthSpec {
  enum Kind {
    Banded,     // `param` diagonals centred on the main one, fully filled
    Random,     // every component present with probability `param`
    Hypersparse // a `param` fraction of the mode-0 slices hold 1-3 entries
  };
  Kind kind = Random;
  double param = 0.1;
};

/// Parses `banded:5`, `random:0.25` or `hypersparse:0.01`.
SynthSpec parse_synth(const std::string &text);

/// Deterministic under `seed`; values are drawn from [0.5, 1.5).
CoordList synth(const SynthSpec &spec, const std::vector<Index> &dims, std::uint64_t seed);

} // namespace spl

#endif
