// Shared helpers for the unit tests.
#ifndef SPL_TESTS_COMMON_HPP
#define SPL_TESTS_COMMON_HPP

#include <map>
#include <random>
#include <string>
#include <vector>

#include "spl/assembler.hpp"
#include "spl/engine.hpp"
#include "spl/formats.hpp"
#include "spl/io.hpp"

namespace spl::test {

inline std::string fixture(const std::string &name) {
  return std::string(SPL_FIXTURE_DIR) + "/" + name;
}

/// The 4x6 example matrix of tests/fixtures/example_4x6.mtx.
inline CoordList example_matrix() {
  CoordList c(2);
  c.push({0, 0}, 5);
  c.push({0, 1}, 1);
  c.push({1, 0}, 7);
  c.push({1, 1}, 3);
  c.push({2, 0}, 8);
  c.push({3, 2}, 4);
  c.push({3, 4}, 9);
  return c;
}

/// Random tensor; every `dupEvery`-th entry is split into two duplicates
/// (0 disables this).
inline CoordList random_coords(const std::vector<Index> &dims, double density, std::uint64_t seed,
                               int dupEvery = 0) {
  CoordList base = synth({SynthSpec::Random, density}, dims, seed);
  if (!dupEvery) return base;
  CoordList out(base.order);
  for (std::size_t e = 0; e < base.size(); ++e) {
    if (e % dupEvery == 0) {
      out.push(base.coord(e), base.vals[e] * 0.25);
      out.push(base.coord(e), base.vals[e] * 0.75);
    } else {
      out.push(base.coord(e), base.vals[e]);
    }
  }
  return out;
}

/// Operands in storage and as dense arrays, for engine vs oracle checks.
struct Operands {
  std::map<std::string, TensorStorage> storage;
  std::map<std::string, DenseTensor> dense;

  void add(const std::string &name, const std::string &format, const std::vector<Index> &dims,
           const CoordList &data) {
    storage[name] = assemble(parse_format(format), dims, data);
    dense[name] = DenseTensor::from_coords(data, dims);
  }

  StorageBindings bindings() const {
    StorageBindings b;
    for (const auto &[n, s] : storage)
      b[n] = &s;
    return b;
  }
};

/// Evaluates `expr` and compares with the dense oracle; returns the mismatch
/// description, empty on agreement.
inline std::string check_against_oracle(const std::string &expr, const Operands &ops,
                                        const std::string &outFormat, ScheduleOptions opt = {}) {
  TensorStorage out = evaluate(expr, ops.bindings(), parse_format(outFormat), opt);
  DenseTensor ref = oracle_eval(expr, ops.dense);
  std::string why;
  if (approx_equal(enumerate(out), ref.to_coords(), 1e-12, &why)) return "";
  return why.empty() ? "mismatch" : why;
}

} // namespace spl::test

#endif
