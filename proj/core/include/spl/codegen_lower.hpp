#ifndef SPL_CODEGEN_LOWER_HPP
#define SPL_CODEGEN_LOWER_HPP

#include <string>
#include <vector>

#include "spl/codegen_ir.hpp"
#include "spl/schedule.hpp"

namespace spl {

/// One parameter of a generated kernel. Input level arrays are passed as
/// flat arrays, scatter outputs as preallocated arrays, and gather outputs
/// as pointers the kernel fills with arrays it allocated.
struct KernelParam {
  enum Type { IndexArray, IndexScalar, ValueArray, OutIndexArray, OutValueArray, OutIndexScalar };
  std::string name;
  Type type = IndexScalar;
  std::string tensor; // empty for loop extents
  int level = -1;     // -1 for values and extents
  /// pos, crd, off, N, M, W, rangeN, vals, size, extent.
  std::string field;
  /// Loop variable for extents.
  std::string var;
  bool output = false;
};

struct Kernel {
  std::string name;
  Schedule::Mode mode = Schedule::Scatter;
  std::vector<KernelParam> params;
  /// Body with level function call sites; emit_c inlines them.
  ir::StmtList body;
};

/// Lowers a schedule to loop IR. Raises UnsupportedError("codegen") for
/// shapes without a static lowering, such as gather outputs with a dense
/// level below an appended one.
Kernel lower(const Schedule &schedule, const std::string &name = "kernel");

} // namespace spl

#endif
