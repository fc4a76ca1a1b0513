#ifndef SPL_CODEGEN_EMIT_HPP
#define SPL_CODEGEN_EMIT_HPP

#include <string>

#include "spl/codegen_lower.hpp"

namespace spl {

struct EmitOptions {
  /// C type of positions and coordinates. Narrower types reduce memory
  /// traffic; 32 bits holds any tensor with fewer than 2^31 nonzeros.
  std::string indexType = "int32_t";
};

/// Index width in bytes implied by `EmitOptions::indexType`.
int index_bytes(const EmitOptions &options);

/// Self-contained C99 source: helper functions, the kernel
/// `int <name>(params...)` returning nonzero when a hashed output segment
/// overflowed, and `int <name>_entry(void** args)` taking one pointer per
/// parameter (the address of the value, or the out pointer itself).
std::string emit_c(const Kernel &kernel, const EmitOptions &options = {});

/// The kernel function alone, after inlining; no helpers.
std::string emit_function(const Kernel &kernel, const EmitOptions &options = {});

} // namespace spl

#endif
