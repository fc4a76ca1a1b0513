#ifndef SPL_JIT_HPP
#define SPL_JIT_HPP

#include <memory>
#include <optional>
#include <string>

#include "spl/codegen_emit.hpp"
#include "spl/engine.hpp"

namespace spl {

/// C compiler to use: $SPARSE_LEVELS_CC when set, else the first of cc, gcc
/// and clang found on PATH.
std::optional<std::string> find_c_compiler();

/// A generated kernel compiled into a shared object and loaded in-process.
class CompiledKernel {
public:
  /// Emits, compiles and loads the kernel for `schedule`. Throws a codegen
  /// Error when no compiler is available or compilation fails.
  static CompiledKernel build(const Schedule &schedule, const EmitOptions &options = {},
                              const std::string &name = "kernel");

  CompiledKernel(CompiledKernel &&) noexcept;
  CompiledKernel &operator=(CompiledKernel &&) noexcept;
  ~CompiledKernel();

  /// Runs on storage in the formats the schedule was built for, with any
  /// dimensions, and returns the output in the schedule's output format.
  TensorStorage run(const StorageBindings &inputs) const;

  const Kernel &kernel() const { return kernel_; }
  const std::string &source() const { return source_; }

private:
  CompiledKernel() = default;

  Schedule schedule_;
  Kernel kernel_;
  EmitOptions options_;
  std::string source_;
  void *handle_ = nullptr;
  int (*entry_)(void **) = nullptr;
};

} // namespace spl

#endif
