#ifndef SPL_ERROR_HPP
#define SPL_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spl {

using Index = std::int64_t;

/// Base of every error raised by the library. `module()` names the
/// pipeline stage that raised it (levels, formats, notation, ...), which the
/// command-line front end prints as provenance.
class Error : public std::runtime_error {
public:
  Error(std::string module, const std::string &message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string &module() const { return module_; }

private:
  std::string module_;
};

/// A level function was called on a level kind that lacks the capability.
class CapabilityError : public Error {
public:
  explicit CapabilityError(const std::string &message) : Error("levels", message) {}
};

/// Assembly protocol violations: full hashed segment, out-of-order append.
class AssemblyError : public Error {
public:
  explicit AssemblyError(const std::string &message) : Error("levels", message) {}
};

class FormatError : public Error {
public:
  explicit FormatError(const std::string &message) : Error("formats", message) {}
};

class ParseError : public Error {
public:
  ParseError(std::size_t position, const std::string &message)
      : Error("notation", "at column " + std::to_string(position + 1) + ": " + message),
        position_(position) {}

  std::size_t position() const { return position_; }

private:
  std::size_t position_;
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string &message) : Error("notation", message) {}
};

class GraphError : public Error {
public:
  explicit GraphError(const std::string &message) : Error("graph", message) {}
};

/// The requested combination of expression, operand formats and output
/// format cannot be scheduled (e.g. append-only output fed unordered data).
class UnsupportedError : public Error {
public:
  UnsupportedError(std::string module, const std::string &message)
      : Error(std::move(module), message) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string &message) : Error("io", message) {}
};

} // namespace spl

#endif
