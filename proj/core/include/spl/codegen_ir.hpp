#ifndef SPL_CODEGEN_IR_HPP
#define SPL_CODEGEN_IR_HPP

#include <memory>
#include <string>
#include <vector>

#include "spl/levels.hpp"

namespace spl::ir {

struct CExpr;
using CExprPtr = std::shared_ptr<const CExpr>;

/// Side-effect free C expression.
struct CExpr {
  enum Kind { Var, Int, Real, Load, Binary, Unary, Call };
  Kind kind = Int;
  std::string name; // variable, array, operator or function
  Index ival = 0;
  double rval = 0.0;
  std::vector<CExprPtr> args;
};

CExprPtr var(std::string name);
CExprPtr lit(Index v);
CExprPtr real(double v);
CExprPtr load(std::string array, CExprPtr index);
CExprPtr bin(std::string op, CExprPtr a, CExprPtr b);
CExprPtr un(std::string op, CExprPtr a);
CExprPtr call(std::string fn, std::vector<CExprPtr> args);
CExprPtr add(CExprPtr a, CExprPtr b);
CExprPtr sub(CExprPtr a, CExprPtr b);
CExprPtr mul(CExprPtr a, CExprPtr b);
/// Conjunction that drops constant-true operands.
CExprPtr land(CExprPtr a, CExprPtr b);

bool is_true(const CExprPtr &e);

struct Stmt;
using StmtPtr = std::shared_ptr<Stmt>;
using StmtList = std::vector<StmtPtr>;

enum class CType { Index, Double, Bool, IndexPtr, DoublePtr };

/// A call of one level function on one storage level. `results` name the
/// variables receiving the outputs: value (position or coordinate) and, for
/// functions that have one, the found flag.
struct LevelCallInfo {
  std::string tensor;
  int level = 0;
  LevelKind kind = LevelKind::Dense;
  std::string function;
  std::vector<CExprPtr> args;
  std::vector<std::string> results;
  /// Element stride of a shared coordinate array.
  Index crdStride = 1;
  /// Output level functions write through the output's growable arrays.
  bool output = false;
};

struct Stmt {
  enum Kind {
    ForRange, // for (var = lo; var < hi; var++) body
    While,    // while (cond) body
    If,       // if (conds[0]) bodies[0] else if ... else bodies.back() when bodies > conds
    LevelCall,
    Assign,     // target = value
    Accumulate, // target += value
    Min,        // target = min over (conds[k] ? values[k])
    Decl,       // type var = value
    Block,
    Comment
  };
  Kind kind = Block;
  std::string var;
  CType type = CType::Index;
  CExprPtr target;
  CExprPtr value;
  CExprPtr lo;
  CExprPtr hi;
  std::vector<CExprPtr> conds;
  std::vector<CExprPtr> values;
  std::vector<StmtList> bodies;
  StmtList body;
  LevelCallInfo call;
  std::string text;
};

StmtPtr for_range(std::string var, CExprPtr lo, CExprPtr hi, StmtList body);
StmtPtr while_loop(CExprPtr cond, StmtList body);
StmtPtr if_chain(std::vector<CExprPtr> conds, std::vector<StmtList> bodies);
StmtPtr level_call(LevelCallInfo info);
StmtPtr assign(CExprPtr target, CExprPtr value);
StmtPtr accumulate(CExprPtr target, CExprPtr value);
StmtPtr min_of(std::string target, std::vector<CExprPtr> conds, std::vector<CExprPtr> values);
StmtPtr decl(CType type, std::string name, CExprPtr init = nullptr);
StmtPtr block(StmtList body);
StmtPtr comment(std::string text);

/// Replaces every LevelCall with the body of the level function for its kind
/// and removes conditionals on found flags that are constant true.
StmtList inline_levels(const StmtList &body);

int count_level_calls(const StmtList &body);

/// Every variable read is declared in an enclosing scope (or is one of
/// `params`). Returns the first offending name, or "" when well scoped.
std::string check_scoped(const StmtList &body, const std::vector<std::string> &params);

/// Loop structure only: one line per loop, indented by depth, e.g.
/// "for\n  while\n" . Dedup scans inside a loop header count as loops.
std::string skeleton(const StmtList &body);

/// Debug listing of the IR.
std::string dump(const StmtList &body);

std::string to_c(const CExpr &e);

} // namespace spl::ir

#endif
