#include "spl/codegen_emit.hpp"

#include <sstream>

namespace spl {

using namespace ir;

namespace {

const char *kHelpers = R"(#include <stdint.h>
#include <stdlib.h>
#include <string.h>

typedef INDEX_TYPE spl_index_t;

#define SPL_MIN(a, b) ((a) < (b) ? (a) : (b))
#define SPL_MAX(a, b) ((a) > (b) ? (a) : (b))
#define SPL_INDEX_MAX ((spl_index_t)((((uint64_t)1) << (8 * sizeof(spl_index_t) - 1)) - 1))

static void spl_grow(spl_index_t** a, spl_index_t* cap, spl_index_t n) {
  if (n <= *cap) return;
  spl_index_t c = *cap < 16 ? 16 : *cap;
  while (c < n) c *= 2;
  *a = (spl_index_t*)realloc(*a, (size_t)c * sizeof(spl_index_t));
  memset(*a + *cap, 0, (size_t)(c - *cap) * sizeof(spl_index_t));
  *cap = c;
}

static void spl_set(spl_index_t** a, spl_index_t* cap, spl_index_t i, spl_index_t v) {
  spl_grow(a, cap, i + 1);
  (*a)[i] = v;
}

static void spl_growd(double** a, spl_index_t* cap, spl_index_t n) {
  if (n <= *cap && *a) return;
  spl_index_t c = *cap < 16 ? 16 : *cap;
  while (c < n) c *= 2;
  *a = (double*)realloc(*a, (size_t)c * sizeof(double));
  memset(*a + *cap, 0, (size_t)(c - *cap) * sizeof(double));
  *cap = c;
}

static void spl_addd(double** a, spl_index_t* cap, spl_index_t i, double v) {
  spl_growd(a, cap, i + 1);
  (*a)[i] += v;
}

/* Closes a pos array over `parents` parent positions: segments never
   appended to end where the previous one ends. */
static void spl_pos_finish(spl_index_t** pos, spl_index_t* cap, spl_index_t parents) {
  spl_index_t p;
  spl_grow(pos, cap, parents + 1);
  (*pos)[0] = 0;
  for (p = 1; p <= parents; p++) {
    if ((*pos)[p] < (*pos)[p - 1]) (*pos)[p] = (*pos)[p - 1];
  }
}

static spl_index_t spl_hash_locate(const spl_index_t* crd, spl_index_t W, spl_index_t p,
                                   spl_index_t c) {
  spl_index_t base = p * W, home = c % W, probe;
  for (probe = 0; probe < W; probe++) {
    spl_index_t slot = base + (home + probe) % W;
    if (crd[slot] == c) return slot;
    if (crd[slot] == -1) break;
  }
  return -1;
}

static spl_index_t spl_hash_insert(spl_index_t* crd, spl_index_t W, spl_index_t p, spl_index_t c,
                                   int* status) {
  spl_index_t base = p * W, home = c % W, probe;
  for (probe = 0; probe < W; probe++) {
    spl_index_t slot = base + (home + probe) % W;
    if (crd[slot] == c) return slot;
    if (crd[slot] == -1) {
      crd[slot] = c;
      return slot;
    }
  }
  *status = 1;
  return base;
}

/* Stable sort of (key, val) pairs by key. */
static void spl_sort_pairs(spl_index_t* key, spl_index_t* val, spl_index_t n) {
  spl_index_t width, i;
  spl_index_t* tk;
  spl_index_t* tv;
  if (n < 2) return;
  tk = (spl_index_t*)malloc((size_t)n * sizeof(spl_index_t));
  tv = (spl_index_t*)malloc((size_t)n * sizeof(spl_index_t));
  for (width = 1; width < n; width *= 2) {
    for (i = 0; i < n; i += 2 * width) {
      spl_index_t mid = SPL_MIN(i + width, n), hi = SPL_MIN(i + 2 * width, n);
      spl_index_t a = i, b = mid, o = i;
      while (a < mid && b < hi) {
        if (key[b] < key[a]) {
          tk[o] = key[b];
          tv[o++] = val[b++];
        } else {
          tk[o] = key[a];
          tv[o++] = val[a++];
        }
      }
      while (a < mid) {
        tk[o] = key[a];
        tv[o++] = val[a++];
      }
      while (b < hi) {
        tk[o] = key[b];
        tv[o++] = val[b++];
      }
    }
    memcpy(key, tk, (size_t)n * sizeof(spl_index_t));
    memcpy(val, tv, (size_t)n * sizeof(spl_index_t));
  }
  free(tk);
  free(tv);
}
)";

std::string ctype(CType t) {
  switch (t) {
  case CType::Index: return "spl_index_t";
  case CType::Double: return "double";
  case CType::Bool: return "int";
  case CType::IndexPtr: return "spl_index_t*";
  case CType::DoublePtr: return "double*";
  }
  return "void";
}

std::string param_type(const KernelParam &p) {
  switch (p.type) {
  case KernelParam::IndexArray: return p.output ? "spl_index_t*" : "const spl_index_t*";
  case KernelParam::IndexScalar: return "spl_index_t";
  case KernelParam::ValueArray: return p.output ? "double*" : "const double*";
  case KernelParam::OutIndexArray: return "spl_index_t**";
  case KernelParam::OutValueArray: return "double**";
  case KernelParam::OutIndexScalar: return "spl_index_t*";
  }
  return "void*";
}

class Printer {
public:
  std::string text;

  void list(const StmtList &body, int depth) {
    for (const StmtPtr &s : body)
      stmt(*s, depth);
  }

private:
  void line(int depth, const std::string &s) {
    text.append(static_cast<std::size_t>(depth) * 2, ' ');
    text += s;
    text += '\n';
  }

  static std::string ex(const CExprPtr &e) { return to_c(*e); }

  void stmt(const Stmt &s, int d) {
    switch (s.kind) {
    case Stmt::ForRange:
      line(d, "for (spl_index_t " + s.var + " = " + ex(s.lo) + "; " + s.var + " < " + ex(s.hi) +
                  "; " + s.var + "++) {");
      list(s.body, d + 1);
      line(d, "}");
      break;
    case Stmt::While:
      line(d, "while (" + ex(s.value) + ") {");
      list(s.body, d + 1);
      line(d, "}");
      break;
    case Stmt::If:
      for (std::size_t k = 0; k < s.bodies.size(); ++k) {
        std::string head;
        if (k < s.conds.size()) {
          head = (k ? "} else if (" : "if (") + ex(s.conds[k]) + ") {";
        } else {
          head = "} else {";
        }
        line(d, head);
        list(s.bodies[k], d + 1);
      }
      line(d, "}");
      break;
    case Stmt::LevelCall:
      throw UnsupportedError("codegen",
                             "level function call " + s.call.function + " left after inlining");
    case Stmt::Assign:
      line(d, s.target ? ex(s.target) + " = " + ex(s.value) + ";" : ex(s.value) + ";");
      break;
    case Stmt::Accumulate: line(d, ex(s.target) + " += " + ex(s.value) + ";"); break;
    case Stmt::Min:
      line(d, s.var + " = SPL_INDEX_MAX;");
      for (std::size_t k = 0; k < s.values.size(); ++k) {
        std::string less = ex(s.values[k]) + " < " + s.var;
        std::string cond = is_true(s.conds[k]) ? less : ex(s.conds[k]) + " && " + less;
        line(d, "if (" + cond + ") " + s.var + " = " + ex(s.values[k]) + ";");
      }
      break;
    case Stmt::Decl:
      line(d, ctype(s.type) + " " + s.var + (s.value ? " = " + ex(s.value) : "") + ";");
      break;
    case Stmt::Block:
      line(d, "{");
      list(s.body, d + 1);
      line(d, "}");
      break;
    case Stmt::Comment: line(d, "/* " + s.text + " */"); break;
    }
  }
};

} // namespace

int index_bytes(const EmitOptions &options) {
  return options.indexType.find("64") != std::string::npos || options.indexType == "long" ||
                 options.indexType == "long long"
             ? 8
             : 4;
}

std::string emit_function(const Kernel &kernel, const EmitOptions &) {
  StmtList body = inline_levels(kernel.body);
  std::string sig = "int " + kernel.name + "(";
  for (std::size_t k = 0; k < kernel.params.size(); ++k) {
    sig += (k ? ", " : "") + param_type(kernel.params[k]) + " " + kernel.params[k].name;
  }
  if (kernel.params.empty()) sig += "void";
  sig += ") {\n";
  Printer p;
  p.list(body, 1);
  return sig + p.text + "  return spl_status;\n}\n";
}

std::string emit_c(const Kernel &kernel, const EmitOptions &options) {
  std::string helpers = kHelpers;
  helpers.replace(helpers.find("INDEX_TYPE"), 10, options.indexType);
  std::ostringstream out;
  out << helpers << "\n" << emit_function(kernel, options) << "\n";
  out << "int " << kernel.name << "_entry(void** args) {\n  return " << kernel.name << "(";
  for (std::size_t k = 0; k < kernel.params.size(); ++k) {
    const KernelParam &p = kernel.params[k];
    std::string type = param_type(p);
    std::string arg = "args[" + std::to_string(k) + "]";
    bool outPtr = p.type == KernelParam::OutIndexArray || p.type == KernelParam::OutValueArray ||
                  p.type == KernelParam::OutIndexScalar;
    out << (k ? ",\n      " : "") << (outPtr ? "(" + type + ")" + arg : "*(" + type + "*)" + arg);
  }
  out << ");\n}\n";
  return out.str();
}

} // namespace spl
