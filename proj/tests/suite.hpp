// The kernel x format grid checked against the dense oracle, shared by the
// engine tests and the acceptance binary.
#ifndef SPL_TESTS_SUITE_HPP
#define SPL_TESTS_SUITE_HPP

#include <random>
#include <set>

#include "common.hpp"

namespace spl::test {

struct SuiteCase {
  std::string kernel;
  std::string expr;
  /// Operand name and format string.
  std::vector<std::pair<std::string, std::string>> ops;
  std::string out;

  std::string label() const {
    std::string s = kernel + " [";
    for (std::size_t k = 0; k < ops.size(); ++k)
      s += (k ? ", " : "") + ops[k].first + "=" + ops[k].second;
    return s + " -> " + out + "]";
  }
};

inline const std::vector<std::string> &suite_matrices() {
  static const std::vector<std::string> m{"csr", "csc",  "dcsr", "coo-soa",
                                          "coo-aos", "dia", "ell", "bcsr"};
  return m;
}

inline const std::vector<std::string> &suite_vectors() {
  static const std::vector<std::string> v{"dense", "sparse-vector", "hash-vector"};
  return v;
}

inline const std::vector<std::string> &suite_tensors3() {
  static const std::vector<std::string> t{"csf", "coo-3", "mode-generic"};
  return t;
}

inline std::vector<SuiteCase> oracle_suite() {
  std::vector<SuiteCase> s;
  const char *spmv = "y(i) = A(i,j) * x(j)";
  const char *spdm = "A(i,k) = B(i,j) * C(j,k)";
  const char *add = "A(i,j) = B(i,j) + C(i,j)";
  const char *mul = "A(i,j) = B(i,j) * C(i,j)";
  const char *ttv = "A(i,j) = B(i,j,k) * c(k)";
  const char *ttm = "A(i,j,l) = B(i,j,k) * C(l,k)";
  const char *plus = "A(i,j,k) = B(i,j,k) + C(i,j,k)";
  const char *mttkrp = "A(i,j) = B(i,k,l) * C(k,j) * D(l,j)";
  const char *inner = "alpha() = B(i,j,k) * C(i,j,k)";

  for (const std::string &a : suite_matrices()) {
    // Blocked storage multiplies whole blocks, so it pairs with a dense x.
    for (const std::string &x : suite_vectors()) {
      if (a == "bcsr" && x != "dense") continue;
      s.push_back({"SpMV", spmv, {{"A", a}, {"x", x}}, "dense"});
    }
    s.push_back({"SpDM", spdm, {{"B", a}, {"C", "dense:2"}}, "dense:2"});
    bool colMajor = a == "csc";
    // DIA diagonals and ELL slots only take part in products.
    bool structural = a == "dia" || a == "ell";
    std::string out = colMajor ? "{dense,dense}@(1,0)" : "dense:2";
    if (!structural) s.push_back({"add", add, {{"B", a}, {"C", a}}, out});
    s.push_back({"mul", mul, {{"B", a}, {"C", a}}, out});
    if (colMajor) continue;
    s.push_back({"mul", mul, {{"B", a}, {"C", "dense:2"}}, "dense:2"});
    if (a == "bcsr") continue;
    if (!structural) s.push_back({"add", add, {{"B", "csr"}, {"C", a}}, "dense:2"});
    s.push_back({"mul", mul, {{"B", "csr"}, {"C", a}}, "dense:2"});
  }
  // Sparse results.
  s.push_back({"SpMV", spmv, {{"A", "csr"}, {"x", "sparse-vector"}}, "sparse-vector"});
  s.push_back({"SpMV", spmv, {{"A", "csr"}, {"x", "hash-vector"}}, "hash-vector"});
  s.push_back({"add", add, {{"B", "csr"}, {"C", "coo-soa"}}, "csr"});
  s.push_back({"add", add, {{"B", "dcsr"}, {"C", "coo-aos"}}, "dcsr"});
  s.push_back({"mul", mul, {{"B", "coo-soa"}, {"C", "csr"}}, "coo-soa"});
  s.push_back({"SpDM", spdm, {{"B", "csr"}, {"C", "dense:2"}}, "{dense,hashed}"});

  for (const std::string &t : suite_tensors3()) {
    for (const std::string &c : suite_vectors()) {
      if (t == "mode-generic" && c != "dense") continue;
      s.push_back({"TTV", ttv, {{"B", t}, {"c", c}}, "dense:2"});
    }
    s.push_back({"TTM", ttm, {{"B", t}, {"C", "dense:2"}}, "dense:3"});
    s.push_back({"PLUS", plus, {{"B", t}, {"C", t}}, "dense:3"});
    s.push_back({"MTTKRP", mttkrp, {{"B", t}, {"C", "dense:2"}, {"D", "dense:2"}}, "dense:2"});
    s.push_back({"INNERPROD", inner, {{"B", t}, {"C", t}}, "dense:0"});
    for (const std::string &u : suite_tensors3()) {
      if (u == t || t == "mode-generic" || u == "mode-generic") continue;
      s.push_back({"PLUS", plus, {{"B", t}, {"C", u}}, "dense:3"});
      s.push_back({"INNERPROD", inner, {{"B", t}, {"C", u}}, "dense:0"});
    }
  }
  s.push_back({"TTV", ttv, {{"B", "coo-3"}, {"c", "dense"}}, "csr"});
  s.push_back({"PLUS", plus, {{"B", "csf"}, {"C", "coo-3"}}, "csf"});
  return s;
}

/// One random instance of a case: extents in [1, 32] (even where a blocked
/// format needs it), densities in [0.01, 0.5], and every third entry split
/// into duplicates.
struct Instance {
  Operands ops;
  std::map<std::string, Index> extents;
};

inline Instance make_instance(const SuiteCase &c, std::uint64_t seed, Index maxExtent = 32) {
  std::mt19937_64 rng(seed);
  Assignment a = parse(c.expr);
  bool blocked = false;
  for (const auto &[name, fmt] : c.ops)
    for (const FormatLevel &l : parse_format(fmt).levels)
      blocked = blocked || l.map.block > 1;
  Instance inst;
  std::uniform_int_distribution<Index> ext(1, maxExtent);
  for (const std::string &v : vars_of(*a.rhs)) {
    Index e = ext(rng);
    if (blocked) e = std::max<Index>(2, e + (e % 2));
    inst.extents[v] = std::min(e, maxExtent);
  }
  std::uniform_real_distribution<double> dens(0.01, 0.5);
  std::map<std::string, std::vector<std::string>> accessVars;
  for (const Expr *l : leaves(*a.rhs))
    if (l->kind == Expr::Access) accessVars[l->tensor] = l->vars;
  for (const auto &[name, fmt] : c.ops) {
    std::vector<Index> dims;
    for (const std::string &v : accessVars.at(name))
      dims.push_back(inst.extents.at(v));
    inst.ops.add(name, fmt, dims, random_coords(dims, dens(rng), rng(), 3));
  }
  return inst;
}

} // namespace spl::test

#endif
