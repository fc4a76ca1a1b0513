#include "spl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace spl {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string line_error(std::size_t line, const std::string &msg) {
  return "line " + std::to_string(line) + ": " + msg;
}

// Shortest text that reads back to the same double.
std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ifstream open_in(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return in;
}

std::ofstream open_out(const std::string &path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() && lower(s.substr(s.size() - suffix.size())) == suffix;
}

} // namespace

TensorData read_mtx(std::istream &in) {
  std::string line;
  std::size_t lineNo = 0;
  if (!std::getline(in, line)) throw IoError("empty Matrix Market file");
  ++lineNo;
  std::istringstream header(line);
  std::string banner, object, layout, field, symmetry;
  header >> banner >> object >> layout >> field >> symmetry;
  if (banner != "%%MatrixMarket")
    throw IoError(line_error(lineNo, "missing %%MatrixMarket banner"));
  object = lower(object);
  layout = lower(layout);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix" || layout != "coordinate") {
    throw IoError(line_error(lineNo, "only 'matrix coordinate' files are supported"));
  }
  if (field != "real" && field != "integer" && field != "pattern") {
    throw IoError(line_error(lineNo, "unsupported field '" + field + "'"));
  }
  if (symmetry != "general") {
    throw IoError(line_error(lineNo, "symmetry '" + symmetry +
                                         "' is not supported; expand the file to 'general'"));
  }
  bool pattern = field == "pattern";

  TensorData td;
  td.data = CoordList(2);
  Index rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    ++lineNo;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '%') continue;
    std::istringstream ls(line);
    if (rows < 0) {
      if (!(ls >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
        throw IoError(line_error(lineNo, "malformed size line"));
      }
      td.dims = {rows, cols};
      td.data.reserve(static_cast<std::size_t>(nnz));
      continue;
    }
    Index i = 0, j = 0;
    double v = 1.0;
    if (!(ls >> i >> j) || (!pattern && !(ls >> v))) {
      throw IoError(line_error(lineNo, "malformed entry"));
    }
    if (i < 1 || i > rows || j < 1 || j > cols) {
      throw IoError(line_error(lineNo, "coordinate (" + std::to_string(i) + ", " +
                                           std::to_string(j) + ") outside " + std::to_string(rows) +
                                           "x" + std::to_string(cols)));
    }
    td.data.push({i - 1, j - 1}, v);
  }
  if (rows < 0) throw IoError("missing size line");
  if (static_cast<Index>(td.data.size()) != nnz) {
    throw IoError("expected " + std::to_string(nnz) + " entries, found " +
                  std::to_string(td.data.size()));
  }
  return td;
}

TensorData read_mtx(const std::string &path) {
  std::ifstream in = open_in(path);
  return read_mtx(in);
}

void write_mtx(std::ostream &out, const CoordList &data, const std::vector<Index> &dims) {
  if (data.order != 2 || dims.size() != 2) throw IoError("Matrix Market files hold matrices only");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << dims[0] << ' ' << dims[1] << ' ' << data.size() << '\n';
  for (std::size_t e = 0; e < data.size(); ++e) {
    const Index *c = data.coord(e);
    out << c[0] + 1 << ' ' << c[1] + 1 << ' ' << format_value(data.vals[e]) << '\n';
  }
}

void write_mtx(const std::string &path, const CoordList &data, const std::vector<Index> &dims) {
  std::ofstream out = open_out(path);
  write_mtx(out, data, dims);
}

TensorData read_tns(std::istream &in, const std::optional<std::vector<Index>> &dims) {
  TensorData td;
  std::string line;
  std::size_t lineNo = 0;
  int order = -1;
  std::vector<double> fields;
  std::vector<Index> coord;
  while (std::getline(in, line)) {
    ++lineNo;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;)
      tokens.push_back(t);
    if (tokens.empty()) continue;
    int n = static_cast<int>(tokens.size()) - 1;
    if (order < 0) {
      order = n;
      td.data = CoordList(order);
    } else if (n != order) {
      throw IoError(line_error(lineNo, "expected " + std::to_string(order) +
                                           " coordinates, found " + std::to_string(n)));
    }
    coord.assign(order, 0);
    for (int k = 0; k < order; ++k) {
      const std::string &t = tokens[k];
      Index c = 0;
      auto res = std::from_chars(t.data(), t.data() + t.size(), c);
      if (res.ec != std::errc() || res.ptr != t.data() + t.size() || c < 1) {
        throw IoError(line_error(lineNo, "bad coordinate '" + t + "'"));
      }
      coord[k] = c - 1;
    }
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(tokens.back(), &used);
      if (used != tokens.back().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception &) {
      throw IoError(line_error(lineNo, "bad value '" + tokens.back() + "'"));
    }
    td.data.push(coord.data(), v);
  }
  if (order < 0) {
    if (!dims) throw IoError("empty tensor file and no dimensions given");
    order = static_cast<int>(dims->size());
    td.data = CoordList(order);
  }
  if (dims) {
    if (static_cast<int>(dims->size()) != order) {
      throw IoError("dimension list has " + std::to_string(dims->size()) +
                    " entries but the file has order " + std::to_string(order));
    }
    td.dims = *dims;
    for (std::size_t e = 0; e < td.data.size(); ++e) {
      for (int k = 0; k < order; ++k) {
        if (td.data.coord(e)[k] >= td.dims[k]) {
          throw IoError("entry " + std::to_string(e + 1) + " lies outside the given dimensions");
        }
      }
    }
  } else {
    td.dims.assign(order, 0);
    for (std::size_t e = 0; e < td.data.size(); ++e) {
      for (int k = 0; k < order; ++k)
        td.dims[k] = std::max(td.dims[k], td.data.coord(e)[k] + 1);
    }
  }
  return td;
}

TensorData read_tns(const std::string &path, const std::optional<std::vector<Index>> &dims) {
  std::ifstream in = open_in(path);
  return read_tns(in, dims);
}

void write_tns(std::ostream &out, const CoordList &data) {
  for (std::size_t e = 0; e < data.size(); ++e) {
    const Index *c = data.coord(e);
    for (int k = 0; k < data.order; ++k)
      out << c[k] + 1 << ' ';
    out << format_value(data.vals[e]) << '\n';
  }
}

void write_tns(const std::string &path, const CoordList &data) {
  std::ofstream out = open_out(path);
  write_tns(out, data);
}

std::optional<std::vector<Index>> read_dims_sidecar(const std::string &path) {
  std::ifstream in(path + ".dims");
  if (!in) return std::nullopt;
  std::vector<Index> dims;
  for (Index d; in >> d;) {
    if (d < 0) throw IoError("negative size in " + path + ".dims");
    dims.push_back(d);
  }
  if (!in.eof()) throw IoError("malformed size list in " + path + ".dims");
  return dims;
}

TensorData read_tensor(const std::string &path) {
  if (ends_with(path, ".mtx")) return read_mtx(path);
  if (ends_with(path, ".tns")) return read_tns(path, read_dims_sidecar(path));
  throw IoError("unknown tensor file extension in " + path + " (expected .mtx or .tns)");
}

void write_tensor(const std::string &path, const CoordList &data, const std::vector<Index> &dims) {
  if (ends_with(path, ".mtx")) return write_mtx(path, data, dims);
  if (!ends_with(path, ".tns"))
    throw IoError("unknown tensor file extension in " + path + " (expected .mtx or .tns)");
  write_tns(path, data);
  std::vector<Index> maxima(data.order, 0);
  for (std::size_t e = 0; e < data.size(); ++e)
    for (int k = 0; k < data.order; ++k)
      maxima[k] = std::max(maxima[k], data.coord(e)[k] + 1);
  std::string sidecar = path + ".dims";
  if (maxima == dims) {
    std::remove(sidecar.c_str());
    return;
  }
  std::ofstream out = open_out(sidecar);
  for (std::size_t k = 0; k < dims.size(); ++k)
    out << (k ? " " : "") << dims[k];
  out << '\n';
}

// DenseTensor

DenseTensor::DenseTensor(std::vector<Index> d) : dims(std::move(d)) {
  Index n = 1;
  for (Index x : dims)
    n *= x;
  vals.assign(static_cast<std::size_t>(n), 0.0);
}

DenseTensor DenseTensor::from_coords(const CoordList &data, const std::vector<Index> &dims) {
  DenseTensor t(dims);
  for (std::size_t e = 0; e < data.size(); ++e)
    t.at(data.coord(e)) += data.vals[e];
  return t;
}

Index DenseTensor::offset(const Index *idx) const {
  Index off = 0;
  for (std::size_t k = 0; k < dims.size(); ++k)
    off = off * dims[k] + idx[k];
  return off;
}

CoordList DenseTensor::to_coords() const {
  CoordList out(static_cast<int>(dims.size()));
  std::vector<Index> idx(dims.size(), 0);
  for (std::size_t off = 0; off < vals.size(); ++off) {
    if (vals[off] != 0.0) out.push(idx.data(), vals[off]);
    for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  out.canonical = true;
  return out;
}

// Oracle

namespace {

struct OracleLeaf {
  const DenseTensor *tensor = nullptr;
  std::vector<int> vars;
};

double oracle_rhs(const Expr &e, const std::vector<OracleLeaf> &leafs, const std::vector<Index> &at,
                  std::vector<Index> &idx) {
  switch (e.kind) {
  case Expr::Literal: return e.value;
  case Expr::Access: {
    const OracleLeaf &l = leafs[e.leaf];
    idx.resize(l.vars.size());
    for (std::size_t k = 0; k < l.vars.size(); ++k)
      idx[k] = at[l.vars[k]];
    return l.tensor->at(idx.data());
  }
  case Expr::Add: return oracle_rhs(*e.lhs, leafs, at, idx) + oracle_rhs(*e.rhs, leafs, at, idx);
  case Expr::Mul: return oracle_rhs(*e.lhs, leafs, at, idx) * oracle_rhs(*e.rhs, leafs, at, idx);
  }
  return 0.0;
}

} // namespace

DenseTensor oracle_eval(const CheckedAssignment &expr,
                        const std::map<std::string, DenseTensor> &inputs) {
  const Assignment &a = expr.assignment;
  auto var_index = [&](const std::string &v) {
    return static_cast<int>(std::find(expr.vars.begin(), expr.vars.end(), v) - expr.vars.begin());
  };
  std::vector<OracleLeaf> leafs(a.numLeaves);
  for (const Expr *l : leaves(*a.rhs)) {
    if (l->kind != Expr::Access) continue;
    auto it = inputs.find(l->tensor);
    if (it == inputs.end()) throw ValidationError("tensor " + l->tensor + " is not bound");
    leafs[l->leaf].tensor = &it->second;
    for (const std::string &v : l->vars)
      leafs[l->leaf].vars.push_back(var_index(v));
  }
  std::vector<Index> extents;
  for (const std::string &v : expr.vars)
    extents.push_back(expr.extents.at(v));
  std::vector<Index> outDims(extents.begin(), extents.begin() + a.vars.size());
  DenseTensor out(outDims);
  for (Index x : extents) {
    if (x == 0) return out;
  }
  std::vector<Index> at(extents.size(), 0), idx;
  while (true) {
    out.at(at.data()) += oracle_rhs(*a.rhs, leafs, at, idx);
    int k = static_cast<int>(at.size()) - 1;
    for (; k >= 0; --k) {
      if (++at[k] < extents[k]) break;
      at[k] = 0;
    }
    if (k < 0) break;
  }
  return out;
}

DenseTensor oracle_eval(const std::string &expr, const std::map<std::string, DenseTensor> &inputs) {
  Assignment a = parse(expr);
  ShapeBindings shapes;
  for (const auto &[name, t] : inputs) {
    shapes[name] = TensorShape{static_cast<int>(t.dims.size()), t.dims};
  }
  // The output's shape follows from the right-hand side.
  std::map<std::string, Index> ext;
  for (const Expr *l : leaves(*a.rhs)) {
    if (l->kind != Expr::Access) continue;
    auto it = inputs.find(l->tensor);
    if (it == inputs.end()) throw ValidationError("tensor " + l->tensor + " is not bound");
    for (std::size_t k = 0; k < l->vars.size() && k < it->second.dims.size(); ++k) {
      ext.emplace(l->vars[k], it->second.dims[k]);
    }
  }
  TensorShape out{static_cast<int>(a.vars.size()), {}};
  for (const std::string &v : a.vars)
    out.dims.push_back(ext.count(v) ? ext[v] : 0);
  shapes[a.tensor] = out;
  return oracle_eval(validate(a, shapes), inputs);
}

// Synthetic data

SynthSpec parse_synth(const std::string &text) {
  auto colon = text.find(':');
  std::string kind = lower(text.substr(0, colon));
  SynthSpec s;
  if (kind == "banded") {
    s.kind = SynthSpec::Banded;
    s.param = 5;
  } else if (kind == "random") {
    s.kind = SynthSpec::Random;
    s.param = 0.1;
  } else if (kind == "hypersparse") {
    s.kind = SynthSpec::Hypersparse;
    s.param = 0.01;
  } else {
    throw IoError("unknown synthetic kind '" + kind + "' (banded, random, hypersparse)");
  }
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      std::string arg = text.substr(colon + 1);
      s.param = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception &) {
      throw IoError("bad synthetic parameter in '" + text + "'");
    }
  }
  if (s.param <= 0 || (s.kind != SynthSpec::Banded && s.param > 1)) {
    throw IoError("synthetic parameter out of range in '" + text + "'");
  }
  return s;
}

CoordList synth(const SynthSpec &spec, const std::vector<Index> &dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> value(0.5, 1.5);
  int order = static_cast<int>(dims.size());
  CoordList out(order);
  Index total = 1;
  for (Index d : dims)
    total *= d;
  if (total == 0) return out;

  switch (spec.kind) {
  case SynthSpec::Banded: {
    if (order != 2) throw IoError("banded synthetic data needs a matrix");
    Index k = static_cast<Index>(spec.param);
    Index lo = -(k / 2);
    for (Index i = 0; i < dims[0]; ++i) {
      for (Index d = lo; d < lo + k; ++d) {
        Index j = i + d;
        if (j >= 0 && j < dims[1]) out.push({i, j}, value(rng));
      }
    }
    break;
  }
  case SynthSpec::Random: {
    // Geometric gaps between present components keep this O(nnz).
    std::vector<Index> c(order);
    if (spec.param >= 1.0) {
      for (Index off = 0; off < total; ++off) {
        Index r = off;
        for (int m = order - 1; m >= 0; --m) {
          c[m] = r % dims[m];
          r /= dims[m];
        }
        out.push(c.data(), value(rng));
      }
      break;
    }
    std::geometric_distribution<Index> gap(spec.param);
    for (Index off = gap(rng); off < total; off += 1 + gap(rng)) {
      Index r = off;
      for (int m = order - 1; m >= 0; --m) {
        c[m] = r % dims[m];
        r /= dims[m];
      }
      out.push(c.data(), value(rng));
    }
    break;
  }
  case SynthSpec::Hypersparse: {
    std::bernoulli_distribution filled(spec.param);
    std::uniform_int_distribution<int> count(1, 3);
    std::vector<Index> c(order);
    for (Index s = 0; s < dims[0]; ++s) {
      if (!filled(rng)) continue;
      std::set<std::vector<Index>> picked;
      int n = count(rng);
      for (int e = 0; e < n; ++e) {
        c[0] = s;
        for (int m = 1; m < order; ++m)
          c[m] = std::uniform_int_distribution<Index>(0, dims[m] - 1)(rng);
        picked.insert(c);
      }
      for (const auto &p : picked)
        out.push(p.data(), value(rng));
    }
    break;
  }
  }
  out.canonical = true;
  return out;
}

} // namespace spl
