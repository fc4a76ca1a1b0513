#include "spl/formats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "spl/assembler.hpp"

namespace spl {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char &c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

FormatLevel whole(LevelFormat fmt, int dim) { return {fmt, {LevelMap::Whole, dim, 1}, 0}; }
FormatLevel outer(LevelFormat fmt, int dim, Index b) {
  return {fmt, {LevelMap::BlockOuter, dim, b}, 0};
}
FormatLevel inner(LevelFormat fmt, int dim, Index b) {
  return {fmt, {LevelMap::BlockInner, dim, b}, 0};
}
FormatLevel synthetic(LevelFormat fmt) { return {fmt, {LevelMap::Synthetic, -1, 1}, 0}; }

constexpr std::pair<Property, bool> kNotUnique{Property::Unique, false};
constexpr std::pair<Property, bool> kNotOrdered{Property::Ordered, false};

} // namespace

bool TensorFormat::has_synthetic_levels() const {
  return std::any_of(levels.begin(), levels.end(),
                     [](const FormatLevel &l) { return l.map.kind == LevelMap::Synthetic; });
}

std::string TensorFormat::composition() const {
  std::string out = "{";
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (k) out += ",";
    out += levels[k].fmt.str();
  }
  out += "}";
  bool identity = true;
  for (std::size_t k = 0; k < modeOrdering.size(); ++k) {
    if (modeOrdering[k] != static_cast<int>(k)) identity = false;
  }
  if (!identity) {
    out += "@(";
    for (std::size_t k = 0; k < modeOrdering.size(); ++k) {
      if (k) out += ",";
      out += std::to_string(modeOrdering[k]);
    }
    out += ")";
  }
  return out;
}

std::string TensorFormat::str() const { return name.empty() ? composition() : name; }

const std::vector<std::string> &preset_names() {
  static const std::vector<std::string> names = {
      "dense", "sparse-vector", "hash-vector", "COO-SoA", "COO-AoS", "CSR",   "CSC",         "DCSR",
      "BCSR",  "ELL",           "DIA",         "CSB",     "CSF",     "COO-3", "mode-generic"};
  return names;
}

TensorFormat compose(std::vector<LevelFormat> levels, std::vector<int> modeOrdering) {
  TensorFormat f;
  f.order = static_cast<int>(levels.size());
  if (modeOrdering.empty()) {
    modeOrdering.resize(levels.size());
    std::iota(modeOrdering.begin(), modeOrdering.end(), 0);
  }
  std::vector<int> sorted = modeOrdering;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k] != static_cast<int>(k) || sorted.size() != levels.size()) {
      throw FormatError("mode ordering must be a permutation of 0.." +
                        std::to_string(static_cast<int>(levels.size()) - 1));
    }
  }
  f.modeOrdering = modeOrdering;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (levels[k].kind == LevelKind::Range || levels[k].kind == LevelKind::Offset) {
      throw FormatError("range and offset levels are only available through the DIA preset");
    }
    f.levels.push_back(whole(levels[k], modeOrdering[k]));
  }
  return f;
}

TensorFormat preset(std::string_view nameIn, PresetParams params) {
  std::string name = lower(nameIn);
  Index b = params.block;
  auto blocked = [&](TensorFormat f) {
    if (b <= 0) throw FormatError("inconsistent blocking parameters: block size must be positive");
    return f;
  };
  TensorFormat f;
  if (name == "dense") {
    if (params.order < 0) throw FormatError("dense preset needs a non-negative order");
    std::vector<LevelFormat> lv(params.order, spl::dense());
    f = compose(lv);
    f.name = "dense";
  } else if (name == "sparse-vector") {
    f = compose({spl::compressed()});
    f.name = "sparse-vector";
  } else if (name == "hash-vector") {
    f = compose({spl::hashed()});
    f.name = "hash-vector";
  } else if (name == "csr") {
    f = compose({spl::dense(), spl::compressed()});
    f.name = "CSR";
  } else if (name == "csc") {
    f = compose({spl::dense(), spl::compressed()}, {1, 0});
    f.name = "CSC";
  } else if (name == "dcsr") {
    f = compose({spl::compressed(), spl::compressed()});
    f.name = "DCSR";
  } else if (name == "coo" || name == "coo-soa" || name == "coo-aos") {
    f = compose({spl::compressed({kNotUnique}), spl::singleton()});
    f.arrayOfStructs = name == "coo-aos";
    f.name = f.arrayOfStructs ? "COO-AoS" : "COO-SoA";
  } else if (name == "bcsr") {
    f = blocked({});
    f.order = 2;
    f.modeOrdering = {0, 1};
    f.levels = {outer(spl::dense(), 0, b), outer(spl::compressed(), 1, b),
                inner(spl::dense(), 0, b), inner(spl::dense(), 1, b)};
    f.name = "BCSR";
  } else if (name == "ell") {
    f.order = 2;
    f.modeOrdering = {0, 1};
    f.levels = {synthetic(spl::dense()), whole(spl::dense(), 0), whole(spl::singleton(), 1)};
    f.layout = Layout::Ellpack;
    f.name = "ELL";
  } else if (name == "dia") {
    f.order = 2;
    f.modeOrdering = {0, 1};
    f.levels = {synthetic(spl::dense()), whole(spl::range(), 0), whole(spl::offset(), 1)};
    f.layout = Layout::Diagonal;
    f.name = "DIA";
  } else if (name == "csb") {
    f = blocked({});
    f.order = 2;
    f.modeOrdering = {0, 1};
    f.levels = {outer(spl::dense(), 0, b), outer(spl::dense(), 1, b),
                inner(spl::compressed({kNotOrdered, kNotUnique}), 0, b),
                inner(spl::singleton({kNotOrdered}), 1, b)};
    f.name = "CSB";
  } else if (name == "csf") {
    f = compose({spl::compressed(), spl::compressed(), spl::compressed()});
    f.name = "CSF";
  } else if (name == "coo-3") {
    f = compose({spl::compressed({kNotUnique}), spl::singleton({kNotUnique}), spl::singleton()});
    f.name = "COO-3";
  } else if (name == "mode-generic") {
    f = blocked({});
    f.order = 3;
    f.modeOrdering = {0, 1, 2};
    f.levels = {whole(spl::compressed({kNotUnique}), 0), outer(spl::singleton(), 1, b),
                inner(spl::dense(), 1, b), whole(spl::dense(), 2)};
    f.name = "mode-generic";
  } else {
    throw FormatError("unknown preset '" + std::string(nameIn) + "'");
  }
  return f;
}

namespace {

class FormatParser {
public:
  explicit FormatParser(std::string_view text) : s_(text) {}

  TensorFormat parse() {
    skip();
    if (peek() != '{') return parse_preset();
    ++i_;
    std::vector<LevelFormat> levels;
    skip();
    if (peek() != '}') {
      for (;;) {
        levels.push_back(parse_level());
        skip();
        if (peek() == ',') {
          ++i_;
          continue;
        }
        break;
      }
    }
    expect('}');
    std::vector<int> ordering;
    skip();
    if (peek() == '@') {
      ++i_;
      expect('(');
      for (;;) {
        skip();
        ordering.push_back(static_cast<int>(parse_int()));
        skip();
        if (peek() == ',') {
          ++i_;
          continue;
        }
        break;
      }
      expect(')');
    }
    skip();
    if (i_ != s_.size()) fail("unexpected trailing text");
    if (!ordering.empty() && ordering.size() != levels.size()) {
      fail("mode ordering has " + std::to_string(ordering.size()) + " entries for " +
           std::to_string(levels.size()) + " levels");
    }
    return compose(std::move(levels), std::move(ordering));
  }

private:
  TensorFormat parse_preset() {
    std::string_view text = s_;
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
      text.remove_suffix(1);
    text.remove_prefix(i_);
    PresetParams params;
    auto colon = text.find(':');
    std::string_view name = text.substr(0, colon);
    if (colon != std::string_view::npos) {
      std::string arg(text.substr(colon + 1));
      char *end = nullptr;
      long v = std::strtol(arg.c_str(), &end, 10);
      if (arg.empty() || *end != '\0') fail("bad preset parameter '" + arg + "'");
      if (lower(name) == "dense")
        params.order = static_cast<int>(v);
      else
        params.block = v;
    }
    return preset(name, params);
  }

  LevelFormat parse_level() {
    skip();
    std::size_t start = i_;
    while (i_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_])))
      ++i_;
    std::string kindName = lower(s_.substr(start, i_ - start));
    auto kind = parse_level_kind(kindName);
    if (!kind) fail("unknown level kind '" + kindName + "'");
    std::vector<std::pair<Property, bool>> overrides;
    skip();
    if (peek() == '(') {
      ++i_;
      for (;;) {
        skip();
        bool value = true;
        if (peek() == '~' || peek() == '!') {
          value = false;
          ++i_;
        }
        std::size_t fs = i_;
        while (i_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_])))
          ++i_;
        std::string flag = lower(s_.substr(fs, i_ - fs));
        std::optional<Property> prop;
        for (Property p : kAllProperties) {
          std::string pn(to_string(p));
          if (flag == pn || flag == pn.substr(0, 1)) prop = p;
        }
        if (!prop) fail("unknown property '" + flag + "'");
        overrides.emplace_back(*prop, value);
        skip();
        if (peek() == ',') {
          ++i_;
          continue;
        }
        break;
      }
      expect(')');
    }
    return make_level(*kind, overrides);
  }

  Index parse_int() {
    std::size_t start = i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_])))
      ++i_;
    if (start == i_) fail("expected an integer");
    return std::stoll(std::string(s_.substr(start, i_ - start)));
  }

  char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_])))
      ++i_;
  }
  void expect(char c) {
    skip();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }
  [[noreturn]] void fail(const std::string &msg) const {
    throw FormatError("in format '" + std::string(s_) + "' at column " + std::to_string(i_ + 1) +
                      ": " + msg);
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

} // namespace

TensorFormat parse_format(std::string_view text) { return FormatParser(text).parse(); }

void CoordList::push(std::initializer_list<Index> c, double v) {
  if (static_cast<int>(c.size()) != order) throw FormatError("coordinate arity mismatch");
  coords.insert(coords.end(), c.begin(), c.end());
  vals.push_back(v);
  canonical = false;
}

void CoordList::push(const Index *c, double v) {
  coords.insert(coords.end(), c, c + order);
  vals.push_back(v);
  canonical = false;
}

void CoordList::reserve(std::size_t n) {
  coords.reserve(n * order);
  vals.reserve(n);
}

CoordList canonicalize(CoordList list) {
  if (list.canonical) return list;
  const int ord = list.order;
  std::vector<std::size_t> perm(list.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(list.coord(a), list.coord(a) + ord, list.coord(b),
                                        list.coord(b) + ord);
  });
  CoordList out(ord);
  out.reserve(list.size());
  for (std::size_t e : perm) {
    const Index *c = list.coord(e);
    if (!out.empty() && std::equal(c, c + ord, out.coord(out.size() - 1))) {
      out.vals.back() += list.vals[e];
    } else {
      out.push(c, list.vals[e]);
    }
  }
  out.canonical = true;
  return out;
}

CoordList canonical_nonzeros(CoordList list) {
  CoordList c = canonicalize(std::move(list));
  CoordList out(c.order);
  for (std::size_t e = 0; e < c.size(); ++e) {
    if (c.vals[e] != 0.0) out.push(c.coord(e), c.vals[e]);
  }
  out.canonical = true;
  return out;
}

bool approx_equal(const CoordList &a, const CoordList &b, double relTol, std::string *why) {
  auto describe = [&](const Index *c, int ord) {
    std::string s = "(";
    for (int k = 0; k < ord; ++k)
      s += (k ? "," : "") + std::to_string(c[k]);
    return s + ")";
  };
  if (a.order != b.order) {
    if (why) *why = "orders differ";
    return false;
  }
  CoordList ca = canonical_nonzeros(a);
  CoordList cb = canonical_nonzeros(b);
  const int ord = a.order;
  std::size_t i = 0, j = 0;
  while (i < ca.size() || j < cb.size()) {
    int cmp;
    if (i == ca.size())
      cmp = 1;
    else if (j == cb.size())
      cmp = -1;
    else if (std::lexicographical_compare(ca.coord(i), ca.coord(i) + ord, cb.coord(j),
                                          cb.coord(j) + ord))
      cmp = -1;
    else if (std::equal(ca.coord(i), ca.coord(i) + ord, cb.coord(j)))
      cmp = 0;
    else
      cmp = 1;
    double va = cmp <= 0 ? ca.vals[i] : 0.0;
    double vb = cmp >= 0 ? cb.vals[j] : 0.0;
    double tol = relTol * std::max(std::abs(va), std::abs(vb));
    if (!(std::abs(va - vb) <= tol)) {
      if (why) {
        *why = "at " + describe(cmp <= 0 ? ca.coord(i) : cb.coord(j), ord) + ": " +
               std::to_string(va) + " vs " + std::to_string(vb);
      }
      return false;
    }
    if (cmp <= 0) ++i;
    if (cmp >= 0) ++j;
  }
  return true;
}

Index level_extent(const FormatLevel &level, const std::vector<Index> &dims) {
  switch (level.map.kind) {
  case LevelMap::Whole: return dims.at(level.map.dim);
  case LevelMap::BlockOuter: return dims.at(level.map.dim) / level.map.block;
  case LevelMap::BlockInner: return level.map.block;
  case LevelMap::Synthetic: return -1;
  }
  return -1;
}

void check_dims(const TensorFormat &format, const std::vector<Index> &dims) {
  if (static_cast<int>(dims.size()) != format.order) {
    throw FormatError("format " + format.str() + " has order " + std::to_string(format.order) +
                      " but " + std::to_string(dims.size()) + " dimensions were given");
  }
  for (Index d : dims) {
    if (d < 0) throw FormatError("negative dimension size");
  }
  for (const FormatLevel &l : format.levels) {
    if (l.map.kind == LevelMap::BlockOuter && dims[l.map.dim] % l.map.block != 0) {
      throw FormatError("inconsistent blocking parameters: dimension " + std::to_string(l.map.dim) +
                        " of size " + std::to_string(dims[l.map.dim]) +
                        " is not a multiple of block size " + std::to_string(l.map.block));
    }
  }
}

void to_level_coords(const TensorFormat &format, const Index *logical, Index *out) {
  for (std::size_t k = 0; k < format.levels.size(); ++k) {
    const LevelMap &m = format.levels[k].map;
    switch (m.kind) {
    case LevelMap::Whole: out[k] = logical[m.dim]; break;
    case LevelMap::BlockOuter: out[k] = logical[m.dim] / m.block; break;
    case LevelMap::BlockInner: out[k] = logical[m.dim] % m.block; break;
    case LevelMap::Synthetic: out[k] = 0; break;
    }
  }
}

namespace {

void check_bounds(const CoordList &data, const std::vector<Index> &dims) {
  if (data.order != static_cast<int>(dims.size())) {
    throw FormatError("coordinate list has order " + std::to_string(data.order) + " but " +
                      std::to_string(dims.size()) + " dimensions were given");
  }
  for (std::size_t e = 0; e < data.size(); ++e) {
    const Index *c = data.coord(e);
    for (int k = 0; k < data.order; ++k) {
      if (c[k] < 0 || c[k] >= dims[k]) {
        throw FormatError("coordinate " + std::to_string(c[k]) + " out of bounds for dimension " +
                          std::to_string(k) + " of size " + std::to_string(dims[k]));
      }
    }
  }
}

TensorStorage assemble_dia(const TensorFormat &format, const std::vector<Index> &dims,
                           const CoordList &data) {
  Index rows = dims[0], cols = dims[1];
  std::set<Index> diagSet;
  for (std::size_t e = 0; e < data.size(); ++e)
    diagSet.insert(data.coord(e)[1] - data.coord(e)[0]);
  auto offsets = std::make_shared<std::vector<Index>>(diagSet.begin(), diagSet.end());
  Index D = static_cast<Index>(offsets->size());
  TensorStorage s;
  s.format = format;
  s.dims = dims;
  s.levels = {make_dense_level(D), make_range_level(rows, cols, offsets),
              make_offset_level(rows, offsets)};
  s.vals.assign(static_cast<std::size_t>(D * rows), 0.0);
  for (std::size_t e = 0; e < data.size(); ++e) {
    const Index *c = data.coord(e);
    Index d = std::lower_bound(offsets->begin(), offsets->end(), c[1] - c[0]) - offsets->begin();
    s.vals[d * rows + c[0]] += data.vals[e];
  }
  return s;
}

TensorStorage assemble_ell(const TensorFormat &format, const std::vector<Index> &dims,
                           const CoordList &data) {
  CoordList canon = canonicalize(data);
  Index rows = dims[0];
  std::vector<Index> count(rows, 0);
  for (std::size_t e = 0; e < canon.size(); ++e)
    ++count[canon.coord(e)[0]];
  Index K = rows ? *std::max_element(count.begin(), count.end()) : 0;
  TensorStorage s;
  s.format = format;
  s.dims = dims;
  s.levels = {make_dense_level(K), make_dense_level(rows), make_singleton_level()};
  s.levels[2].crd->assign(static_cast<std::size_t>(K * rows), 0);
  s.levels[2].appended = K * rows;
  s.vals.assign(static_cast<std::size_t>(K * rows), 0.0);
  std::fill(count.begin(), count.end(), 0);
  for (std::size_t e = 0; e < canon.size(); ++e) {
    const Index *c = canon.coord(e);
    Index slot = count[c[0]]++;
    (*s.levels[2].crd)[slot * rows + c[0]] = c[1];
    s.vals[slot * rows + c[0]] = canon.vals[e];
  }
  return s;
}

bool has_non_unique_level(const TensorFormat &f) {
  return std::any_of(f.levels.begin(), f.levels.end(),
                     [](const FormatLevel &l) { return !l.fmt.props.unique; });
}

} // namespace

TensorStorage assemble(const TensorFormat &format, const std::vector<Index> &dims,
                       const CoordList &data) {
  check_dims(format, dims);
  check_bounds(data, dims);
  if (format.layout == Layout::Diagonal) return assemble_dia(format, dims, data);
  if (format.layout == Layout::Ellpack) return assemble_ell(format, dims, data);

  const int n = static_cast<int>(format.levels.size());
  bool keepDuplicates = has_non_unique_level(format);
  CoordList src = keepDuplicates ? data : canonicalize(data);

  // Level coordinates in storage order, stably sorted so duplicates keep
  // their input order.
  std::vector<Index> lc(src.size() * n);
  for (std::size_t e = 0; e < src.size(); ++e)
    to_level_coords(format, src.coord(e), &lc[e * n]);
  std::vector<std::size_t> perm(src.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(&lc[a * n], &lc[a * n] + n, &lc[b * n], &lc[b * n] + n);
  });

  // Hashed levels default to a width covering twice the fullest segment.
  Index width = 0;
  for (int k = 0; k < n; ++k) {
    if (format.levels[k].fmt.kind != LevelKind::Hashed || format.levels[k].width > 0) continue;
    std::map<std::vector<Index>, std::set<Index>> perParent;
    for (std::size_t e = 0; e < src.size(); ++e) {
      std::vector<Index> prefix(&lc[e * n], &lc[e * n] + k);
      perParent[prefix].insert(lc[e * n + k]);
    }
    Index most = 0;
    for (const auto &[p, cs] : perParent)
      most = std::max<Index>(most, cs.size());
    width = std::max(width, default_hash_width(most));
  }

  TensorStorage s = make_storage(format, dims, width);
  OutputAssembler out(s, keepDuplicates);
  for (std::size_t e : perm)
    out.emit(&lc[e * n], src.vals[e]);
  out.finish();
  return s;
}

namespace {

struct Enumerator {
  const TensorStorage &s;
  CoordList &out;
  std::vector<Index> levelCoords;
  std::vector<Index> logical;
  int n;

  void leaf(Index p) {
    std::fill(logical.begin(), logical.end(), 0);
    for (int k = 0; k < n; ++k) {
      const LevelMap &m = s.format.levels[k].map;
      switch (m.kind) {
      case LevelMap::Whole: logical[m.dim] = levelCoords[k]; break;
      case LevelMap::BlockOuter: logical[m.dim] += levelCoords[k] * m.block; break;
      case LevelMap::BlockInner: logical[m.dim] += levelCoords[k]; break;
      case LevelMap::Synthetic: break;
      }
    }
    out.push(logical.data(), s.vals[p]);
  }

  void visit(int k, Index parentPos) {
    if (k == n) {
      leaf(parentPos);
      return;
    }
    const LevelStorage &lvl = s.levels[k];
    std::span<const Index> prefix(levelCoords.data(), k);
    if (has_capability(lvl.kind, Capability::ValueIteration)) {
      Bounds b = coord_bounds(lvl, prefix);
      for (Index i = b.begin; i < b.end; ++i) {
        levelCoords[k] = i;
        Found f = coord_access(lvl, parentPos, std::span<const Index>(levelCoords.data(), k + 1));
        if (f.found) visit(k + 1, f.value);
      }
    } else {
      Bounds b = pos_bounds(lvl, parentPos);
      for (Index p = b.begin; p < b.end; ++p) {
        Found f = pos_access(lvl, p, prefix);
        if (!f.found) continue;
        levelCoords[k] = f.value;
        visit(k + 1, p);
      }
    }
  }
};

} // namespace

CoordList enumerate(const TensorStorage &storage) {
  CoordList out(storage.format.order);
  int n = static_cast<int>(storage.levels.size());
  Enumerator en{storage, out, std::vector<Index>(n, 0), std::vector<Index>(storage.format.order, 0),
                n};
  if (storage.vals.empty() && n > 0) return out;
  en.visit(0, 0);
  return out;
}

} // namespace spl
