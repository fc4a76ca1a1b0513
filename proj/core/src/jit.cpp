#include "spl/jit.hpp"

#include <dlfcn.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "spl/assembler.hpp"

namespace spl {

namespace fs = std::filesystem;

std::optional<std::string> find_c_compiler() {
  if (const char *env = std::getenv("SPARSE_LEVELS_CC"); env && *env) return std::string(env);
  const char *path = std::getenv("PATH");
  if (!path) return std::nullopt;
  for (const char *cc : {"cc", "gcc", "clang"}) {
    std::stringstream dirs(path);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      if (dir.empty()) continue;
      fs::path candidate = fs::path(dir) / cc;
      if (::access(candidate.c_str(), X_OK) == 0) return candidate.string();
    }
  }
  return std::nullopt;
}

namespace {

std::string quote(const std::string &s) {
  std::string q = "'";
  for (char c : s)
    q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

fs::path scratch_dir() {
  static std::atomic<int> counter{0};
  fs::path dir = fs::temp_directory_path() /
                 ("spl_jit_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

// Host copies of the kernel arguments, kept at stable addresses.
template <class T> class Marshal {
public:
  void *array(const std::vector<Index> &src, Index base) {
    auto &v = arrays_.emplace_back(src.begin(), src.end());
    pointers_.push_back(v.data() + base);
    return &pointers_.back();
  }
  // Input arrays are passed in place when the widths agree.
  void *input_array(const std::vector<Index> &src, Index base) {
    if constexpr (std::is_same_v<T, Index>) {
      pointers_.push_back(const_cast<T *>(src.data()) + base);
      return &pointers_.back();
    } else {
      return array(src, base);
    }
  }
  std::vector<T> &array_storage() { return arrays_.back(); }
  void *scalar(Index x) {
    scalars_.push_back(static_cast<T>(x));
    return &scalars_.back();
  }
  void *values(const double *p) {
    values_.push_back(const_cast<double *>(p));
    return &values_.back();
  }
  void *out_array() {
    outArrays_.push_back(nullptr);
    return &outArrays_.back();
  }
  void *out_values() {
    outValues_.push_back(nullptr);
    return &outValues_.back();
  }
  void *out_scalar() { return scalar(0); }

private:
  std::deque<std::vector<T>> arrays_;
  std::deque<T *> pointers_;
  std::deque<T> scalars_;
  std::deque<double *> values_;

public:
  std::deque<T *> outArrays_;
  std::deque<double *> outValues_;
};

template <class T>
TensorStorage run_kernel(const Schedule &s, const Kernel &k, int (*entry)(void **),
                         const StorageBindings &inputs) {
  const Assignment &a = s.expr.assignment;
  std::vector<Index> dims;
  for (const std::string &v : a.vars)
    dims.push_back(s.expr.extents.at(v));
  const TensorFormat &of = s.output().format;
  TensorStorage out = make_storage(of, dims);
  std::unique_ptr<ScatterOutput> scatter;
  if (s.mode == Schedule::Scatter) scatter = std::make_unique<ScatterOutput>(out);

  Marshal<T> m;
  std::vector<void *> args;
  // Output level params that need copying back, by level.
  std::map<int, std::vector<T> *> hashedOut;
  std::map<std::pair<int, std::string>, T **> gatherArrays;
  std::map<int, T *> gatherSizes;
  double **gatherVals = nullptr;
  T *gatherNvals = nullptr;

  for (const KernelParam &p : k.params) {
    if (p.field == "extent") {
      Index ext = -1;
      for (const LoopVar &lv : s.graph.vars) {
        if (lv.name == p.var) ext = lv.extent;
      }
      args.push_back(m.scalar(ext));
      continue;
    }
    if (p.output) {
      switch (p.type) {
      case KernelParam::IndexScalar: {
        const LevelStorage &lvl = out.levels[p.level];
        args.push_back(m.scalar(p.field == "W" ? lvl.W : lvl.N));
        break;
      }
      case KernelParam::IndexArray:
        args.push_back(m.array(*out.levels[p.level].crd, 0));
        hashedOut[p.level] = &m.array_storage();
        break;
      case KernelParam::ValueArray: args.push_back(m.values(out.vals.data())); break;
      case KernelParam::OutIndexArray: {
        void *slot = m.out_array();
        gatherArrays[{p.level, p.field}] = static_cast<T **>(slot);
        args.push_back(slot);
        break;
      }
      case KernelParam::OutValueArray: {
        void *slot = m.out_values();
        gatherVals = static_cast<double **>(slot);
        args.push_back(slot);
        break;
      }
      case KernelParam::OutIndexScalar: {
        void *slot = m.out_scalar();
        if (p.field == "nvals") {
          gatherNvals = static_cast<T *>(slot);
        } else {
          gatherSizes[p.level] = static_cast<T *>(slot);
        }
        args.push_back(slot);
        break;
      }
      }
      continue;
    }
    auto it = inputs.find(p.tensor);
    if (it == inputs.end() || !it->second) {
      throw ValidationError("tensor " + p.tensor + " has no storage bound");
    }
    const TensorStorage &st = *it->second;
    if (p.field == "vals") {
      args.push_back(m.values(st.vals.data()));
      continue;
    }
    const LevelStorage &lvl = st.levels.at(p.level);
    if (p.field == "pos") {
      args.push_back(m.input_array(lvl.pos, 0));
    } else if (p.field == "crd") {
      args.push_back(m.input_array(*lvl.crd, lvl.crdBase));
    } else if (p.field == "off") {
      args.push_back(m.input_array(*lvl.offset, 0));
    } else if (p.field == "N") {
      args.push_back(m.scalar(lvl.N));
    } else if (p.field == "M") {
      args.push_back(m.scalar(lvl.M));
    } else if (p.field == "W") {
      args.push_back(m.scalar(lvl.W));
    } else if (p.field == "rangeN") {
      args.push_back(m.scalar(lvl.rangeN));
    }
  }
  int status = entry(args.data());

  if (s.mode == Schedule::Scatter) {
    for (auto &[level, buf] : hashedOut) {
      auto &crd = *out.levels[level].crd;
      std::copy(buf->begin(), buf->end(), crd.begin());
    }
    if (status != 0) {
      throw AssemblyError("a hashed output segment is full; choose a larger segment width");
    }
    scatter->finish();
    return out;
  }

  Index parentSize = 1;
  for (std::size_t lk = 0; lk < out.levels.size(); ++lk) {
    int k = static_cast<int>(lk);
    LevelStorage &lvl = out.levels[lk];
    if (lvl.kind == LevelKind::Dense) {
      parentSize *= lvl.N;
      continue;
    }
    Index n = static_cast<Index>(*gatherSizes.at(k));
    T *crd = *gatherArrays.at({k, "crd"});
    if (lvl.kind == LevelKind::Compressed) {
      T *pos = *gatherArrays.at({k, "pos"});
      lvl.pos.assign(pos, pos + parentSize + 1);
      std::free(pos);
    }
    if (of.arrayOfStructs && out.levels.size() >= 2) {
      lvl.crd->resize(static_cast<std::size_t>(n * lvl.crdStride), 0);
    } else {
      lvl.crd->resize(static_cast<std::size_t>(n));
    }
    for (Index e = 0; e < n; ++e)
      lvl.crd_at(e) = crd[e];
    std::free(crd);
    lvl.appended = n;
    parentSize = n;
  }
  Index nv = static_cast<Index>(*gatherNvals);
  out.vals.assign(*gatherVals, *gatherVals + nv);
  std::free(*gatherVals);
  return out;
}

// The same schedule re-derived for the dimensions of `inputs`; the kernel
// text depends only on formats, so one build serves every shape.
Schedule rebind(const Schedule &s, const StorageBindings &inputs) {
  const Assignment &a = s.expr.assignment;
  ShapeBindings shapes;
  FormatBindings formats;
  std::map<std::string, Index> extents;
  for (const TensorPath &p : s.graph.paths)
    formats[p.tensor] = p.format;
  for (const Expr *l : leaves(*a.rhs)) {
    if (l->kind != Expr::Access) continue;
    auto it = inputs.find(l->tensor);
    if (it == inputs.end() || !it->second) {
      throw ValidationError("tensor " + l->tensor + " has no storage bound");
    }
    const TensorStorage &st = *it->second;
    if (!(st.format == formats.at(l->tensor))) {
      throw ValidationError("storage of " + l->tensor + " is in format " + st.format.str() +
                            " but the kernel was generated for " + formats.at(l->tensor).str());
    }
    shapes[l->tensor] = TensorShape{static_cast<int>(st.dims.size()), st.dims};
    for (std::size_t k = 0; k < l->vars.size() && k < st.dims.size(); ++k) {
      extents.emplace(l->vars[k], st.dims[k]);
    }
  }
  TensorShape out{static_cast<int>(a.vars.size()), {}};
  for (const std::string &v : a.vars)
    out.dims.push_back(extents.at(v));
  shapes[a.tensor] = out;
  return make_schedule(validate(a, shapes), formats, s.options);
}

} // namespace

CompiledKernel CompiledKernel::build(const Schedule &schedule, const EmitOptions &options,
                                     const std::string &name) {
  CompiledKernel ck;
  ck.schedule_ = schedule;
  ck.options_ = options;
  ck.kernel_ = lower(schedule, name);
  ck.source_ = emit_c(ck.kernel_, options);

  auto cc = find_c_compiler();
  if (!cc) throw Error("codegen", "no C compiler found (set SPARSE_LEVELS_CC)");
  fs::path dir = scratch_dir();
  fs::path src = dir / "kernel.c";
  fs::path lib = dir / "kernel.so";
  fs::path log = dir / "cc.log";
  {
    std::ofstream f(src);
    f << ck.source_;
  }
  std::string cmd = quote(*cc) + " -std=c99 -O2 -fPIC -shared -o " + quote(lib.string()) + " " +
                    quote(src.string()) + " > " + quote(log.string()) + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc != 0) {
    std::ifstream f(log);
    std::stringstream msg;
    msg << f.rdbuf();
    fs::remove_all(dir);
    throw Error("codegen", "C compiler failed:\n" + msg.str());
  }
  ck.handle_ = ::dlopen(lib.c_str(), RTLD_NOW | RTLD_LOCAL);
  fs::remove_all(dir);
  if (!ck.handle_) throw Error("codegen", std::string("cannot load kernel: ") + ::dlerror());
  void *sym = ::dlsym(ck.handle_, (ck.kernel_.name + "_entry").c_str());
  if (!sym) throw Error("codegen", "kernel entry point missing");
  ck.entry_ = reinterpret_cast<int (*)(void **)>(sym);
  return ck;
}

CompiledKernel::CompiledKernel(CompiledKernel &&o) noexcept
    : schedule_(std::move(o.schedule_)), kernel_(std::move(o.kernel_)),
      options_(std::move(o.options_)), source_(std::move(o.source_)), handle_(o.handle_),
      entry_(o.entry_) {
  o.handle_ = nullptr;
  o.entry_ = nullptr;
}

CompiledKernel &CompiledKernel::operator=(CompiledKernel &&o) noexcept {
  if (this != &o) {
    if (handle_) ::dlclose(handle_);
    schedule_ = std::move(o.schedule_);
    kernel_ = std::move(o.kernel_);
    options_ = std::move(o.options_);
    source_ = std::move(o.source_);
    handle_ = o.handle_;
    entry_ = o.entry_;
    o.handle_ = nullptr;
    o.entry_ = nullptr;
  }
  return *this;
}

CompiledKernel::~CompiledKernel() {
  if (handle_) ::dlclose(handle_);
}

TensorStorage CompiledKernel::run(const StorageBindings &inputs) const {
  Schedule s = rebind(schedule_, inputs);
  if (index_bytes(options_) == 8) return run_kernel<std::int64_t>(s, kernel_, entry_, inputs);
  return run_kernel<std::int32_t>(s, kernel_, entry_, inputs);
}

} // namespace spl
