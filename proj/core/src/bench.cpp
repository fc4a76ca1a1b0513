#include "spl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

#include "spl/engine.hpp"
#include "spl/io.hpp"
#include "spl/jit.hpp"

namespace spl {

double Timing::median() const {
  if (samples.empty()) return 0;
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double Timing::min() const {
  return samples.empty() ? 0 : *std::min_element(samples.begin(), samples.end());
}

double Timing::mean() const {
  if (samples.empty()) return 0;
  return std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
}

double Timing::stddev() const {
  if (samples.size() < 2) return 0;
  double m = mean(), ss = 0;
  for (double x : samples)
    ss += (x - m) * (x - m);
  return std::sqrt(ss / (samples.size() - 1));
}

namespace {

volatile char cacheSink;

void clear_cache() {
  static std::vector<char> scratch(64 << 20);
  for (std::size_t k = 0; k < scratch.size(); k += 64)
    scratch[k] = static_cast<char>(scratch[k] + 1);
  cacheSink = scratch[scratch.size() / 2];
}

// A planned (or compiled) kernel over fixed operand formats.
class Runner {
public:
  Runner(const std::string &expr, const StorageBindings &inputs, const TensorFormat &out,
         BenchMode mode)
      : inputs_(inputs) {
    Schedule s = plan(expr, inputs, out);
    if (mode == BenchMode::Codegen) {
      EmitOptions o;
      o.indexType = "int64_t";
      compiled_ = std::make_unique<CompiledKernel>(CompiledKernel::build(s, o));
    } else {
      schedule_ = std::make_unique<Schedule>(std::move(s));
    }
  }

  TensorStorage operator()() const {
    return compiled_ ? compiled_->run(inputs_) : evaluate(*schedule_, inputs_);
  }

private:
  StorageBindings inputs_;
  std::unique_ptr<Schedule> schedule_;
  std::unique_ptr<CompiledKernel> compiled_;
};

struct Matrix {
  std::string label;
  std::vector<Index> dims;
  CoordList coords{2};
};

std::string dims_str(const std::vector<Index> &dims) {
  std::string s;
  for (std::size_t k = 0; k < dims.size(); ++k)
    s += (k ? "x" : "") + std::to_string(dims[k]);
  return s;
}

Matrix load_matrix(const BenchOptions &o) {
  Matrix m;
  if (o.input) {
    TensorData d = read_tensor(*o.input);
    if (d.dims.size() != 2) throw IoError("benchmarks need a matrix input");
    m.dims = d.dims;
    m.coords = canonicalize(std::move(d.data));
    m.label = *o.input;
  } else {
    m.dims = o.dims;
    m.coords = synth(parse_synth(o.synth), m.dims, o.seed);
    m.label = o.synth + "@" + dims_str(m.dims);
  }
  return m;
}

std::string fmt_seconds(double s) {
  std::ostringstream out;
  out.precision(6);
  out << s;
  return out.str();
}

TensorStorage dense_vector(Index n, std::uint64_t seed) {
  return assemble(preset("dense"), {n}, synth({SynthSpec::Random, 1.0}, {n}, seed));
}

BenchReport coo_vs_csr(const BenchOptions &o) {
  BenchReport r;
  Matrix m = load_matrix(o);
  std::string label = m.label + " nnz=" + std::to_string(m.coords.size());
  TensorStorage coo = assemble(preset("coo-soa"), m.dims, m.coords);
  TensorStorage x = dense_vector(m.dims[1], o.seed + 1);
  TensorFormat csrFormat = preset("csr");
  TensorStorage csr = convert(coo, csrFormat);
  const char *spmv = "y(i) = A(i,j) * x(j)";
  Runner cooSpmv(spmv, {{"A", &coo}, {"x", &x}}, preset("dense"), o.mode);
  Runner csrSpmv(spmv, {{"A", &csr}, {"x", &x}}, preset("dense"), o.mode);

  Timing tCoo = time_leg(o.reps, [&] { cooSpmv(); });
  Timing tConv = time_leg(o.reps, [&] { convert(coo, csrFormat); });
  Timing tCsr = time_leg(o.reps, [&] { csrSpmv(); });
  r.rows.push_back({label, "coo-spmv", tCoo});
  r.rows.push_back({label, "convert-coo-to-csr", tConv});
  r.rows.push_back({label, "csr-spmv", tCsr});

  double coo1 = tCoo.median(), conv = tConv.median(), csr1 = tCsr.median();
  auto n = break_even(conv, coo1, csr1);
  r.notes.emplace_back("break_even_spmvs", n ? std::to_string(*n) : "never");
  r.notes.emplace_back("convert+csr_spmv", fmt_seconds(conv + csr1));
  r.notes.emplace_back("coo_spmv", fmt_seconds(coo1));
  r.notes.emplace_back("check convert+csr_spmv > coo_spmv", conv + csr1 > coo1 ? "pass" : "fail");
  return r;
}

BenchReport dia_vs_csr(const BenchOptions &o) {
  BenchReport r;
  Matrix m = load_matrix(o);
  std::string label = m.label + " nnz=" + std::to_string(m.coords.size());
  TensorStorage csr = assemble(preset("csr"), m.dims, m.coords);
  TensorStorage dia = assemble(preset("dia"), m.dims, m.coords);
  TensorStorage x = dense_vector(m.dims[1], o.seed + 1);
  const char *spmv = "y(i) = A(i,j) * x(j)";
  Runner csrSpmv(spmv, {{"A", &csr}, {"x", &x}}, preset("dense"), o.mode);
  Runner diaSpmv(spmv, {{"A", &dia}, {"x", &x}}, preset("dense"), o.mode);
  Timing tCsr = time_leg(o.reps, [&] { csrSpmv(); });
  Timing tDia = time_leg(o.reps, [&] { diaSpmv(); });
  r.rows.push_back({label, "csr-spmv", tCsr});
  r.rows.push_back({label, "dia-spmv", tDia});
  double ratio = tDia.median() / tCsr.median();
  r.notes.emplace_back("dia/csr", fmt_seconds(ratio));
  r.notes.emplace_back("check dia_spmv <= csr_spmv", ratio <= 1.0 ? "pass" : "fail");
  r.notes.emplace_back("check dia_spmv <= 2*csr_spmv", ratio <= 2.0 ? "pass" : "fail");
  return r;
}

BenchReport vector_formats(const BenchOptions &o) {
  BenchReport r;
  Index rows = o.dims[0], cols = o.dims.size() > 1 ? o.dims[1] : o.dims[0];
  const char *spmv = "y(i) = A(i,j) * x(j)";
  for (double md : {1e-4, 1e-3, 1e-2}) {
    TensorStorage a =
        assemble(preset("csr"), {rows, cols}, synth({SynthSpec::Random, md}, {rows, cols}, o.seed));
    for (double vd : {1e-3, 1e-2, 1e-1, 0.5}) {
      CoordList xc = synth({SynthSpec::Random, vd}, {cols}, o.seed + 1);
      std::ostringstream label;
      label << "A=random:" << md << "@" << rows << "x" << cols << " x=random:" << vd;
      std::string best;
      double bestT = 0;
      for (const char *vf : {"dense", "sparse-vector", "hash-vector"}) {
        TensorStorage x = assemble(preset(vf), {cols}, xc);
        Runner run(spmv, {{"A", &a}, {"x", &x}}, preset("dense"), o.mode);
        Timing t = time_leg(o.reps, [&] { run(); });
        r.rows.push_back({label.str(), std::string("spmv-x-") + vf, t});
        if (best.empty() || t.median() < bestT) {
          best = vf;
          bestT = t.median();
        }
      }
      r.notes.emplace_back("fastest " + label.str(), best);
    }
  }
  return r;
}

} // namespace

Timing time_leg(int reps, const std::function<void()> &fn) {
  Timing t;
  clear_cache();
  fn();
  for (int k = 0; k < reps; ++k) {
    clear_cache();
    auto start = std::chrono::steady_clock::now();
    fn();
    auto stop = std::chrono::steady_clock::now();
    t.samples.push_back(std::chrono::duration<double>(stop - start).count());
  }
  return t;
}

const std::vector<std::string> &bench_scenarios() {
  static const std::vector<std::string> names{"coo-vs-csr-spmv", "dia-vs-csr-spmv",
                                              "vector-formats"};
  return names;
}

std::optional<std::int64_t> break_even(double convert, double slower, double faster) {
  if (!(faster < slower)) return std::nullopt;
  auto n = static_cast<std::int64_t>(std::floor(convert / (slower - faster))) + 1;
  return std::max<std::int64_t>(n, 1);
}

BenchReport run_bench(const BenchOptions &options) {
  if (options.reps < 1) throw ValidationError("--reps must be at least 1");
  BenchOptions o = options;
  if (o.dims.empty()) {
    Index n = o.scenario == "vector-formats" ? 10000 : 250000;
    o.dims = {n, n};
  }
  if (o.scenario == "coo-vs-csr-spmv") return coo_vs_csr(o);
  if (o.scenario == "dia-vs-csr-spmv") return dia_vs_csr(o);
  if (o.scenario == "vector-formats") return vector_formats(o);
  throw ValidationError("unknown benchmark scenario '" + options.scenario + "'");
}

void write_tsv(std::ostream &out, const BenchReport &report) {
  out << "matrix\tleg\treps\tmedian_s\tmin_s\tmean_s\tstddev_s\n";
  for (const BenchRow &row : report.rows) {
    const Timing &t = row.timing;
    out << row.matrix << '\t' << row.leg << '\t' << t.samples.size() << '\t'
        << fmt_seconds(t.median()) << '\t' << fmt_seconds(t.min()) << '\t'
        << fmt_seconds(t.mean()) << '\t' << fmt_seconds(t.stddev()) << '\n';
  }
  for (const auto &[key, value] : report.notes)
    out << "# " << key << '\t' << value << '\n';
}

} // namespace spl
