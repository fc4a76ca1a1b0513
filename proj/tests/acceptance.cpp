// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spl/bench.hpp"
#include "spl/codegen_ir.hpp"
#include "spl/codegen_lower.hpp"
#include "spl/jit.hpp"
#include "suite.hpp"

using namespace spl;

namespace {

// Pinned thresholds.
constexpr double kRelTol = 1e-12;
constexpr int kInstances = 100;
constexpr double kOracleTimeLimit = 300.0;
constexpr int kVisitInstances = 100;
constexpr std::size_t kBandedMinNnz = 1000000;
constexpr int kBenchReps = 5;
constexpr int kRoundTrips = 50;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

int failures = 0;

void report(int id, bool pass, const std::string &title, const std::string &detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ". " << title << ": " << detail << std::endl;
}

// Collects the totals of a filtered doctest run.
struct Totals : doctest::IReporter {
  static inline doctest::TestRunStats last{};
  explicit Totals(const doctest::ContextOptions &) {}
  void report_query(const doctest::QueryData &) override {}
  void test_run_start() override {}
  void test_run_end(const doctest::TestRunStats &s) override { last = s; }
  void test_case_start(const doctest::TestCaseData &) override {}
  void test_case_reenter(const doctest::TestCaseData &) override {}
  void test_case_end(const doctest::CurrentTestCaseStats &) override {}
  void test_case_exception(const doctest::TestCaseException &) override {}
  void subcase_start(const doctest::SubcaseSignature &) override {}
  void subcase_end() override {}
  void log_assert(const doctest::AssertData &) override {}
  void log_message(const doctest::MessageData &) override {}
  void test_case_skipped(const doctest::TestCaseData &) override {}
};

REGISTER_LISTENER("totals", 1, Totals);

struct GridResult {
  int combos = 0;
  int checks = 0;
  int mismatches = 0;
  double engineSeconds = 0;
  std::string firstMismatch;
  // Compiled kernels against the engine.
  bool compiler = false;
  int compiledChecks = 0;
  int compiledMismatches = 0;
  std::string firstCompiledMismatch;
};

GridResult run_grid() {
  GridResult r;
  r.compiler = find_c_compiler().has_value();
  for (const test::SuiteCase &c : test::oracle_suite()) {
    ++r.combos;
    TensorFormat out = parse_format(c.out);
    std::optional<CompiledKernel> kernel;
    for (int n = 0; n < kInstances; ++n) {
      test::Instance inst = test::make_instance(c, 1000 + n);
      StorageBindings b = inst.ops.bindings();
      auto start = Clock::now();
      std::string why;
      TensorStorage result;
      bool ok = false;
      try {
        result = evaluate(c.expr, b, out);
        DenseTensor ref = oracle_eval(c.expr, inst.ops.dense);
        ok = approx_equal(enumerate(result), ref.to_coords(), kRelTol, &why);
      } catch (const std::exception &e) {
        why = e.what();
      }
      r.engineSeconds += seconds_since(start);
      ++r.checks;
      if (!ok) {
        ++r.mismatches;
        if (r.firstMismatch.empty()) r.firstMismatch = c.label() + ": " + why;
        continue;
      }
      if (!r.compiler) continue;
      ++r.compiledChecks;
      try {
        if (!kernel) kernel.emplace(CompiledKernel::build(plan(c.expr, b, out)));
        if (!approx_equal(enumerate(kernel->run(b)), enumerate(result), kRelTol, &why)) {
          ++r.compiledMismatches;
          if (r.firstCompiledMismatch.empty()) r.firstCompiledMismatch = c.label() + ": " + why;
        }
      } catch (const std::exception &e) {
        ++r.compiledMismatches;
        if (r.firstCompiledMismatch.empty()) r.firstCompiledMismatch = c.label() + ": " + e.what();
      }
    }
  }
  return r;
}

void criterion1(const GridResult &g) {
  std::ostringstream d;
  d << g.combos << " kernel/format combinations x " << kInstances << " instances, " << g.checks
    << " checks at rel " << kRelTol << ", " << g.mismatches << " mismatches, engine+oracle "
    << g.engineSeconds << " s (limit " << kOracleTimeLimit << " s)";
  if (!g.firstMismatch.empty()) d << "; first: " << g.firstMismatch;
  report(1, g.mismatches == 0 && g.engineSeconds < kOracleTimeLimit, "oracle equivalence", d.str());
}

void criterion2() {
  ShapeBindings shapes;
  for (const char *n : {"A", "B", "C"})
    shapes[n] = TensorShape{2, {4, 6}};
  FormatBindings formats{{"A", preset("dense", {2})},
                         {"B", preset("csr")},
                         {"C", parse_format("{compressed(~u,full),singleton}")}};
  Schedule s = make_schedule(validate(parse("A(i,j) = B(i,j) + C(i,j)"), shapes), formats);
  std::size_t iPoints = s.root->lattice.points.size();
  std::size_t jPoints = s.root->children.at(0)->lattice.points.size();
  report(2, iPoints == 1 && jPoints == 3, "merge lattice structure",
         "pruned i-lattice " + std::to_string(iPoints) + " point(s) (want 1), j-lattice " +
             std::to_string(jPoints) + " point(s) (want 3)");
}

std::string read_file(const std::string &path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion3(const GridResult &g) {
  struct Golden {
    const char *b, *c, *file;
  };
  std::vector<Index> dims{8, 6};
  CoordList data = test::random_coords(dims, 0.3, 1);
  int matched = 0;
  std::string bad;
  for (Golden gd : {Golden{"coo-soa", "dense:2", "skeleton_coo_dense.txt"},
                    Golden{"csr", "dense:2", "skeleton_csr_dense.txt"},
                    Golden{"csr", "coo-soa", "skeleton_csr_coo.txt"}}) {
    TensorStorage b = assemble(parse_format(gd.b), dims, data);
    TensorStorage c = assemble(parse_format(gd.c), dims, data);
    Schedule s = plan("A(i,j) = B(i,j) * C(i,j)", {{"B", &b}, {"C", &c}}, preset("dense", {2}));
    if (ir::skeleton(ir::inline_levels(lower(s).body)) == read_file(test::fixture(gd.file)))
      ++matched;
    else
      bad += std::string(" ") + gd.file;
  }
  std::ostringstream d;
  d << matched << "/3 loop skeletons match their goldens" << bad;
  bool pass = matched == 3;
  if (g.compiler) {
    d << "; compiled kernels vs engine: " << g.compiledChecks << " instances, "
      << g.compiledMismatches << " mismatches";
    if (!g.firstCompiledMismatch.empty()) d << " (first: " << g.firstCompiledMismatch << ")";
    pass = pass && g.compiledMismatches == 0;
  } else {
    d << "; no C compiler found, compiled comparison skipped";
  }
  report(3, pass, "generated code structure", d.str());
}

void criterion4() {
  int within = 0;
  std::int64_t worst = 0;
  for (int n = 0; n < kVisitInstances; ++n) {
    std::uint64_t seed = 500 + n;
    Index len = 1 + static_cast<Index>(seed * 7 % 32);
    double density = 0.01 + 0.49 * (n % 10) / 9.0;
    TensorStorage x =
        assemble(preset("sparse-vector"), {len}, test::random_coords({len}, density, seed));
    const char *partner = n % 2 ? "dense" : "hash-vector";
    TensorStorage y = assemble(preset(partner), {len}, test::random_coords({len}, 0.5, seed + 1));
    EvalStats st;
    evaluate("z(i) = x(i) * y(i)", {{"x", &x}, {"y", &y}}, preset("dense"), {}, &st);
    auto nnz = static_cast<std::int64_t>(x.levels[0].crd->size());
    if (st.visits <= nnz) ++within;
    worst = std::max(worst, st.visits - nnz);
  }
  report(4, within == kVisitInstances, "intersection visits bounded by nnz",
         std::to_string(within) + "/" + std::to_string(kVisitInstances) +
             " instances with visits <= nnz(x) (dense and hashed partners), max excess " +
             std::to_string(std::max<std::int64_t>(worst, 0)));
}

void criterion5() {
  BenchOptions o;
  o.scenario = "coo-vs-csr-spmv";
  o.synth = "banded:5";
  o.dims = {250000, 250000};
  o.reps = kBenchReps;
  std::size_t nnz = synth(parse_synth(o.synth), o.dims, o.seed).size();
  BenchReport r = run_bench(o);
  std::map<std::string, double> t;
  for (const BenchRow &row : r.rows)
    t[row.leg] = row.timing.median();
  std::map<std::string, std::string> notes(r.notes.begin(), r.notes.end());
  bool pass = nnz >= kBandedMinNnz && t["convert-coo-to-csr"] + t["csr-spmv"] > t["coo-spmv"];
  std::ostringstream d;
  d << "banded:5 " << o.dims[0] << "x" << o.dims[1] << " nnz=" << nnz << ", median of "
    << kBenchReps << ": coo " << t["coo-spmv"] << " s, convert " << t["convert-coo-to-csr"]
    << " s, csr " << t["csr-spmv"] << " s; convert+csr > coo; break-even after "
    << notes["break_even_spmvs"] << " SpMVs";
  report(5, pass, "conversion overhead", d.str());
}

void criterion6() {
  doctest::Context ctx;
  ctx.setOption("reporters", "totals");
  ctx.setOption("no-intro", true);
  ctx.setOption("no-version", true);
  ctx.addFilter("test-case", "capability conformance*,capability table,"
                             "fixed properties*,property: *");
  ctx.addFilter("test-case-exclude", "property: write then read*");
  std::ostringstream sink;
  ctx.setCout(&sink);
  int rc = ctx.run();
  const doctest::TestRunStats &s = Totals::last;
  std::ostringstream d;
  d << s.numTestCasesPassingFilters - s.numTestCasesFailed << "/" << s.numTestCasesPassingFilters
    << " property suites, " << s.numAsserts - s.numAssertsFailed << "/" << s.numAsserts
    << " assertions; capability conformance covers 6 kinds x 13 level functions = 78 checks; "
       "no C toolchain used";
  if (rc != 0) d << "\n" << sink.str();
  report(6, rc == 0 && s.numTestCasesFailed == 0 && s.numTestCasesPassingFilters > 0,
         "module property suites", d.str());
}

void criterion7() {
  auto dir = std::filesystem::temp_directory_path() / "spl_acceptance";
  std::filesystem::create_directories(dir);
  int mtxOk = 0, tnsOk = 0;
  for (int n = 0; n < kRoundTrips; ++n) {
    std::uint64_t seed = 7000 + n;
    std::vector<Index> dims{1 + static_cast<Index>(seed % 29), 1 + static_cast<Index>(seed % 31)};
    CoordList m = canonicalize(test::random_coords(dims, 0.05 + 0.4 * (n % 5) / 4.0, seed));
    std::string p = (dir / "m.mtx").string();
    write_tensor(p, m, dims);
    TensorData once = read_tensor(p);
    write_tensor(p, once.data, once.dims);
    TensorData twice = read_tensor(p);
    if (once.dims == dims && twice.dims == dims && once.data.coords == m.coords &&
        once.data.vals == m.vals && twice.data.coords == m.coords && twice.data.vals == m.vals)
      ++mtxOk;

    std::vector<Index> dims3{1 + static_cast<Index>(seed % 7), 1 + static_cast<Index>(seed % 11),
                             1 + static_cast<Index>(seed % 13)};
    CoordList t = canonicalize(test::random_coords(dims3, 0.3, seed + 1));
    std::string q = (dir / "t.tns").string();
    write_tensor(q, t, dims3);
    TensorData once3 = read_tensor(q);
    write_tensor(q, once3.data, once3.dims);
    TensorData twice3 = read_tensor(q);
    if (once3.dims == dims3 && twice3.dims == dims3 && once3.data.coords == t.coords &&
        once3.data.vals == t.vals && twice3.data.coords == t.coords && twice3.data.vals == t.vals)
      ++tnsOk;
  }
  std::filesystem::remove_all(dir);
  report(7, mtxOk == kRoundTrips && tnsOk == kRoundTrips, "file round-trips",
         ".mtx " + std::to_string(mtxOk) + "/" + std::to_string(kRoundTrips) + ", .tns " +
             std::to_string(tnsOk) + "/" + std::to_string(kRoundTrips) +
             " read-write-read identities");
}

} // namespace

int main() {
  GridResult grid = run_grid();
  criterion1(grid);
  criterion2();
  criterion3(grid);
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed"
                         : std::string("acceptance: all criteria pass"))
            << std::endl;
  return failures ? 1 : 0;
}
