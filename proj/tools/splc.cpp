// splc: compute, convert, generate code for, inspect and benchmark sparse
// tensor expressions.
//
// Exit status: 0 on success, 1 on a runtime error, 2 on a usage or parse
// error (bad flags, malformed expression or format string).

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spl/bench.hpp"
#include "spl/codegen_emit.hpp"
#include "spl/codegen_ir.hpp"
#include "spl/engine.hpp"
#include "spl/io.hpp"
#include "spl/jit.hpp"

using namespace spl;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

std::pair<std::string, std::string> split_binding(const std::string &text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("expected NAME=VALUE, got '" + text + "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::vector<Index> parse_dims(const std::string &text) {
  std::vector<Index> dims;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t x = text.find('x', start);
    std::string part = text.substr(start, x == std::string::npos ? std::string::npos : x - start);
    try {
      std::size_t used = 0;
      long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      dims.push_back(v);
    } catch (const std::exception &) {
      throw CLI::ValidationError("bad dimensions '" + text + "' (expected e.g. 100x80)");
    }
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return dims;
}

// Everything needed to bind the tensors of one expression.
struct Problem {
  std::string expr;
  std::vector<std::string> formats;
  std::vector<std::string> inputs;
  std::vector<std::string> dims;
  std::uint64_t seed = 1;

  Assignment parsed;
  std::map<std::string, int> orders;
  std::map<std::string, TensorStorage> storage;
  StorageBindings bindings;
  TensorFormat outFormat;

  void add_options(CLI::App *cmd, bool needInputs) {
    cmd->add_option("expr", expr, "Index notation, e.g. \"y(i) = A(i,j) * x(j)\"")->required();
    cmd->add_option("--format,-f", formats,
                    "NAME=SPEC: preset (csr, coo-soa, dia, ...) or composition "
                    "such as {dense,compressed(~u)}@(1,0); default dense");
    std::string inputHelp = "NAME=PATH (.mtx or .tns) or NAME=synth:KIND:PARAM@DIMS, e.g. "
                            "A=synth:random:0.1@100x80";
    auto *in = cmd->add_option("--input,-i", inputs, inputHelp);
    if (needInputs) in->required();
    cmd->add_option("--dims", dims, "NAME=DIMS for tensors without an input, e.g. A=8x8");
    cmd->add_option("--seed", seed, "Seed for synthetic inputs");
  }

  TensorFormat format_of(const std::string &name, int order) const {
    for (const std::string &f : formats) {
      auto [n, spec] = split_binding(f);
      if (n == name) {
        TensorFormat fmt = parse_format(spec);
        if (fmt.order != order) {
          throw FormatError("format " + fmt.str() + " of " + name + " has order " +
                            std::to_string(fmt.order) + " but " + name + " has " +
                            std::to_string(order) + " modes");
        }
        return fmt;
      }
    }
    return preset("dense", {order});
  }

  TensorData load(const std::string &source, std::uint64_t salt) const {
    if (source.rfind("synth:", 0) == 0) {
      auto at = source.find('@');
      if (at == std::string::npos) {
        throw CLI::ValidationError("synthetic input " + source + " needs @DIMS");
      }
      TensorData d;
      d.dims = parse_dims(source.substr(at + 1));
      d.data = synth(parse_synth(source.substr(6, at - 6)), d.dims, seed + salt);
      return d;
    }
    return read_tensor(source);
  }

  // Binds every operand: from --input when given, else empty storage of
  // --dims (8 per mode by default) when `allowEmpty`.
  void bind(bool allowEmpty) {
    parsed = parse(expr);
    for (const Expr *l : leaves(*parsed.rhs)) {
      if (l->kind == Expr::Access) orders[l->tensor] = static_cast<int>(l->vars.size());
    }
    for (const std::string &f : formats) {
      std::string n = split_binding(f).first;
      if (n != parsed.tensor && !orders.count(n)) {
        throw CLI::ValidationError("--format names " + n + ", which is not in the expression");
      }
    }
    std::map<std::string, std::string> sources;
    for (const std::string &i : inputs) {
      auto [n, src] = split_binding(i);
      if (!orders.count(n)) {
        throw CLI::ValidationError("--input names " + n + ", which is not an operand");
      }
      sources[n] = src;
    }
    std::map<std::string, std::vector<Index>> shapes;
    for (const std::string &d : dims) {
      auto [n, text] = split_binding(d);
      shapes[n] = parse_dims(text);
    }
    std::uint64_t salt = 0;
    for (const auto &[name, order] : orders) {
      ++salt;
      TensorFormat fmt = format_of(name, order);
      TensorData d;
      if (auto it = sources.find(name); it != sources.end()) {
        d = load(it->second, salt);
      } else if (allowEmpty) {
        d.dims = shapes.count(name) ? shapes[name] : std::vector<Index>(order, 8);
        d.data = CoordList(order);
      } else {
        throw CLI::ValidationError("operand " + name + " has no --input");
      }
      if (static_cast<int>(d.dims.size()) != order) {
        throw ValidationError(name + " is accessed with " + std::to_string(order) +
                              " index variables but its data has order " +
                              std::to_string(d.dims.size()));
      }
      storage[name] = assemble(fmt, d.dims, d.data);
    }
    for (auto &[name, st] : storage)
      bindings[name] = &st;
    outFormat = format_of(parsed.tensor, static_cast<int>(parsed.vars.size()));
  }

  Schedule schedule(ScheduleOptions options = {}) const {
    return plan(expr, bindings, outFormat, options);
  }
};

void write_result(const std::optional<std::string> &path, const TensorStorage &result) {
  CoordList data = canonical_nonzeros(enumerate(result));
  if (path) {
    write_tensor(*path, data, result.dims);
  } else if (result.dims.size() == 2) {
    write_mtx(std::cout, data, result.dims);
  } else {
    write_tns(std::cout, data);
  }
}

void write_text(const std::optional<std::string> &path, const std::string &text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path);
  if (!out) throw IoError("cannot open " + *path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + *path);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Sparse tensor algebra over composable level formats"};
  app.require_subcommand(1);

  // compute
  Problem computeP;
  std::optional<std::string> computeOut;
  std::string computeMode = "interp";
  bool noFuse = false, noPrune = false;
  auto *compute = app.add_subcommand("compute", "Evaluate an expression");
  computeP.add_options(compute, true);
  compute->add_option("--output,-o", computeOut, "Result file (.mtx or .tns); default stdout");
  compute->add_option("--mode", computeMode, "interp or codegen")
      ->check(CLI::IsMember({"interp", "codegen"}));
  compute->add_flag("--no-fuse", noFuse, "Disable fusion of branchless levels");
  compute->add_flag("--no-prune", noPrune, "Keep lattice points that miss a full dimension");

  // convert
  std::string fromSpec, toSpec, convIn, convOut;
  auto *conv = app.add_subcommand("convert", "Convert a tensor file between storage formats");
  conv->add_option("--from", fromSpec, "Source format")->required();
  conv->add_option("--to", toSpec, "Target format")->required();
  conv->add_option("in", convIn, "Input file (.mtx or .tns)")->required();
  conv->add_option("out", convOut, "Output file (.mtx or .tns)")->required();

  // codegen
  Problem cgP;
  std::optional<std::string> cgOut;
  std::string indexType = "int32_t", kernelName = "kernel";
  auto *cg = app.add_subcommand("codegen", "Emit a C kernel");
  cgP.add_options(cg, false);
  cg->add_option("--out,-o", cgOut, "C file to write; default stdout");
  cg->add_option("--index-type", indexType, "C type of positions and coordinates")
      ->check(CLI::IsMember({"int32_t", "int64_t"}));
  cg->add_option("--name", kernelName, "Kernel function name");

  // dump
  Problem dumpP;
  bool dLattice = false, dGraph = false, dIr = false, dSkeleton = false;
  auto *dump = app.add_subcommand("dump", "Print internal representations");
  dumpP.add_options(dump, false);
  dump->add_flag("--lattice", dLattice, "Merge lattices of every loop");
  dump->add_flag("--graph", dGraph, "Iteration graph and loop order");
  dump->add_flag("--ir", dIr, "Loop IR with level function calls");
  dump->add_flag("--skeleton", dSkeleton, "Loop nest of the generated code");

  // bench
  BenchOptions bo;
  std::string benchDims, benchMode = "interp";
  std::optional<std::string> benchInput;
  auto *bench = app.add_subcommand("bench", "Time a scenario; prints TSV");
  bench->add_option("scenario", bo.scenario, "coo-vs-csr-spmv, dia-vs-csr-spmv or vector-formats")
      ->required()
      ->check(CLI::IsMember(bench_scenarios()));
  auto *bIn = bench->add_option("--input", benchInput, "Matrix file (.mtx or .tns)");
  bench->add_option("--synth", bo.synth, "Synthetic matrix, e.g. banded:5 or random:0.01")
      ->excludes(bIn);
  bench->add_option("--dims", benchDims, "Synthetic matrix dimensions, e.g. 250000x250000");
  bench->add_option("--reps", bo.reps, "Timed repetitions per leg")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bo.seed, "Seed for synthetic data");
  bench->add_option("--mode", benchMode, "interp or codegen")
      ->check(CLI::IsMember({"interp", "codegen"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*compute) {
      computeP.bind(false);
      Schedule s = computeP.schedule({!noFuse, !noPrune});
      TensorStorage result = computeMode == "codegen"
                                 ? CompiledKernel::build(s).run(computeP.bindings)
                                 : evaluate(s, computeP.bindings);
      write_result(computeOut, result);
    } else if (*conv) {
      TensorFormat from = parse_format(fromSpec), to = parse_format(toSpec);
      TensorData d = read_tensor(convIn);
      TensorStorage src = assemble(from, d.dims, d.data);
      TensorStorage dst = convert(src, to);
      write_tensor(convOut, canonicalize(enumerate(dst)), dst.dims);
    } else if (*cg) {
      cgP.bind(true);
      EmitOptions o;
      o.indexType = indexType;
      write_text(cgOut, emit_c(lower(cgP.schedule(), kernelName), o));
    } else if (*dump) {
      dumpP.bind(true);
      if (!dLattice && !dGraph && !dIr && !dSkeleton) dLattice = dGraph = dIr = dSkeleton = true;
      Schedule s = dumpP.schedule();
      if (dGraph) std::cout << "# graph\n" << s.graph.dump();
      if (dLattice) std::cout << "# lattice\n" << s.dump_lattices();
      if (dIr || dSkeleton) {
        Kernel k = lower(s);
        if (dIr) std::cout << "# ir\n" << ir::dump(k.body);
        if (dSkeleton) std::cout << "# skeleton\n" << ir::skeleton(ir::inline_levels(k.body));
      }
    } else if (*bench) {
      if (benchInput) bo.input = benchInput;
      if (!benchDims.empty()) bo.dims = parse_dims(benchDims);
      bo.mode = benchMode == "codegen" ? BenchMode::Codegen : BenchMode::Interp;
      write_tsv(std::cout, run_bench(bo));
    }
  } catch (const CLI::ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const FormatError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
