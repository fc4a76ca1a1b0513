#include <filesystem>
#include <set>
#include <sstream>

#include "common.hpp"
#include "doctest.h"

using namespace spl;

namespace {

TensorData mtx(const std::string &text) {
  std::istringstream in(text);
  return read_mtx(in);
}

TensorData tns(const std::string &text, std::optional<std::vector<Index>> dims = {}) {
  std::istringstream in(text);
  return read_tns(in, dims);
}

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "spl_test_io";
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("Matrix Market entries shift to zero-based") {
  TensorData d = mtx("%%MatrixMarket matrix coordinate real general\n"
                     "% comment\n"
                     "2 2 2\n"
                     "1 1 5.0\n"
                     "2 2 7.0\n");
  CHECK(d.dims == std::vector<Index>{2, 2});
  REQUIRE(d.data.size() == 2);
  CHECK(d.data.coords == std::vector<Index>{0, 0, 1, 1});
  CHECK(d.data.vals == std::vector<double>{5, 7});
}

TEST_CASE("pattern and integer fields") {
  TensorData p = mtx("%%MatrixMarket matrix coordinate pattern general\n2 3 1\n1 2\n");
  CHECK(p.data.coords == std::vector<Index>{0, 1});
  CHECK(p.data.vals == std::vector<double>{1.0});
  TensorData i = mtx("%%MatrixMarket matrix coordinate integer general\n2 3 1\n2 3 -4\n");
  CHECK(i.data.vals == std::vector<double>{-4.0});
}

TEST_CASE("duplicates keep file order") {
  TensorData d = mtx("%%MatrixMarket matrix coordinate real general\n4 6 3\n"
                     "3 4 1.0\n1 1 2.0\n3 4 2.5\n");
  CHECK(d.data.coords == std::vector<Index>{2, 3, 0, 0, 2, 3});
  CHECK(d.data.vals == std::vector<double>{1.0, 2.0, 2.5});
  std::ostringstream out;
  write_mtx(out, d.data, d.dims);
  TensorData back = mtx(out.str());
  CHECK(back.data.coords == d.data.coords);
  CHECK(back.data.vals == d.data.vals);
}

TEST_CASE("malformed Matrix Market files") {
  auto fails_with = [](const std::string &text, const std::string &what) {
    try {
      mtx(text);
    } catch (const IoError &e) {
      return std::string(e.what()).find(what) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 1\n",
                   "symmetry 'symmetric'"));
  CHECK(fails_with("%%MatrixMarket matrix array real general\n2 2\n", "line 1"));
  CHECK(fails_with("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1\n",
                   "line 3: malformed entry"));
  CHECK(fails_with("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n", "line 3"));
  CHECK(fails_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
                   "expected 2 entries"));
  CHECK(fails_with("matrix coordinate\n", "banner"));
}

TEST_CASE("FROSTT lines") {
  TensorData d = tns("1 2 3 4.5\n# note\n2 1 1 -1\n");
  CHECK(d.data.order == 3);
  CHECK(d.data.coords == std::vector<Index>{0, 1, 2, 1, 0, 0});
  CHECK(d.data.vals == std::vector<double>{4.5, -1});
  CHECK(d.dims == std::vector<Index>{2, 2, 3});
  CHECK_THROWS_AS(tns("1 2 3 4.5\n1 2 1\n"), IoError);
  CHECK_THROWS_AS(tns("0 1 1.0\n"), IoError);

  TensorData wide = tns("1 2 3 4.5\n", std::vector<Index>{5, 6, 7});
  CHECK(wide.dims == std::vector<Index>{5, 6, 7});
  CHECK_THROWS_AS(tns("1 2 9 4.5\n", std::vector<Index>{5, 6, 7}), IoError);
}

TEST_CASE("dimension sidecar") {
  auto path = (scratch_dir() / "sidecar.tns").string();
  CoordList c(3);
  c.push({0, 1, 2}, 4.5);
  write_tensor(path, c, {5, 6, 7});
  CHECK(std::filesystem::exists(path + ".dims"));
  TensorData d = read_tensor(path);
  CHECK(d.dims == std::vector<Index>{5, 6, 7});
  write_tensor(path, c, {1, 2, 3});
  CHECK_FALSE(std::filesystem::exists(path + ".dims"));
  CHECK(read_tensor(path).dims == std::vector<Index>{1, 2, 3});
  CHECK_THROWS_AS(read_tensor((scratch_dir() / "x.csv").string()), IoError);
}

TEST_CASE("fixture matrix") {
  TensorData d = read_tensor(test::fixture("example_4x6.mtx"));
  CHECK(d.dims == std::vector<Index>{4, 6});
  CHECK(approx_equal(d.data, test::example_matrix(), 0.0));
}

TEST_CASE("property: write then read is the identity") {
  auto dir = scratch_dir();
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::vector<Index> dims{1 + static_cast<Index>(seed % 17), 1 + static_cast<Index>(seed % 23)};
    CoordList m = canonicalize(test::random_coords(dims, 0.3, seed));
    auto p = (dir / "m.mtx").string();
    write_tensor(p, m, dims);
    TensorData back = read_tensor(p);
    CHECK(back.dims == dims);
    CHECK(back.data.coords == m.coords);
    CHECK(back.data.vals == m.vals);

    std::vector<Index> dims3{1 + static_cast<Index>(seed % 5), 2 + static_cast<Index>(seed % 7),
                             3 + static_cast<Index>(seed % 4)};
    CoordList t = canonicalize(test::random_coords(dims3, 0.3, seed + 1000));
    auto q = (dir / "t.tns").string();
    write_tensor(q, t, dims3);
    TensorData back3 = read_tensor(q);
    CHECK(back3.dims == dims3);
    CHECK(back3.data.coords == t.coords);
    CHECK(back3.data.vals == t.vals);
  }
}

TEST_CASE("oracle") {
  DenseTensor a({2, 2}), x({2});
  a.vals = {1, 0, 0, 2};
  x.vals = {3, 4};
  CHECK(oracle_eval("y(i) = A(i,j) * x(j)", {{"A", a}, {"x", x}}).vals ==
        std::vector<double>{3, 8});
  DenseTensor z({3, 4, 5});
  DenseTensor r = oracle_eval("A(i,j) = B(i,k,l) * C(k,j) * D(l,j)",
                              {{"B", z}, {"C", DenseTensor({4, 2})}, {"D", DenseTensor({5, 2})}});
  CHECK(r.dims == std::vector<Index>{3, 2});
  CHECK(r.vals == std::vector<double>(6, 0.0));
}

TEST_CASE("property: the oracle is linear") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    std::vector<Index> dims{5, 7};
    DenseTensor b = DenseTensor::from_coords(test::random_coords(dims, 0.4, seed), dims);
    DenseTensor c = DenseTensor::from_coords(test::random_coords(dims, 0.4, seed + 50), dims);
    DenseTensor x = DenseTensor::from_coords(test::random_coords({7}, 0.8, seed + 99), {7});
    DenseTensor sum = oracle_eval("A(i,j) = B(i,j) + C(i,j)", {{"B", b}, {"C", c}});
    for (std::size_t k = 0; k < sum.vals.size(); ++k)
      CHECK(sum.vals[k] == b.vals[k] + c.vals[k]);
    DenseTensor yb = oracle_eval("y(i) = A(i,j) * x(j)", {{"A", b}, {"x", x}});
    DenseTensor yc = oracle_eval("y(i) = A(i,j) * x(j)", {{"A", c}, {"x", x}});
    DenseTensor ys = oracle_eval("y(i) = A(i,j) * x(j)", {{"A", sum}, {"x", x}});
    for (std::size_t k = 0; k < ys.vals.size(); ++k)
      CHECK(ys.vals[k] == doctest::Approx(yb.vals[k] + yc.vals[k]).epsilon(1e-12));
  }
}

TEST_CASE("synthetic matrices") {
  CoordList d = synth({SynthSpec::Banded, 1}, {4, 4}, 1);
  CHECK(d.size() == 4);
  for (std::size_t e = 0; e < d.size(); ++e)
    CHECK(d.coord(e)[0] == d.coord(e)[1]);
  CoordList r1 = synth({SynthSpec::Random, 0.25}, {10, 10}, 9),
            r2 = synth({SynthSpec::Random, 0.25}, {10, 10}, 9);
  CHECK(r1.coords == r2.coords);
  CHECK(r1.vals == r2.vals);
  CoordList big = synth({SynthSpec::Banded, 5}, {40000, 40000}, 1);
  CHECK(big.size() == 5 * 40000 - 6);
  CoordList hyper = synth({SynthSpec::Hypersparse, 0.01}, {1000, 1000}, 1);
  std::set<Index> rows;
  for (std::size_t e = 0; e < hyper.size(); ++e)
    rows.insert(hyper.coord(e)[0]);
  CHECK(rows.size() <= 20);
  CHECK(parse_synth("banded:5").kind == SynthSpec::Banded);
  CHECK_THROWS_AS(parse_synth("lumpy:1"), IoError);
}

} // TEST_SUITE
