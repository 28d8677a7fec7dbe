#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sblkit/dataset_io.hpp"
#include "test_helpers.hpp"

using namespace sblkit;
using testutil::exact_eq;

namespace {

ProblemInstance sample_instance(std::uint64_t seed) {
  InstanceParams params;
  params.m = 6;
  params.n = 9;
  params.rho = 0.4;
  params.snr_db = 25.0;
  return gen_instance(params, seed);
}

Dataset sample_dataset() {
  DatasetSpec spec;
  spec.m = 5;
  spec.n = 7;
  spec.snr_grid = {10, 30};
  spec.rho_grid = {0.3};
  spec.total_count = 12;
  spec.seed = 31;
  spec.matrix_kind = MatrixKind::correlated(0.2);
  return gen_dataset(spec);
}

}  // namespace

TEST_CASE("instance record round-trips bitwise") {
  const ProblemInstance inst = sample_instance(404);
  std::stringstream buf;
  write_instance_record(buf, inst);
  const ProblemInstance back = read_instance_record(buf);
  CHECK(exact_eq(back.a, inst.a));
  CHECK(exact_eq(back.x_true, inst.x_true));
  CHECK(exact_eq(back.y, inst.y));
  CHECK(back.beta_true == inst.beta_true);
  CHECK(back.snr_db == inst.snr_db);
  CHECK(back.rho == inst.rho);
}

TEST_CASE("record stream is self-delimiting") {
  std::stringstream buf;
  write_instance_record(buf, sample_instance(1));
  write_instance_record(buf, sample_instance(2));
  const ProblemInstance first = read_instance_record(buf);
  const ProblemInstance second = read_instance_record(buf);
  CHECK_FALSE(exact_eq(first.y, second.y));
}

TEST_CASE("bad magic is a format error") {
  std::stringstream buf;
  write_instance_record(buf, sample_instance(3));
  std::string bytes = buf.str();
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(read_instance_record(bad), FormatError);
}

TEST_CASE("wrong version is a format error") {
  std::stringstream buf;
  write_instance_record(buf, sample_instance(3));
  std::string bytes = buf.str();
  bytes[4] = 99;
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(read_instance_record(bad), FormatError);
}

TEST_CASE("truncated record is a format error") {
  std::stringstream buf;
  write_instance_record(buf, sample_instance(3));
  std::string bytes = buf.str();
  std::stringstream bad(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_instance_record(bad), FormatError);
}

TEST_CASE("absurd dimensions are a format error") {
  std::stringstream buf;
  write_instance_record(buf, sample_instance(3));
  std::string bytes = buf.str();
  // m field: bytes 8..11 little-endian.
  bytes[8] = static_cast<char>(0xff);
  bytes[9] = static_cast<char>(0xff);
  bytes[10] = static_cast<char>(0xff);
  bytes[11] = static_cast<char>(0x7f);
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(read_instance_record(bad), FormatError);
}

TEST_CASE("dataset save/load round-trips every field") {
  const Dataset ds = sample_dataset();
  testutil::TempDir dir("sblkit-io");
  save_dataset(ds, dir.path);
  CHECK(std::filesystem::exists(dir.path / "manifest.txt"));
  CHECK(std::filesystem::exists(dir.path / "records.sbld"));

  const Dataset back = load_dataset(dir.path);
  REQUIRE(back.instances.size() == ds.instances.size());
  for (std::size_t k = 0; k < ds.instances.size(); ++k) {
    CHECK(exact_eq(back.instances[k].a, ds.instances[k].a));
    CHECK(exact_eq(back.instances[k].x_true, ds.instances[k].x_true));
    CHECK(exact_eq(back.instances[k].y, ds.instances[k].y));
    CHECK(back.instances[k].beta_true == ds.instances[k].beta_true);
    CHECK(back.instances[k].seed == ds.instances[k].seed);
    CHECK(back.instances[k].matrix_kind == ds.instances[k].matrix_kind);
  }
  CHECK(back.train_indices == ds.train_indices);
  CHECK(back.validation_indices == ds.validation_indices);
  CHECK(back.test_indices == ds.test_indices);
  CHECK(back.spec.seed == ds.spec.seed);
  CHECK(back.spec.matrix_kind == ds.spec.matrix_kind);
  CHECK(back.spec.snr_grid == ds.spec.snr_grid);
  CHECK(back.spec.rho_grid == ds.spec.rho_grid);
}

TEST_CASE("saving the same dataset twice is byte-identical") {
  const Dataset ds = sample_dataset();
  testutil::TempDir dir_a("sblkit-io-a");
  testutil::TempDir dir_b("sblkit-io-b");
  save_dataset(ds, dir_a.path);
  save_dataset(ds, dir_b.path);
  for (const char* name : {"manifest.txt", "records.sbld"}) {
    std::ifstream fa(dir_a.path / name, std::ios::binary);
    std::ifstream fb(dir_b.path / name, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
  }
}

TEST_CASE("loading a missing directory is an io error") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/sblkit-io-test"), IoError);
}

TEST_CASE("corrupt manifest is a format error") {
  const Dataset ds = sample_dataset();
  testutil::TempDir dir("sblkit-io");
  save_dataset(ds, dir.path);
  std::ofstream(dir.path / "manifest.txt") << "format_version=1\nm=banana\n";
  CHECK_THROWS_AS(load_dataset(dir.path), FormatError);
}

TEST_CASE("record count mismatch is a format error") {
  const Dataset ds = sample_dataset();
  testutil::TempDir dir("sblkit-io");
  save_dataset(ds, dir.path);
  // Drop the tail of the record file.
  const auto rec = dir.path / "records.sbld";
  const auto size = std::filesystem::file_size(rec);
  std::filesystem::resize_file(rec, size - 16);
  CHECK_THROWS_AS(load_dataset(dir.path), FormatError);
}

TEST_CASE("matrix kind formatting round-trips") {
  CHECK(format_matrix_kind(MatrixKind::iid()) == "iid");
  CHECK(format_matrix_kind(MatrixKind::correlated(0.1)) == "corr:0.1");
  CHECK(parse_matrix_kind("iid") == MatrixKind::iid());
  CHECK(parse_matrix_kind("corr:0.25") == MatrixKind::correlated(0.25));
  CHECK(parse_matrix_kind(format_matrix_kind(MatrixKind::correlated(1.0 / 3.0))) ==
        MatrixKind::correlated(1.0 / 3.0));
  CHECK_THROWS_AS(parse_matrix_kind("corr:1.5"), DomainError);
  CHECK_THROWS_AS(parse_matrix_kind("banana"), DomainError);
}
