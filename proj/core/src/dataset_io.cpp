#include "sblkit/dataset_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "record I/O assumes a little-endian host");

namespace sblkit {

namespace {

constexpr char kMagic[4] = {'S', 'B', 'L', 'D'};
constexpr std::uint32_t kMaxDim = 1u << 20;  // keeps m*n*8 within size_t safely

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

std::uint32_t read_u32(std::istream& in, const char* field) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError(std::string("dataset record truncated at ") + field);
  return v;
}

void read_f64(std::istream& in, double* data, std::size_t count, const char* field) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw FormatError(std::string("dataset record truncated at ") + field);
}

// Shortest decimal form that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, result.ptr);
}

std::string join_grid(const std::vector<double>& grid) {
  std::string out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) out += ',';
    out += format_double(grid[i]);
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) grid.push_back(std::stod(item));
  }
  return grid;
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& manifest_get(const std::map<std::string, std::string>& kv,
                                const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("manifest missing key: " + key);
  return it->second;
}

}  // namespace

std::string format_matrix_kind(const MatrixKind& kind) {
  if (kind.is_correlated()) return "corr:" + format_double(kind.c);
  return "iid";
}

MatrixKind parse_matrix_kind(const std::string& text) {
  if (text == "iid") return MatrixKind::iid();
  if (text.rfind("corr:", 0) == 0) {
    double c = 0.0;
    try {
      std::size_t pos = 0;
      c = std::stod(text.substr(5), &pos);
      if (pos != text.size() - 5) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw DomainError("matrix kind has a malformed coefficient: " + text);
    }
    if (!(c >= 0.0) || c >= 1.0)
      throw DomainError("matrix correlation must lie in [0, 1), got " + text);
    return MatrixKind::correlated(c);
  }
  throw DomainError("unknown matrix kind: " + text + " (expected iid or corr:<c>)");
}

void write_instance_record(std::ostream& out, const ProblemInstance& inst) {
  out.write(kMagic, 4);
  write_u32(out, kDatasetFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(inst.m()));
  write_u32(out, static_cast<std::uint32_t>(inst.n()));
  // Eigen stores column-major; the record is row-major.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a_row = inst.a;
  write_f64(out, a_row.data(), static_cast<std::size_t>(a_row.size()));
  write_f64(out, inst.x_true.data(), static_cast<std::size_t>(inst.x_true.size()));
  write_f64(out, inst.y.data(), static_cast<std::size_t>(inst.y.size()));
  const double scalars[3] = {inst.beta_true, inst.snr_db, inst.rho};
  write_f64(out, scalars, 3);
  if (!out) throw IoError("failed writing dataset record");
}

ProblemInstance read_instance_record(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in) throw FormatError("dataset record truncated at magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad dataset record magic (expected SBLD)");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kDatasetFormatVersion)
    throw FormatError("unsupported dataset record version " + std::to_string(version) +
                      " (expected " + std::to_string(kDatasetFormatVersion) + ")");
  const std::uint32_t m = read_u32(in, "m");
  const std::uint32_t n = read_u32(in, "n");
  if (m == 0 || n == 0 || m > kMaxDim || n > kMaxDim)
    throw FormatError("dataset record dimensions out of range: " + std::to_string(m) +
                      "x" + std::to_string(n));

  ProblemInstance inst;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a_row(m, n);
  read_f64(in, a_row.data(), static_cast<std::size_t>(a_row.size()), "a");
  inst.a = a_row;
  inst.x_true.resize(n);
  read_f64(in, inst.x_true.data(), n, "x_true");
  inst.y.resize(m);
  read_f64(in, inst.y.data(), m, "y");
  double scalars[3];
  read_f64(in, scalars, 3, "scalars");
  inst.beta_true = scalars[0];
  inst.snr_db = scalars[1];
  inst.rho = scalars[2];
  return inst;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " +
                        ec.message());

  const DatasetSpec& spec = dataset.spec;
  {
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
    manifest << "format_version=" << kDatasetFormatVersion << '\n'
             << "m=" << spec.m << '\n'
             << "n=" << spec.n << '\n'
             << "snr_grid=" << join_grid(spec.snr_grid) << '\n'
             << "rho_grid=" << join_grid(spec.rho_grid) << '\n'
             << "total_count=" << spec.total_count << '\n'
             << "matrix_kind=" << format_matrix_kind(spec.matrix_kind) << '\n'
             << "fresh_matrix_per_sample=" << (spec.fresh_matrix_per_sample ? 1 : 0)
             << '\n'
             << "seed=" << spec.seed << '\n'
             << "train_fraction=" << format_double(spec.train_fraction) << '\n'
             << "validation_fraction=" << format_double(spec.validation_fraction) << '\n'
             << "split_train=" << dataset.train_indices.size() << '\n'
             << "split_validation=" << dataset.validation_indices.size() << '\n'
             << "split_test=" << dataset.test_indices.size() << '\n';
    if (!manifest) throw IoError("failed writing " + (dir / "manifest.txt").string());
  }

  std::ofstream records(dir / "records.sbld", std::ios::binary);
  if (!records) throw IoError("cannot write " + (dir / "records.sbld").string());
  for (const ProblemInstance& inst : dataset.instances)
    write_instance_record(records, inst);
  if (!records) throw IoError("failed writing " + (dir / "records.sbld").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  auto kv = read_manifest(dir / "manifest.txt");
  unsigned long version = 0;
  try {
    version = std::stoul(manifest_get(kv, "format_version"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError("invalid dataset manifest format_version");
  }
  if (version != kDatasetFormatVersion)
    throw FormatError("unsupported dataset format version " + std::to_string(version));

  Dataset ds;
  DatasetSpec& spec = ds.spec;
  try {
    spec.m = std::stoi(manifest_get(kv, "m"));
    spec.n = std::stoi(manifest_get(kv, "n"));
    spec.snr_grid = parse_grid(manifest_get(kv, "snr_grid"));
    spec.rho_grid = parse_grid(manifest_get(kv, "rho_grid"));
    spec.total_count = std::stoi(manifest_get(kv, "total_count"));
    spec.matrix_kind = parse_matrix_kind(manifest_get(kv, "matrix_kind"));
    spec.fresh_matrix_per_sample = manifest_get(kv, "fresh_matrix_per_sample") != "0";
    spec.seed = std::stoull(manifest_get(kv, "seed"));
    spec.train_fraction = std::stod(manifest_get(kv, "train_fraction"));
    spec.validation_fraction = std::stod(manifest_get(kv, "validation_fraction"));
    spec.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError("invalid dataset manifest " + (dir / "manifest.txt").string() +
                      ": " + e.what());
  }

  std::ifstream records(dir / "records.sbld", std::ios::binary);
  if (!records) throw IoError("cannot open " + (dir / "records.sbld").string());
  ds.instances.reserve(spec.total_count);
  for (int k = 0; k < spec.total_count; ++k) {
    ProblemInstance inst = read_instance_record(records);
    if (inst.m() != spec.m || inst.n() != spec.n)
      throw FormatError("record " + std::to_string(k) + " is " +
                        std::to_string(inst.m()) + "x" + std::to_string(inst.n()) +
                        " but manifest says " + std::to_string(spec.m) + "x" +
                        std::to_string(spec.n));
    inst.matrix_kind = spec.matrix_kind;
    inst.seed = dataset_instance_seed(spec, static_cast<std::size_t>(k));
    ds.instances.push_back(std::move(inst));
  }

  SplitIndices split = compute_split(spec.total_count, spec.train_fraction,
                                     spec.validation_fraction, spec.seed);
  ds.train_indices = std::move(split.train);
  ds.validation_indices = std::move(split.validation);
  ds.test_indices = std::move(split.test);
  return ds;
}

}  // namespace sblkit
