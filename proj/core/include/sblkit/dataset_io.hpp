#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "sblkit/problem.hpp"

namespace sblkit {

/// On-disk dataset layout: a directory holding
///   manifest.txt  — key=value lines (dimensions, grids, counts, seed, split)
///   records.sbld  — one self-delimiting binary record per instance:
///                   "SBLD" magic, u32 version, u32 m, u32 n, then
///                   little-endian f64: a (row-major), x_true, y,
///                   beta_true, snr_db, rho.
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void write_instance_record(std::ostream& out, const ProblemInstance& inst);

/// Reads one record. seed and matrix_kind are not part of the record; the
/// caller fills them from the manifest. Throws FormatError on bad magic,
/// version mismatch, dimension overflow, or truncation.
ProblemInstance read_instance_record(std::istream& in);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

Dataset load_dataset(const std::filesystem::path& dir);

std::string format_matrix_kind(const MatrixKind& kind);
MatrixKind parse_matrix_kind(const std::string& text);

}  // namespace sblkit
