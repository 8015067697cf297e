// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary feature and label files.
//
// FeatureFile (little-endian):
//   offset 0   char[4]  "AFTF"
//   offset 4   u32      version (= 1)
//   offset 8   u64      n_rows
//   offset 16  u32      n_cols
//   offset 20  f32[n_rows * n_cols], row-major
//
// LabelFile (little-endian):
//   offset 0   char[4]  "AFTL"
//   offset 4   u32      version (= 1)
//   offset 8   u64      n_rows
//   offset 16  u32      n_classes
//   offset 20  u32[n_rows] class indices, each < n_classes

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "aft/matrix.hpp"

namespace aft {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;

struct Labels {
  std::vector<std::uint32_t> values;
  std::uint32_t n_classes = 0;
};

struct FileHeader {
  std::uint32_t version = 0;
  std::uint64_t n_rows = 0;
  std::uint32_t n_cols = 0;  // n_classes for label files
};

/// Stores the matrix as 32-bit floats. Throws InputError on non-finite values.
void write_features(const Matrix& m, const std::filesystem::path& path);
Matrix read_features(const std::filesystem::path& path);
FileHeader read_feature_header(const std::filesystem::path& path);

void write_labels(const Labels& labels, const std::filesystem::path& path);
Labels read_labels(const std::filesystem::path& path);
FileHeader read_label_header(const std::filesystem::path& path);

/// Concatenation of several feature sources along columns, in the given order.
struct ConcatenatedFeatures {
  Matrix features;
  std::vector<std::size_t> source_dims;
};

ConcatenatedFeatures concat_sources(std::span<const std::filesystem::path> files);

/// CRC-32 (zlib polynomial) of a file's bytes.
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace aft
