// SPDX-License-Identifier: Apache-2.0

#include "aft/feature_store.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "aft/errors.hpp"

namespace aft {

namespace {

constexpr char kFeatureMagic[4] = {'A', 'F', 'T', 'F'};
constexpr char kLabelMagic[4] = {'A', 'F', 'T', 'L'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

std::string at(const std::filesystem::path& path, std::size_t offset) {
  return path.string() + " at byte offset " + std::to_string(offset);
}

FileHeader parse_header(const std::vector<std::uint8_t>& bytes, const char (&magic)[4],
                        const std::filesystem::path& path) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("truncated header in " + at(path, bytes.size()));
  }
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw FormatError("bad magic in " + at(path, 0) + ", expected '" + std::string(magic, 4) + "'");
  }
  FileHeader h;
  h.version = get_u32(bytes.data() + 4);
  if (h.version != kFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(h.version) + " in " + at(path, 4));
  }
  h.n_rows = get_u64(bytes.data() + 8);
  h.n_cols = get_u32(bytes.data() + 16);
  return h;
}

void check_payload_size(const std::vector<std::uint8_t>& bytes, std::uint64_t expected_payload,
                        const std::filesystem::path& path) {
  const std::uint64_t expected = kHeaderBytes + expected_payload;
  if (bytes.size() < expected) {
    throw FormatError("truncated payload: expected " + std::to_string(expected) +
                      " bytes, file ends in " + at(path, bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError("trailing bytes after payload in " + at(path, expected));
  }
}

FileHeader read_header_only(const std::filesystem::path& path, const char (&magic)[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> head(kHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), kHeaderBytes);
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(head, magic, path);
}

}  // namespace

void write_features(const Matrix& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kHeaderBytes + 4 * m.size());
  bytes.insert(bytes.end(), kFeatureMagic, kFeatureMagic + 4);
  put_u32(bytes, kFormatVersion);
  put_u64(bytes, m.rows());
  put_u32(bytes, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) {
      throw InputError("write_features: non-finite value for " + path.string());
    }
    put_u32(bytes, std::bit_cast<std::uint32_t>(f));
  }
  write_all(bytes, path);
}

FileHeader read_feature_header(const std::filesystem::path& path) {
  return read_header_only(path, kFeatureMagic);
}

Matrix read_features(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const FileHeader h = parse_header(bytes, kFeatureMagic, path);
  check_payload_size(bytes, 4 * h.n_rows * h.n_cols, path);
  Matrix m(h.n_rows, h.n_cols);
  auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t offset = kHeaderBytes + 4 * i;
    const float f = std::bit_cast<float>(get_u32(bytes.data() + offset));
    if (!std::isfinite(f)) throw FormatError("non-finite value in " + at(path, offset));
    data[i] = f;
  }
  return m;
}

void write_labels(const Labels& labels, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(kHeaderBytes + 4 * labels.values.size());
  bytes.insert(bytes.end(), kLabelMagic, kLabelMagic + 4);
  put_u32(bytes, kFormatVersion);
  put_u64(bytes, labels.values.size());
  put_u32(bytes, labels.n_classes);
  for (std::uint32_t y : labels.values) {
    if (y >= labels.n_classes) throw InputError("write_labels: label out of range");
    put_u32(bytes, y);
  }
  write_all(bytes, path);
}

FileHeader read_label_header(const std::filesystem::path& path) {
  return read_header_only(path, kLabelMagic);
}

Labels read_labels(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const FileHeader h = parse_header(bytes, kLabelMagic, path);
  check_payload_size(bytes, 4 * h.n_rows, path);
  Labels labels;
  labels.n_classes = h.n_cols;
  labels.values.resize(h.n_rows);
  for (std::size_t i = 0; i < h.n_rows; ++i) {
    const std::size_t offset = kHeaderBytes + 4 * i;
    const std::uint32_t y = get_u32(bytes.data() + offset);
    if (y >= labels.n_classes) {
      throw FormatError("label " + std::to_string(y) + " >= n_classes in " + at(path, offset));
    }
    labels.values[i] = y;
  }
  return labels;
}

ConcatenatedFeatures concat_sources(std::span<const std::filesystem::path> files) {
  ConcatenatedFeatures out;
  if (files.empty()) return out;
  std::vector<Matrix> parts;
  for (const auto& f : files) parts.push_back(read_features(f));
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].rows() != parts[0].rows()) {
      throw ManifestError("row-count mismatch: " + files[0].string() + " has " +
                          std::to_string(parts[0].rows()) + " rows, " + files[i].string() +
                          " has " + std::to_string(parts[i].rows()));
    }
  }
  out.features = parts[0];
  out.source_dims.push_back(parts[0].cols());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out.features = hstack(out.features, parts[i]);
    out.source_dims.push_back(parts[i].cols());
  }
  return out;
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace aft
