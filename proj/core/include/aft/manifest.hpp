// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aft/matrix.hpp"

namespace aft {

/// Row indices of each named split. All three are sorted and pairwise disjoint.
struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
  std::vector<std::size_t> test;

  /// train and holdout together: the full training set.
  std::vector<std::size_t> full_train() const;
};

/// JSON manifest:
///   {
///     "inputs": "inputs.aftf",
///     "pretrained": ["a.aftf", "b.aftf"],
///     "labels": "labels.aftl",
///     "splits": {"train": [...] | {"begin": b, "end": e}, "holdout": ..., "test": ...}
///   }
/// Relative paths resolve against the manifest's directory.
struct Manifest {
  std::filesystem::path inputs;
  std::vector<std::filesystem::path> pretrained;
  std::filesystem::path labels;
  Splits splits;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Checks that every referenced file exists, has a valid header, and that all
/// row counts agree; checks split disjointness and range. Returns n_rows.
std::size_t validate_manifest(const Manifest& manifest);

/// Train pool = the first n - n_test rows, test = the rest; holdout = every
/// 10th index of a seeded shuffle of the train pool (10% of training data).
Splits make_splits(std::size_t n, double test_fraction, std::uint64_t seed);

/// In-memory view of a manifest.
struct Dataset {
  Matrix inputs;
  Matrix pretrained;                     // sources concatenated in manifest order
  std::vector<std::size_t> source_dims;  // columns per pretrained source
  std::vector<std::uint32_t> labels;
  std::uint32_t n_classes = 0;
  Splits splits;

  std::size_t n_rows() const { return inputs.rows(); }
};

Dataset load_dataset(const std::filesystem::path& manifest_path);
Dataset load_dataset(const Manifest& manifest);

}  // namespace aft
