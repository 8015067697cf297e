// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "aft/matrix.hpp"
#include "aft/rng.hpp"

namespace aft {

struct SyntheticSpec {
  std::size_t n_examples = 1000;
  std::size_t d_signal = 8;
  std::size_t d_distractor = 8;
  std::size_t d_noise = 0;
  std::size_t n_classes = 4;
  double label_temperature = 1.0;
  std::uint64_t seed = 0;

  /// Throws UsageError for empty or inconsistent settings.
  void validate() const;
};

/// Planted classification task.
///
/// psi columns are [signal | distractor | noise], all i.i.d. standard normal.
/// Labels are sampled from softmax(signal * C / temperature) for a random
/// d_signal x n_classes matrix C. Inputs are [signal | distractor] times an
/// invertible random mixing, so the input determines every non-noise column
/// of psi. Noise columns are independent of everything else.
struct SyntheticData {
  Matrix psi;
  Matrix inputs;
  std::vector<std::uint32_t> labels;
  Matrix class_directions;  // d_signal x n_classes
  Matrix mixing;            // (d_signal + d_distractor) square, inputs = [s|d] * mixing
};

SyntheticData synth_planted(const SyntheticSpec& spec);

/// [psi | G] with G i.i.d. standard normal, n x d_noise, drawn from `seed`.
Matrix append_noise_features(const Matrix& psi, std::size_t d_noise, std::uint64_t seed);

/// Haar-ish random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
Matrix random_orthogonal(std::size_t n, Rng& rng);

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace aft
