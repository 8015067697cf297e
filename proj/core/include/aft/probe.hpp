// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aft/matrix.hpp"

namespace aft {

struct ProbeOptions {
  double l2_penalty = 1e-4;
  std::size_t max_iters = 5000;
  double tol = 1e-7;
  /// 0 starts from all-zero weights; any other value draws a small random init.
  std::uint64_t init_seed = 0;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

/// Multinomial logistic regression on frozen features.
///
/// Minimises mean cross-entropy + (l2_penalty / 2) * |W|^2 (bias unpenalised)
/// over the training rows by full-batch gradient descent with Armijo
/// backtracking, until the gradient norm drops to `tol` or `max_iters` is hit.
ProbeResult linear_probe(const Matrix& features, std::span<const std::uint32_t> labels,
                         std::uint32_t n_classes, std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> test_rows, const ProbeOptions& options = {});

}  // namespace aft
