// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "aft/matrix.hpp"
#include "aft/tape.hpp"

namespace aft {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Matrix first;
  Matrix second;
};

/// One bias-corrected Adam update. `step` is 1-based.
void adam_update(Matrix& param, const Matrix& grad, AdamMoments& moments, double lr,
                 std::size_t step, const AdamConfig& config = {});

/// Named, non-owning view of trainable tensors.
using ParamRefs = std::vector<std::pair<std::string, Matrix*>>;

/// Adam over a fixed group of named parameters with its own step counter.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update to every parameter in `params` using `grads[name]`.
  void step(const ParamRefs& params, const ad::Gradients& grads, double lr);

  std::size_t steps_taken() const { return steps_; }
  const std::map<std::string, AdamMoments>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

enum class Schedule { cosine_to_zero, constant };

std::string to_string(Schedule schedule);
Schedule parse_schedule(const std::string& name);

/// 0.5 * (1 + cos(pi * step / total)): 1 at step 0, 0 at step == total.
double cosine_multiplier(std::size_t step, std::size_t total);
double schedule_multiplier(Schedule schedule, std::size_t step, std::size_t total);

}  // namespace aft
