// SPDX-License-Identifier: Apache-2.0

#include "aft/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aft/errors.hpp"

namespace aft {

void adam_update(Matrix& param, const Matrix& grad, AdamMoments& moments, double lr,
                 std::size_t step, const AdamConfig& config) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw DimensionError("adam_update: gradient " + grad.shape_string() + " for parameter " +
                         param.shape_string());
  }
  if (step == 0) throw UsageError("adam_update: step is 1-based");
  if (moments.first.rows() != param.rows() || moments.first.cols() != param.cols()) {
    moments.first = Matrix(param.rows(), param.cols());
    moments.second = Matrix(param.rows(), param.cols());
  }
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  auto p = param.data();
  auto g = grad.data();
  auto m = moments.first.data();
  auto v = moments.second.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void Adam::step(const ParamRefs& params, const ad::Gradients& grads, double lr) {
  ++steps_;
  for (const auto& [name, param] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw UsageError("Adam::step: no gradient for '" + name + "'");
    adam_update(*param, it->second, moments_[name], lr, steps_, config_);
  }
}

double cosine_multiplier(std::size_t step, std::size_t total) {
  if (total == 0) return 1.0;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double schedule_multiplier(Schedule schedule, std::size_t step, std::size_t total) {
  return schedule == Schedule::constant ? 1.0 : cosine_multiplier(step, total);
}

std::string to_string(Schedule schedule) {
  return schedule == Schedule::constant ? "constant" : "cosine_to_zero";
}

Schedule parse_schedule(const std::string& name) {
  if (name == "cosine_to_zero" || name == "cosine") return Schedule::cosine_to_zero;
  if (name == "constant") return Schedule::constant;
  throw UsageError("unknown schedule '" + name + "' (valid: cosine_to_zero, constant)");
}

}  // namespace aft
