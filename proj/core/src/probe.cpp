// SPDX-License-Identifier: Apache-2.0

#include "aft/probe.hpp"

#include <algorithm>
#include <cmath>

#include "aft/errors.hpp"
#include "aft/rng.hpp"

namespace aft {

namespace {

struct Problem {
  const Matrix& x;  // n x d
  std::vector<std::uint32_t> y;
  std::size_t k;
  double lambda;
};

// Parameters packed as [W (k x d) | b (k)].
double objective(const Problem& p, const std::vector<double>& theta, std::vector<double>* grad) {
  const std::size_t n = p.x.rows();
  const std::size_t d = p.x.cols();
  const std::size_t k = p.k;
  const double* w = theta.data();
  const double* b = theta.data() + k * d;
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  std::vector<double> z(k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = p.x.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      double s = b[c];
      const double* wc = w + c * d;
      for (std::size_t j = 0; j < d; ++j) s += wc[j] * xi[j];
      z[c] = s;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double& v : z) {
      v = std::exp(v - m);
      denom += v;
    }
    loss += std::log(denom) - std::log(z[p.y[i]]);
    if (!grad) continue;
    for (std::size_t c = 0; c < k; ++c) {
      const double r = (z[c] / denom - (c == p.y[i] ? 1.0 : 0.0)) / static_cast<double>(n);
      double* gc = grad->data() + c * d;
      for (std::size_t j = 0; j < d; ++j) gc[j] += r * xi[j];
      (*grad)[k * d + c] += r;
    }
  }
  loss /= static_cast<double>(n);
  double reg = 0.0;
  for (std::size_t i = 0; i < k * d; ++i) {
    reg += w[i] * w[i];
    if (grad) (*grad)[i] += p.lambda * w[i];
  }
  return loss + 0.5 * p.lambda * reg;
}

double predict_accuracy(const Matrix& x, std::span<const std::uint32_t> labels,
                        std::span<const std::size_t> rows, const std::vector<double>& theta,
                        std::size_t k) {
  if (rows.empty()) return 0.0;
  const std::size_t d = x.cols();
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    auto xi = x.row(r);
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      double s = theta[k * d + c];
      for (std::size_t j = 0; j < d; ++j) s += theta[c * d + j] * xi[j];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    if (best == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

ProbeResult linear_probe(const Matrix& features, std::span<const std::uint32_t> labels,
                         std::uint32_t n_classes, std::span<const std::size_t> train_rows,
                         std::span<const std::size_t> test_rows, const ProbeOptions& options) {
  if (!all_finite(features)) throw InputError("linear_probe: non-finite features");
  if (labels.size() != features.rows()) throw DimensionError("linear_probe: label count mismatch");
  if (train_rows.empty()) throw InputError("linear_probe: empty training split");
  if (n_classes < 2) throw InputError("linear_probe: need at least 2 classes");

  const Matrix x = select_rows(features, train_rows);
  Problem p{x, {}, n_classes, options.l2_penalty};
  for (std::size_t r : train_rows) p.y.push_back(labels[r]);

  const std::size_t d = features.cols();
  const std::size_t dim = n_classes * d + n_classes;
  std::vector<double> theta(dim, 0.0);
  if (options.init_seed != 0) {
    Rng rng(options.init_seed);
    for (double& t : theta) t = 0.1 * rng.normal();
  }
  std::vector<double> grad(dim);
  std::vector<double> trial(dim);

  ProbeResult result;
  double f = objective(p, theta, &grad);
  double step = 1.0;
  std::size_t iter = 0;
  for (; iter < options.max_iters; ++iter) {
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    result.gradient_norm = std::sqrt(gnorm2);
    if (result.gradient_norm <= options.tol) break;
    step = std::min(step * 2.0, 1e6);
    double f_trial = 0.0;
    while (true) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = theta[i] - step * grad[i];
      f_trial = objective(p, trial, nullptr);
      if (f_trial <= f - 0.5 * step * gnorm2 || step < 1e-12) break;
      step *= 0.5;
    }
    if (!(f_trial < f)) break;  // no further progress possible at machine precision
    theta.swap(trial);
    f = objective(p, theta, &grad);
  }
  result.iterations = iter;
  result.final_loss = f;
  result.train_accuracy = predict_accuracy(features, labels, train_rows, theta, n_classes);
  result.test_accuracy = predict_accuracy(features, labels, test_rows, theta, n_classes);
  return result;
}

}  // namespace aft
