// SPDX-License-Identifier: Apache-2.0

#include "aft/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "aft/errors.hpp"

namespace aft {

namespace {

enum Stream : std::uint64_t { kLatent = 0, kLabels = 1, kNoise = 2, kStructure = 3 };

}  // namespace

void SyntheticSpec::validate() const {
  if (n_examples < 1) throw UsageError("SyntheticSpec: n_examples must be >= 1");
  if (n_classes < 2) throw UsageError("SyntheticSpec: n_classes must be >= 2");
  if (d_signal < 1) throw UsageError("SyntheticSpec: d_signal must be >= 1");
  if (!(label_temperature > 0.0) || !std::isfinite(label_temperature)) {
    throw UsageError("SyntheticSpec: label_temperature must be positive");
  }
}

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
  Matrix q = random_normal(n, n, rng);
  // Modified Gram-Schmidt over columns.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw InputError("random_orthogonal: degenerate draw");
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

SyntheticData synth_planted(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_examples;
  const std::size_t d_in = spec.d_signal + spec.d_distractor;

  SyntheticData out;
  Rng structure(derive_seed(spec.seed, kStructure));
  out.class_directions = random_normal(spec.d_signal, spec.n_classes, structure);
  // Orthogonal rotation followed by per-axis stretch in [0.5, 2].
  Matrix rotation = random_orthogonal(d_in, structure);
  std::vector<double> stretch(d_in);
  for (double& s : stretch) s = 0.5 + 1.5 * structure.uniform();
  out.mixing = scale_columns(rotation, stretch);

  Rng latent_rng(derive_seed(spec.seed, kLatent));
  Matrix latent = random_normal(n, d_in, latent_rng);
  out.inputs = matmul(latent, out.mixing);

  Rng label_rng(derive_seed(spec.seed, kLabels));
  out.labels.resize(n);
  std::vector<double> logits(spec.n_classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      double z = 0.0;
      for (std::size_t k = 0; k < spec.d_signal; ++k) z += latent(i, k) * out.class_directions(k, c);
      logits[c] = z / spec.label_temperature;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& z : logits) {
      z = std::exp(z - m);
      total += z;
    }
    const double u = label_rng.uniform() * total;
    double acc = 0.0;
    std::uint32_t label = static_cast<std::uint32_t>(spec.n_classes - 1);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      acc += logits[c];
      if (u < acc) {
        label = static_cast<std::uint32_t>(c);
        break;
      }
    }
    out.labels[i] = label;
  }

  out.psi = append_noise_features(latent, spec.d_noise, derive_seed(spec.seed, kNoise));
  return out;
}

Matrix append_noise_features(const Matrix& psi, std::size_t d_noise, std::uint64_t seed) {
  if (d_noise == 0) return psi;
  Rng rng(seed);
  return hstack(psi, random_normal(psi.rows(), d_noise, rng));
}

}  // namespace aft
