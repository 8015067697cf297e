// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "aft/errors.hpp"
#include "aft/manifest.hpp"
#include "aft/probe.hpp"
#include "aft/synthetic.hpp"
#include "test_support.hpp"

namespace aft {
namespace {

TEST(SynthPlanted, ColumnLayoutAndShapes) {
  SyntheticSpec spec{200, 3, 2, 5, 4, 1.0, 1};
  const auto d = synth_planted(spec);
  EXPECT_EQ(d.psi.rows(), 200u);
  EXPECT_EQ(d.psi.cols(), 10u);
  EXPECT_EQ(d.inputs.cols(), 5u);
  EXPECT_EQ(d.labels.size(), 200u);
  for (auto y : d.labels) EXPECT_LT(y, 4u);
  // inputs are the non-noise psi columns under the recorded mixing
  const std::vector<std::size_t> latent_cols{0, 1, 2, 3, 4};
  EXPECT_LE(max_abs_diff(matmul(select_cols(d.psi, latent_cols), d.mixing), d.inputs), 1e-12);
}

TEST(SynthPlanted, MixingIsInvertible) {
  const auto d = synth_planted({50, 4, 4, 0, 3, 1.0, 2});
  Eigen::FullPivLU<Eigen::MatrixXd> lu(testing::to_eigen(d.mixing));
  EXPECT_TRUE(lu.isInvertible());
}

TEST(SynthPlanted, NoNoiseMeansSignalPlusDistractorColumns) {
  const auto d = synth_planted({100, 8, 8, 0, 4, 1.0, 3});
  EXPECT_EQ(d.psi.cols(), 16u);
}

TEST(SynthPlanted, ZeroTemperatureGivesArgmaxLabels) {
  SyntheticSpec spec{300, 4, 2, 0, 5, 1e-9, 4};
  const auto d = synth_planted(spec);
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    std::size_t best = 0;
    double best_z = -1e300;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      double z = 0.0;
      for (std::size_t k = 0; k < spec.d_signal; ++k) z += d.psi(i, k) * d.class_directions(k, c);
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    EXPECT_EQ(d.labels[i], best) << "row " << i;
  }
}

TEST(SynthPlanted, SameSeedIsBitIdentical) {
  SyntheticSpec spec{500, 8, 8, 32, 4, 1.0, 7};
  const auto a = synth_planted(spec), b = synth_planted(spec);
  EXPECT_EQ(a.psi, b.psi);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 8;
  EXPECT_NE(synth_planted(spec).psi, a.psi);
}

TEST(SynthPlanted, NoiseColumnsAreUncorrelatedWithLabels) {
  SyntheticSpec spec{1000, 8, 8, 32, 4, 1.0, 7};
  const auto d = synth_planted(spec);
  const double n = static_cast<double>(spec.n_examples);
  for (std::size_t j = 16; j < 48; ++j) {
    for (std::uint32_t c = 0; c < 4; ++c) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < spec.n_examples; ++i) {
        mx += d.psi(i, j);
        my += d.labels[i] == c ? 1.0 : 0.0;
      }
      mx /= n;
      my /= n;
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < spec.n_examples; ++i) {
        const double dx = d.psi(i, j) - mx, dy = (d.labels[i] == c ? 1.0 : 0.0) - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
      }
      EXPECT_LE(std::abs(sxy / std::sqrt(sxx * syy)), 0.15) << "column " << j << " class " << c;
    }
  }
}

TEST(SynthPlanted, SignalBeatsNoiseUnderALinearProbe) {
  SyntheticSpec spec{1200, 8, 8, 8, 4, 1.0, 5};
  const auto d = synth_planted(spec);
  const Splits s = make_splits(spec.n_examples, 0.5, 5);
  const auto train = s.full_train();
  std::vector<std::size_t> sig(8), noise(8);
  for (std::size_t k = 0; k < 8; ++k) {
    sig[k] = k;
    noise[k] = 16 + k;
  }
  const auto rs = linear_probe(select_cols(d.psi, sig), d.labels, 4, train, s.test);
  const auto rn = linear_probe(select_cols(d.psi, noise), d.labels, 4, train, s.test);
  EXPECT_GT(rs.test_accuracy, rn.test_accuracy);
  // chance is the majority-class rate on the test split
  std::vector<double> counts(4, 0.0);
  for (auto i : s.test) counts[d.labels[i]] += 1.0;
  const double chance = *std::max_element(counts.begin(), counts.end()) / static_cast<double>(s.test.size());
  EXPECT_LE(std::abs(rn.test_accuracy - chance), 0.03)
      << "noise probe " << rn.test_accuracy << " chance " << chance;
}

TEST(SynthPlanted, InvalidSpecsAreUsageErrors) {
  EXPECT_THROW(synth_planted({0, 8, 8, 0, 4, 1.0, 0}), UsageError);
  EXPECT_THROW(synth_planted({10, 0, 8, 0, 4, 1.0, 0}), UsageError);
  EXPECT_THROW(synth_planted({10, 8, 8, 0, 1, 1.0, 0}), UsageError);
  EXPECT_THROW(synth_planted({10, 8, 8, 0, 4, 0.0, 0}), UsageError);
}

TEST(AppendNoise, ZeroIsIdentity) {
  Rng rng(1);
  const Matrix psi = testing::uniform_matrix(5, 3, rng);
  EXPECT_EQ(append_noise_features(psi, 0, 9), psi);
}

TEST(AppendNoise, ShapeAndPrefix) {
  Rng rng(2);
  const Matrix psi = testing::uniform_matrix(10, 4, rng);
  const Matrix out = append_noise_features(psi, 6, 3);
  EXPECT_EQ(out.rows(), 10u);
  EXPECT_EQ(out.cols(), 10u);
  const std::vector<std::size_t> first{0, 1, 2, 3};
  EXPECT_EQ(select_cols(out, first), psi);
}

TEST(AppendNoise, SampleMeanWithinCltBound) {
  const Matrix out = append_noise_features(Matrix(10, 4), 6, 11);
  double s = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 4; j < 10; ++j) s += out(i, j);
  EXPECT_LE(std::abs(s / 60.0), 4.0 / std::sqrt(60.0));
}

}  // namespace
}  // namespace aft
