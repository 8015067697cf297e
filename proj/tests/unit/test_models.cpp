// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "aft/errors.hpp"
#include "aft/models.hpp"
#include "test_support.hpp"

namespace aft {
namespace {

using testing::uniform_matrix;

TEST(Forward, IdentityExtractorZeroHeadGivesZeroLogits) {
  const Extractor ext = Extractor::linear_identity(3, 3);
  LinearHead head;
  head.weight = Matrix(4, 3);
  head.bias = Matrix(1, 4);
  Rng rng(1);
  const Matrix x = uniform_matrix(5, 3, rng);
  EXPECT_EQ(ext.forward(x), x);
  EXPECT_EQ(head.forward(ext.forward(x)), Matrix(5, 4));
}

TEST(Forward, ZeroWeightMlpOutputsActivationOfZero) {
  for (Activation act : {Activation::tanh, Activation::relu}) {
    Extractor ext({ExtractorKind::mlp, {6}, 4, act}, 3, 1);
    for (auto& w : ext.weights()) w = Matrix(w.rows(), w.cols());
    ext.biases()[1] = Matrix::from_rows({{0.5, -0.5, 0.0, 2.0}});
    const Matrix phi = ext.forward(Matrix::from_rows({{1, 2, 3}}));
    const Matrix expected = activate(Matrix::from_rows({{0.5, -0.5, 0.0, 2.0}}), act);
    EXPECT_EQ(phi, expected);
  }
}

TEST(Forward, MatchesExplicitLoops) {
  Extractor ext({ExtractorKind::mlp, {5, 4}, 3, Activation::tanh}, 2, 7);
  Rng rng(2);
  const Matrix x = uniform_matrix(6, 2, rng);
  std::vector<std::vector<double>> h(6);
  for (std::size_t i = 0; i < 6; ++i) h[i] = {x(i, 0), x(i, 1)};
  for (std::size_t l = 0; l < ext.n_layers(); ++l) {
    const Matrix& w = ext.weights()[l];
    const Matrix& b = ext.biases()[l];
    for (auto& row : h) {
      std::vector<double> next(w.rows());
      for (std::size_t o = 0; o < w.rows(); ++o) {
        double z = b(0, o);
        for (std::size_t k = 0; k < w.cols(); ++k) z += w(o, k) * row[k];
        next[o] = std::tanh(z);
      }
      row = next;
    }
  }
  const Matrix phi = ext.forward(x);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(phi(i, j), h[i][j], 1e-14);

  ad::Tape tape;
  const Matrix taped = ext.forward(tape, tape.constant(x)).value();
  EXPECT_EQ(taped, phi);
}

TEST(Forward, InitVarianceIsInverseFanIn) {
  Extractor ext({ExtractorKind::mlp, {400}, 300, Activation::tanh}, 200, 3);
  double ss = 0.0;
  for (double v : ext.weights()[0].data()) ss += v * v;
  const double var = ss / static_cast<double>(ext.weights()[0].size());
  EXPECT_NEAR(var, 1.0 / 200.0, 0.05 / 200.0);
}

TEST(Forward, DeterministicAndShapeChecked) {
  const Extractor a({ExtractorKind::mlp, {8}, 4, Activation::tanh}, 3, 9);
  const Extractor b({ExtractorKind::mlp, {8}, 4, Activation::tanh}, 3, 9);
  Rng rng(4);
  const Matrix x = uniform_matrix(5, 3, rng);
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_THROW(a.forward(Matrix(5, 4)), DimensionError);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  const std::uint32_t y[] = {0, 1, 2, 0};
  EXPECT_NEAR(cross_entropy(Matrix(4, 3, 0.0), y), std::log(3.0), 1e-15);
}

TEST(CrossEntropy, HugeCorrectMarginGivesZero) {
  const std::uint32_t y[] = {1};
  EXPECT_NEAR(cross_entropy(Matrix::from_rows({{0.0, 1000.0, -1000.0}}), y), 0.0, 1e-15);
}

TEST(CrossEntropy, MatchesLogSumExpReference) {
  Rng rng(5);
  const Matrix z = uniform_matrix(4, 3, rng, -3, 3);
  const std::uint32_t y[] = {2, 0, 1, 1};
  double ref = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += std::exp(z(i, c));
    ref += std::log(s) - z(i, y[i]);
  }
  EXPECT_NEAR(cross_entropy(z, y), ref / 4.0, 1e-14);
}

TEST(CrossEntropy, GradientThroughModelMatchesFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    Extractor ext({ExtractorKind::mlp, {5}, 3, Activation::tanh}, 4, trial);
    LinearHead head(3, 3, 100 + trial);
    Rng rng(trial);
    const Matrix x = uniform_matrix(6, 4, rng);
    const std::uint32_t y[] = {0, 1, 2, 2, 1, 0};
    testing::Params p;
    for (auto& [name, m] : ext.trainable()) p.emplace(name, *m);
    for (auto& [name, m] : head.trainable()) p.emplace(name, *m);
    auto f = [&](ad::Tape& tape, const testing::Params& q) {
      Extractor e = ext;
      LinearHead h = head;
      for (auto& [name, m] : e.trainable()) *m = q.at(name);
      for (auto& [name, m] : h.trainable()) *m = q.at(name);
      const auto out = forward(tape, e, h, tape.constant(x));
      return ad::softmax_cross_entropy(out.logits, y);
    };
    const auto r = testing::check_gradients(f, p);
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(Accuracy, CountsArgmaxHits) {
  const std::uint32_t y[] = {0, 1, 1};
  EXPECT_NEAR(accuracy(Matrix::from_rows({{2, 1}, {0, 3}, {5, 4}}), y), 2.0 / 3.0, 1e-15);
}

TEST(TensorProduct, BasisVectors) {
  const std::vector<double> e1{1, 0}, e2{0, 1, 0};
  const auto t = tensor_product_features(e1, e2);
  ASSERT_EQ(t.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(t[i], i == 1 ? 1.0 : 0.0);
}

TEST(TensorProduct, ZeroAnnihilates) {
  const std::vector<double> a{1.5, -2}, z{0, 0};
  for (double v : tensor_product_features(a, z)) EXPECT_EQ(v, 0.0);
}

TEST(TensorProduct, HandMultiplication) {
  const std::vector<double> a{1, 2}, b{3, 4, 5};
  EXPECT_EQ(tensor_product_features(a, b), (std::vector<double>{3, 4, 5, 6, 8, 10}));
}

TEST(TensorProduct, BilinearInEachArgument) {
  Rng rng(6);
  auto vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
    return v;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const auto a1 = vec(3), a2 = vec(3), b1 = vec(4), b2 = vec(4);
    const double s = 2.0 * rng.uniform() - 1.0, t = 2.0 * rng.uniform() - 1.0;
    std::vector<double> a(3), b(4);
    for (std::size_t i = 0; i < 3; ++i) a[i] = s * a1[i] + t * a2[i];
    for (std::size_t j = 0; j < 4; ++j) b[j] = s * b1[j] + t * b2[j];
    const auto left = tensor_product_features(a, b1);
    const auto l1 = tensor_product_features(a1, b1), l2 = tensor_product_features(a2, b1);
    const auto right = tensor_product_features(a1, b);
    const auto r2 = tensor_product_features(a1, b2);
    for (std::size_t k = 0; k < 12; ++k) {
      EXPECT_NEAR(left[k], s * l1[k] + t * l2[k], 1e-12);
      EXPECT_NEAR(right[k], s * l1[k] + t * r2[k], 1e-12);
    }
  }
}

TEST(TensorProduct, RowWiseMatrixForm) {
  const Matrix a = Matrix::from_rows({{1, 2}, {0, 1}});
  const Matrix b = Matrix::from_rows({{3, 4, 5}, {1, 1, 1}});
  EXPECT_EQ(tensor_product_features(a, b), Matrix::from_rows({{3, 4, 5, 6, 8, 10}, {0, 0, 0, 1, 1, 1}}));
}

}  // namespace
}  // namespace aft
