// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "aft/errors.hpp"
#include "aft/regularizers.hpp"
#include "test_support.hpp"

namespace aft {
namespace {

using testing::check_gradients;
using testing::gaussian_matrix;
using testing::least_squares_residual;
using testing::Params;
using testing::to_eigen;
using testing::uniform_matrix;

// ---- independent reference implementations (explicit loops) ----

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Matrix& m) {
  Rows r(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

Rows ref_center(Rows x) {
  for (std::size_t j = 0; j < x[0].size(); ++j) {
    double m = 0.0;
    for (const auto& row : x) m += row[j];
    m /= static_cast<double>(x.size());
    for (auto& row : x) row[j] -= m;
  }
  return x;
}

Rows ref_normalize(Rows x) {
  for (auto& row : x) {
    double n = 0.0;
    for (double v : row) n += v * v;
    n = std::sqrt(n);
    for (double& v : row) v = n > 1e-12 ? v / n : 0.0;
  }
  return x;
}

double ref_kernel(const std::vector<double>& a, const std::vector<double>& b, bool rbf) {
  double dot = 0.0, d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    d2 += (a[k] - b[k]) * (a[k] - b[k]);
  }
  return rbf ? std::exp(-d2) : dot;
}

double ref_aft(const Matrix& phi, const Matrix& psi, const std::vector<double>& mu_diag, bool rbf) {
  Rows p = rows_of(psi);
  for (auto& row : p)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] *= mu_diag[j];
  const Rows a = ref_normalize(ref_center(rows_of(phi)));
  const Rows b = ref_normalize(ref_center(p));
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = ref_kernel(a[i], a[j], rbf) - ref_kernel(b[i], b[j], rbf);
      s += d * d;
    }
  return std::sqrt(s + 1e-12) / static_cast<double>(n);
}

double huber(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }

double ref_rkd(const Matrix& s, const Matrix& t) {
  const Rows a = rows_of(s), b = rows_of(t);
  const std::size_t n = a.size();
  auto dist = [](const std::vector<double>& x, const std::vector<double>& y) {
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d += (x[k] - y[k]) * (x[k] - y[k]);
    return std::sqrt(d);
  };
  auto mean_dist = [&](const Rows& x) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) m += dist(x[i], x[j]);
    return m / static_cast<double>(n * (n - 1));
  };
  const double ma = mean_dist(a), mb = mean_dist(b);
  double dl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dl += huber(dist(a[i], a[j]) / ma - dist(b[i], b[j]) / mb);
  dl /= static_cast<double>(n * n);
  auto unit = [](const std::vector<double>& from, const std::vector<double>& to) {
    std::vector<double> u(from.size());
    double nn = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      u[k] = to[k] - from[k];
      nn += u[k] * u[k];
    }
    nn = std::sqrt(nn);
    for (double& v : u) v = nn > 1e-12 ? v / nn : 0.0;
    return u;
  };
  auto cosine = [&](const Rows& x, std::size_t i, std::size_t j, std::size_t k) {
    const auto u = unit(x[i], x[j]), v = unit(x[i], x[k]);
    double c = 0.0;
    for (std::size_t q = 0; q < u.size(); ++q) c += u[q] * v[q];
    return c;
  };
  double al = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) al += huber(cosine(a, i, j, k) - cosine(b, i, j, k));
  al /= static_cast<double>(n * n * n);
  return dl + 2.0 * al;
}

Matrix rotate_cols(const Matrix& x, const Matrix& q) { return matmul(x, q); }

// ---- AFT ----

TEST(AftRegularizer, SelfTransferIsZero) {
  Rng rng(1);
  const Matrix x = uniform_matrix(6, 4, rng);
  EXPECT_LE(aft_regularizer(x, x, MuWeights::identity(4), Kernel::linear, 1e-12, 0.0), 1e-12);
  EXPECT_LE(aft_regularizer(x, x, MuWeights::identity(4), Kernel::rbf, 1e-12, 0.0), 1e-12);
}

TEST(AftRegularizer, RotatedScaledPsiIsZero) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix psi = uniform_matrix(5, 3, rng);
    const MuWeights mu = MuWeights::diagonal(3);
    const Matrix phi = scale(rotate_cols(center_rows(mu.apply(psi)), testing::random_orthogonal_qr(3, rng)),
                             0.1 + 10.0 * rng.uniform());
    EXPECT_LE(aft_regularizer(phi, psi, mu, Kernel::linear, 1e-12, 0.0), 1e-8);
  }
}

TEST(AftRegularizer, MatchesStepByStepReference) {
  Rng rng(3);
  const Matrix phi = uniform_matrix(4, 3, rng), psi = uniform_matrix(4, 5, rng);
  const MuWeights mu = MuWeights::diagonal(5);
  const std::vector<double> half(5, 0.5);
  EXPECT_NEAR(aft_regularizer(phi, psi, mu, Kernel::linear), ref_aft(phi, psi, half, false), 1e-14);
  EXPECT_NEAR(aft_regularizer(phi, psi, mu, Kernel::rbf), ref_aft(phi, psi, half, true), 1e-14);

  MuWeights trained = mu;
  for (std::size_t j = 0; j < 5; ++j) trained.s(0, j) = 0.7 * static_cast<double>(j) - 1.0;
  EXPECT_NEAR(aft_regularizer(phi, psi, trained, Kernel::linear),
              ref_aft(phi, psi, trained.effective_diagonal(), false), 1e-14);
}

TEST(AftRegularizer, SingleRowBatchIsRejected) {
  EXPECT_THROW(aft_regularizer(Matrix(1, 2), Matrix(1, 3), MuWeights::diagonal(3), Kernel::linear),
               BatchSizeError);
}

TEST(AftRegularizer, OrthogonalInvarianceInPhi) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix phi = uniform_matrix(8, 5, rng), psi = uniform_matrix(8, 6, rng);
    const MuWeights mu = MuWeights::diagonal(6);
    const Matrix q = testing::random_orthogonal_qr(5, rng);
    for (Kernel k : {Kernel::linear, Kernel::rbf}) {
      EXPECT_NEAR(aft_regularizer(matmul(phi, q), psi, mu, k), aft_regularizer(phi, psi, mu, k), 1e-8);
    }
  }
}

TEST(AftRegularizer, DenseMuAbsorbsColumnRescaling) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix psi = uniform_matrix(7, 4, rng), phi = uniform_matrix(7, 3, rng);
    MuWeights mu = MuWeights::dense_identity(4, 4);
    mu.dense = uniform_matrix(4, 4, rng);
    std::vector<double> d(4), inv(4);
    for (std::size_t j = 0; j < 4; ++j) {
      d[j] = 0.1 + 5.0 * rng.uniform();
      inv[j] = 1.0 / d[j];
    }
    MuWeights compensated = mu;
    compensated.dense = scale_columns(mu.dense, inv);
    EXPECT_NEAR(aft_regularizer(phi, scale_columns(psi, d), compensated, Kernel::linear),
                aft_regularizer(phi, psi, mu, Kernel::linear), 1e-12);
  }
}

TEST(AftRegularizer, DiagonalWeightsStayInUnitInterval) {
  MuWeights mu = MuWeights::diagonal(3);
  mu.s = Matrix::from_rows({{-30.0, 0.0, 30.0}});
  for (double w : mu.effective_diagonal()) {
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
  }
  EXPECT_EQ(MuWeights::identity(3).effective_diagonal(), std::vector<double>(3, 1.0));
  EXPECT_TRUE(MuWeights::identity(3).trainable().empty());
  EXPECT_THROW(MuWeights::dense_identity(3, 3).effective_diagonal(), UsageError);
}

// ---- l2 (no kernel) ----

TEST(L2Regularizer, ExactFitIsZero) {
  Rng rng(6);
  const Matrix psi = uniform_matrix(6, 4, rng);
  MuWeights mu = MuWeights::dense_identity(3, 4);
  mu.dense = uniform_matrix(3, 4, rng);
  EXPECT_NEAR(l2_regularizer(mu.apply(psi), psi, mu), 0.0, 1e-28);
}

TEST(L2Regularizer, ZeroMuGivesCenteredRowNorms) {
  Rng rng(7);
  const Matrix phi = uniform_matrix(5, 3, rng), psi = uniform_matrix(5, 4, rng);
  MuWeights mu = MuWeights::dense_identity(3, 4);
  mu.dense = Matrix(3, 4);
  const Matrix c = center_rows(phi);
  double s = 0.0;
  for (double v : c.data()) s += v * v;
  EXPECT_NEAR(l2_regularizer(phi, psi, mu), s / 5.0, 1e-14);
}

TEST(L2Regularizer, LeastSquaresOptimum) {
  Rng rng(8);
  const Matrix phi = uniform_matrix(4, 2, rng), psi = uniform_matrix(4, 3, rng);
  const Eigen::MatrixXd pc = to_eigen(center_rows(psi)), fc = to_eigen(center_rows(phi));
  // centered psi has rank <= 3 with B = 4; the minimum-norm solution is a minimiser
  const Eigen::MatrixXd mt = pc.completeOrthogonalDecomposition().solve(fc);
  MuWeights mu = MuWeights::dense_identity(2, 3);
  mu.dense = testing::from_eigen(mt.transpose());
  const double expected = (pc * mt - fc).squaredNorm() / 4.0;
  EXPECT_NEAR(l2_regularizer(phi, psi, mu), expected, 1e-8);
}

TEST(L2Regularizer, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(l2_regularizer(Matrix(4, 2), Matrix(4, 3), MuWeights::dense_identity(3, 3)), DimensionError);
}

// ---- KD ----

TEST(KdRegularizer, ExactPredictionIsZero) {
  Rng rng(9);
  const Matrix phi = uniform_matrix(6, 3, rng);
  KdTransform v(4, 3, 1);
  EXPECT_NEAR(kd_regularizer(phi, matmul(phi, transpose(v.v)), v), 0.0, 1e-28);
}

TEST(KdRegularizer, ScalarStudentCannotPredictTwoIndependentDims) {
  Rng rng(10);
  const Matrix phi = uniform_matrix(20, 1, rng);
  const Matrix psi = uniform_matrix(20, 2, rng);
  const double oracle = least_squares_residual(center_rows(phi), center_rows(psi));
  EXPECT_GT(oracle, 1e-3);
  KdTransform v(2, 1, 3);
  const double trained = testing::minimize(
      [&](ad::Tape& t) { return kd_regularizer(t, t.constant(phi), t.constant(psi), v); }, v.trainable(), 2000,
      0.05);
  EXPECT_GE(trained, oracle - 1e-12);
  EXPECT_NEAR(trained, oracle, 1e-6);
}

TEST(KdRegularizer, NormalEquationsOptimum) {
  Rng rng(11);
  const Matrix phi = uniform_matrix(8, 3, rng), psi = uniform_matrix(8, 4, rng);
  const Eigen::MatrixXd fc = to_eigen(center_rows(phi)), pc = to_eigen(center_rows(psi));
  const Eigen::MatrixXd vt = (fc.transpose() * fc).ldlt().solve(fc.transpose() * pc);
  KdTransform v(4, 3, 0);
  v.v = testing::from_eigen(vt.transpose());
  EXPECT_NEAR(kd_regularizer(phi, psi, v), (fc * vt - pc).squaredNorm() / 8.0, 1e-8);
  EXPECT_NEAR(kd_regularizer(phi, psi, v), least_squares_residual(center_rows(phi), center_rows(psi)), 1e-12);
}

// ---- RKD ----

TEST(RkdRegularizer, SelfTransferIsZero) {
  Rng rng(12);
  const Matrix x = uniform_matrix(6, 3, rng);
  EXPECT_EQ(rkd_regularizer(x, x), 0.0);
}

TEST(RkdRegularizer, ScaleAndShiftInvariant) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix psi = uniform_matrix(6, 3, rng);
    Matrix phi = scale(psi, 0.1 + 10.0 * rng.uniform());
    const Matrix shift = uniform_matrix(1, 3, rng, -5, 5);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 3; ++j) phi(i, j) += shift(0, j);
    EXPECT_LE(rkd_regularizer(phi, psi), 1e-8);
  }
}

TEST(RkdRegularizer, MatchesExplicitLoops) {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix phi = uniform_matrix(4, 3, rng), psi = uniform_matrix(4, 3, rng, -3, 3);
    EXPECT_NEAR(rkd_regularizer(phi, psi), ref_rkd(phi, psi), 1e-13);
  }
  const Matrix phi = uniform_matrix(5, 2, rng), psi = uniform_matrix(5, 4, rng);
  EXPECT_NEAR(rkd_regularizer(phi, psi), ref_rkd(phi, psi), 1e-13);
}

TEST(RkdRegularizer, NeedsThreeExamples) {
  EXPECT_THROW(rkd_regularizer(Matrix(2, 2), Matrix(2, 2)), BatchSizeError);
}

// ---- factor transfer ----

FtNets matched_nets(std::size_t d, std::uint64_t seed) {
  FtNets nets(d, d, seed);
  nets.pretrained = true;
  nets.tr_w0 = nets.enc_w;
  nets.tr_b0 = nets.enc_b;
  nets.tr_w1 = Matrix::identity(nets.width);
  nets.tr_b1 = Matrix(1, nets.width);
  return nets;
}

TEST(FtRegularizer, TranslatorEqualToEncoderIsZero) {
  Rng rng(15);
  const Matrix x = uniform_matrix(6, 5, rng);
  EXPECT_EQ(ft_regularizer(x, x, matched_nets(5, 2)), 0.0);
}

TEST(FtRegularizer, NotInvariantToRotation) {
  Rng rng(16);
  const Matrix x = uniform_matrix(6, 6, rng);
  FtNets nets = matched_nets(6, 3);
  nets.tr_w1 = testing::random_orthogonal_qr(nets.width, rng);
  EXPECT_GT(ft_regularizer(x, x, nets), 1e-3);
}

TEST(FtRegularizer, MatchesReferenceForwardPass) {
  Rng rng(17);
  const Matrix phi = uniform_matrix(5, 3, rng), psi = uniform_matrix(5, 4, rng);
  FtNets nets(3, 4, 7);
  nets.pretrained = true;
  nets.enc_b = uniform_matrix(1, nets.width, rng);
  nets.tr_b0 = uniform_matrix(1, nets.width, rng);
  auto layer = [](const std::vector<double>& in, const Matrix& w, const Matrix& b, bool relu) {
    std::vector<double> out(w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double z = b(0, o);
      for (std::size_t k = 0; k < w.cols(); ++k) z += w(o, k) * in[k];
      out[o] = relu ? std::max(z, 0.0) : z;
    }
    return out;
  };
  const Rows pc = ref_center(rows_of(phi)), sc = ref_center(rows_of(psi));
  Rows t, f;
  for (std::size_t i = 0; i < 5; ++i) {
    t.push_back(layer(layer(pc[i], nets.tr_w0, nets.tr_b0, true), nets.tr_w1, nets.tr_b1, false));
    f.push_back(layer(sc[i], nets.enc_w, nets.enc_b, true));
  }
  t = ref_normalize(t);
  f = ref_normalize(f);
  double s = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < nets.width; ++k) s += (t[i][k] - f[i][k]) * (t[i][k] - f[i][k]);
  EXPECT_NEAR(ft_regularizer(phi, psi, nets), s / 5.0, 1e-14);
}

TEST(FtRegularizer, RequiresPretrainedParaphraser) {
  FtNets nets(3, 4, 1);
  EXPECT_THROW(ft_regularizer(Matrix(4, 3), Matrix(4, 4), nets), StateError);
}

TEST(FtNets, CompressionWidthIsHalfRoundedUp) {
  EXPECT_EQ(FtNets(3, 7, 0).width, 4u);
  EXPECT_EQ(FtNets(3, 8, 0).width, 4u);
  EXPECT_EQ(FtNets(3, 1, 0).width, 1u);
}

TEST(PretrainParaphraser, OneDimensionalDescent) {
  Rng rng(18);
  const Matrix psi = uniform_matrix(50, 1, rng);
  FtNets nets(2, 1, 4, Activation::identity);
  const double before = reconstruction_mse(psi, nets);
  const double after = pretrain_paraphraser(psi, nets, 200, 1e-2);
  EXPECT_LT(after, before);
  EXPECT_TRUE(nets.pretrained);
}

TEST(PretrainParaphraser, LinearAutoencoderReachesPcaResidual) {
  Rng rng(19);
  // rank-3 data in 4 dims with a width-2 code: best linear reconstruction is PCA top-2
  const Matrix z = gaussian_matrix(200, 3, rng);
  const Matrix a = Matrix::from_rows({{3, 0, 0, 1}, {0, 1.5, 0.5, 0}, {0, 0, 0.3, 0.2}});
  const Matrix psi = matmul(z, a);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(center_rows(psi)));
  const auto sv = svd.singularValues();
  double tail = 0.0;
  for (Eigen::Index k = 2; k < sv.size(); ++k) tail += sv(k) * sv(k);
  const double oracle = tail / static_cast<double>(psi.size());

  FtNets nets(2, 4, 5, Activation::identity);
  const double mse = pretrain_paraphraser(psi, nets, 4000, 1e-2);
  EXPECT_GE(mse, oracle * (1.0 - 1e-9));
  EXPECT_LE(mse, oracle * 1.05 + 1e-9) << "oracle " << oracle;

  // rank-1 data: the residual vanishes
  const Matrix r1 = matmul(gaussian_matrix(200, 1, rng), Matrix::from_rows({{1, -2, 0.5, 1}}));
  FtNets n1(2, 4, 6, Activation::identity);
  EXPECT_LE(pretrain_paraphraser(r1, n1, 4000, 1e-2), 1e-6);
}

TEST(PretrainParaphraser, Deterministic) {
  Rng rng(20);
  const Matrix psi = uniform_matrix(300, 6, rng);
  FtNets a(2, 6, 9), b(2, 6, 9);
  pretrain_paraphraser(psi, a, 50, 1e-2);
  pretrain_paraphraser(psi, b, 50, 1e-2);
  EXPECT_EQ(a.enc_w, b.enc_w);
  EXPECT_EQ(a.dec_w, b.dec_w);
}

// ---- gradients of every regularizer ----

struct RegCase {
  const char* name;
  std::size_t b;
};

class RegularizerGradient : public ::testing::TestWithParam<const char*> {};

TEST_P(RegularizerGradient, MatchesCentralDifferences) {
  const std::string name = GetParam();
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(1000 + trial);
    const std::size_t b = 4 + rng.index(5), dphi = 2 + rng.index(5), dpsi = 2 + rng.index(5);
    const Matrix psi = uniform_matrix(b, dpsi, rng);
    Params p{{"phi", uniform_matrix(b, dphi, rng)}};
    testing::LossBuilder f;
    if (name == "aft_linear" || name == "aft_rbf" || name == "aft_dense") {
      const Kernel k = name == "aft_rbf" ? Kernel::rbf : Kernel::linear;
      const bool dense = name == "aft_dense";
      p.emplace(dense ? "mu.dense" : "mu.s", dense ? uniform_matrix(dpsi, dpsi, rng) : uniform_matrix(1, dpsi, rng));
      f = [=](ad::Tape& t, const Params& q) {
        MuWeights mu = dense ? MuWeights::dense_identity(dpsi, dpsi) : MuWeights::diagonal(dpsi);
        (dense ? mu.dense : mu.s) = q.at(dense ? "mu.dense" : "mu.s");
        return aft_regularizer(t, t.parameter("phi", q.at("phi")), t.constant(psi), mu, k);
      };
    } else if (name == "l2") {
      p.emplace("mu.dense", uniform_matrix(dphi, dpsi, rng));
      f = [=](ad::Tape& t, const Params& q) {
        MuWeights mu = MuWeights::dense_identity(dphi, dpsi);
        mu.dense = q.at("mu.dense");
        return l2_regularizer(t, t.parameter("phi", q.at("phi")), t.constant(psi), mu);
      };
    } else if (name == "kd") {
      p.emplace("kd.v", uniform_matrix(dpsi, dphi, rng));
      f = [=](ad::Tape& t, const Params& q) {
        KdTransform v;
        v.v = q.at("kd.v");
        return kd_regularizer(t, t.parameter("phi", q.at("phi")), t.constant(psi), v);
      };
    } else if (name == "rkd") {
      f = [=](ad::Tape& t, const Params& q) { return rkd_regularizer(t.parameter("phi", q.at("phi")), t.constant(psi)); };
    } else if (name == "ft") {
      FtNets nets(dphi, dpsi, trial);
      nets.pretrained = true;
      // nonzero biases keep translator rows away from the normalisation kink at 0
      nets.tr_b0 = uniform_matrix(1, nets.width, rng);
      nets.tr_b1 = uniform_matrix(1, nets.width, rng);
      for (auto& [n, m] : nets.translator_trainable()) p.emplace(n, *m);
      f = [=](ad::Tape& t, const Params& q) {
        FtNets local = nets;
        for (auto& [n, m] : local.translator_trainable()) *m = q.at(n);
        return ft_regularizer(t, t.parameter("phi", q.at("phi")), t.constant(psi), local);
      };
    }
    const auto r = check_gradients(f, p);
    EXPECT_LE(r.max_rel_error, 1e-4) << name << " trial " << trial << ": " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(All, RegularizerGradient,
                         ::testing::Values("aft_linear", "aft_rbf", "aft_dense", "l2", "kd", "rkd", "ft"));

TEST(Regularizers, NonNegativeOnRandomInputs) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix phi = uniform_matrix(6, 3, rng, -4, 4), psi = uniform_matrix(6, 5, rng, -4, 4);
    EXPECT_GE(aft_regularizer(phi, psi, MuWeights::diagonal(5), Kernel::linear), 0.0);
    EXPECT_GE(aft_regularizer(phi, psi, MuWeights::diagonal(5), Kernel::rbf), 0.0);
    EXPECT_GE(l2_regularizer(phi, psi, MuWeights::dense_identity(3, 5)), 0.0);
    EXPECT_GE(kd_regularizer(phi, psi, KdTransform(5, 3, 1)), 0.0);
    EXPECT_GE(rkd_regularizer(phi, psi), 0.0);
    FtNets nets(3, 5, 2);
    nets.pretrained = true;
    EXPECT_GE(ft_regularizer(phi, psi, nets), 0.0);
  }
}

// ---- span versus compression ----

struct SpanTask {
  Matrix phi, psi;
};

SpanTask span_task(std::size_t b, std::size_t d_s, std::size_t d_n, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix s = gaussian_matrix(b, d_s, rng);
  const Matrix n = gaussian_matrix(b, d_n, rng);
  return {s, hstack(s, n)};
}

TEST(SpanVersusCompression, DenseMuReachesZeroL2) {
  const auto task = span_task(64, 4, 4, 1);
  MuWeights mu = MuWeights::dense_identity(4, 8);
  mu.dense = Matrix(4, 8, 0.1);
  const double v = testing::minimize(
      [&](ad::Tape& t) { return l2_regularizer(t, t.constant(task.phi), t.constant(task.psi), mu); }, mu.trainable(),
      3000, 0.05);
  EXPECT_LE(v, 1e-6);
}

TEST(SpanVersusCompression, DiagonalMuReachesNearZeroKernelDistance) {
  const auto task = span_task(64, 4, 4, 2);
  MuWeights mu = MuWeights::diagonal(8);
  const double start = aft_regularizer(task.phi, task.psi, mu, Kernel::linear);
  const double v = testing::minimize(
      [&](ad::Tape& t) {
        return aft_regularizer(t, t.constant(task.phi), t.constant(task.psi), mu, Kernel::linear);
      },
      mu.trainable(), 3000, 0.1);
  EXPECT_GT(start, 0.1);
  EXPECT_LE(v, 1e-3);
  const auto w = mu.effective_diagonal();
  for (std::size_t j = 4; j < 8; ++j) EXPECT_LT(w[j], 0.1 * w[0]) << "noise dim " << j;
}

TEST(SpanVersusCompression, KdStaysAboveNoiseFloor) {
  const auto task = span_task(64, 4, 4, 3);
  const double oracle = least_squares_residual(center_rows(task.phi), center_rows(task.psi));
  const std::vector<std::size_t> noise_cols{4, 5, 6, 7};
  const Matrix nc = center_rows(select_cols(task.psi, noise_cols));
  double var = 0.0;
  for (double x : nc.data()) var += x * x;
  var /= 64.0;
  EXPECT_GE(oracle, 0.5 * var);
  KdTransform v(8, 4, 1);
  const double trained = testing::minimize(
      [&](ad::Tape& t) { return kd_regularizer(t, t.constant(task.phi), t.constant(task.psi), v); }, v.trainable(),
      3000, 0.05);
  EXPECT_GE(trained, oracle - 1e-12);
  EXPECT_LE(trained, 1.1 * oracle);
}

TEST(RegularizerNames, RoundTrip) {
  for (auto k : {RegularizerKind::none, RegularizerKind::aft, RegularizerKind::l2, RegularizerKind::kd,
                 RegularizerKind::rkd, RegularizerKind::ft}) {
    EXPECT_EQ(parse_regularizer_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_kernel("rbf"), Kernel::rbf);
  EXPECT_EQ(parse_mu_mode("dense"), MuMode::dense);
  try {
    parse_kernel("poly");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("linear"), std::string::npos);
  }
}

}  // namespace
}  // namespace aft
