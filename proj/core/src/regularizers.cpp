// SPDX-License-Identifier: Apache-2.0

#include "aft/regularizers.hpp"

#include <algorithm>
#include <cmath>

#include "aft/errors.hpp"
#include "aft/rng.hpp"

namespace aft {

namespace {

void require_batch(const Matrix& phi, const Matrix& psi, std::size_t min_rows, const char* op) {
  if (phi.rows() != psi.rows()) {
    throw DimensionError(std::string(op) + ": phi " + phi.shape_string() + " and psi " +
                         psi.shape_string() + " have different batch sizes");
  }
  if (phi.rows() < min_rows) {
    throw BatchSizeError(std::string(op) + ": batch of " + std::to_string(phi.rows()) +
                         " rows, need at least " + std::to_string(min_rows));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = sd * rng.normal();
  return m;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = matmul(x, transpose(w));
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
  return y;
}

ad::Var affine(ad::Var x, ad::Var w, ad::Var b) {
  return ad::add_row_vector(ad::matmul(x, ad::transpose(w)), b);
}


}  // namespace

// ---------------------------------------------------------------------------
// MuWeights

MuWeights MuWeights::diagonal(std::size_t d_psi) {
  MuWeights mu;
  mu.mode = MuMode::diagonal;
  mu.d_psi = d_psi;
  mu.s = Matrix(1, d_psi);
  return mu;
}

MuWeights MuWeights::dense_identity(std::size_t d_out, std::size_t d_psi) {
  MuWeights mu;
  mu.mode = MuMode::dense;
  mu.d_psi = d_psi;
  mu.dense = Matrix(d_out, d_psi);
  for (std::size_t i = 0; i < std::min(d_out, d_psi); ++i) mu.dense(i, i) = 1.0;
  return mu;
}

MuWeights MuWeights::identity(std::size_t d_psi) {
  MuWeights mu;
  mu.mode = MuMode::identity;
  mu.d_psi = d_psi;
  return mu;
}

std::vector<double> MuWeights::effective_diagonal() const {
  switch (mode) {
    case MuMode::diagonal: {
      std::vector<double> w(d_psi);
      for (std::size_t i = 0; i < d_psi; ++i) w[i] = sigmoid(s(0, i));
      return w;
    }
    case MuMode::identity: return std::vector<double>(d_psi, 1.0);
    case MuMode::dense: break;
  }
  throw UsageError("MuWeights::effective_diagonal: dense mu has no diagonal form");
}

Matrix MuWeights::apply(const Matrix& psi) const {
  if (psi.cols() != d_psi) {
    throw DimensionError("MuWeights::apply: psi " + psi.shape_string() + " for d_psi = " +
                         std::to_string(d_psi));
  }
  switch (mode) {
    case MuMode::diagonal: return scale_columns(psi, effective_diagonal());
    case MuMode::dense: return matmul(psi, transpose(dense));
    case MuMode::identity: return psi;
  }
  return psi;
}

ParamRefs MuWeights::trainable(const std::string& prefix) {
  switch (mode) {
    case MuMode::diagonal: return {{prefix + ".s", &s}};
    case MuMode::dense: return {{prefix + ".dense", &dense}};
    case MuMode::identity: return {};
  }
  return {};
}

ad::Var apply_mu(ad::Tape& tape, ad::Var psi, const MuWeights& mu, const std::string& prefix) {
  if (psi.value().cols() != mu.d_psi) {
    throw DimensionError("apply_mu: psi " + psi.value().shape_string() + " for d_psi = " +
                         std::to_string(mu.d_psi));
  }
  switch (mu.mode) {
    case MuMode::diagonal:
      return ad::mul_columns(psi, ad::sigmoid(tape.parameter(prefix + ".s", mu.s)));
    case MuMode::dense:
      return ad::matmul(psi, ad::transpose(tape.parameter(prefix + ".dense", mu.dense)));
    case MuMode::identity: return psi;
  }
  return psi;
}

// ---------------------------------------------------------------------------
// KdTransform, FtNets

KdTransform::KdTransform(std::size_t d_psi, std::size_t d_phi, std::uint64_t seed) {
  Rng rng(seed);
  v = gaussian(d_psi, d_phi, d_phi == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(d_phi)), rng);
}

ParamRefs KdTransform::trainable(const std::string& prefix) { return {{prefix + ".v", &v}}; }

FtNets::FtNets(std::size_t d_phi_, std::size_t d_psi_, std::uint64_t seed_, Activation act)
    : d_phi(d_phi_), d_psi(d_psi_), width((d_psi_ + 1) / 2), encoder_activation(act), seed(seed_) {
  Rng rng(seed);
  auto sd = [](std::size_t fan_in) { return fan_in == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  enc_w = gaussian(width, d_psi, sd(d_psi), rng);
  enc_b = Matrix(1, width);
  dec_w = gaussian(d_psi, width, sd(width), rng);
  dec_b = Matrix(1, d_psi);
  tr_w0 = gaussian(width, d_phi, sd(d_phi), rng);
  tr_b0 = Matrix(1, width);
  tr_w1 = gaussian(width, width, sd(width), rng);
  tr_b1 = Matrix(1, width);
}

Matrix FtNets::encode(const Matrix& psi) const {
  return activate(affine(psi, enc_w, enc_b), encoder_activation);
}

Matrix FtNets::reconstruct(const Matrix& psi) const { return affine(encode(psi), dec_w, dec_b); }

Matrix FtNets::translate(const Matrix& phi) const {
  return affine(activate(affine(phi, tr_w0, tr_b0), Activation::relu), tr_w1, tr_b1);
}

ParamRefs FtNets::paraphraser_trainable(const std::string& prefix) {
  return {{prefix + ".enc_w", &enc_w}, {prefix + ".enc_b", &enc_b},
          {prefix + ".dec_w", &dec_w}, {prefix + ".dec_b", &dec_b}};
}

ParamRefs FtNets::translator_trainable(const std::string& prefix) {
  return {{prefix + ".tr_w0", &tr_w0}, {prefix + ".tr_b0", &tr_b0},
          {prefix + ".tr_w1", &tr_w1}, {prefix + ".tr_b1", &tr_b1}};
}

// ---------------------------------------------------------------------------
// Taped regularizers

ad::Var kernel_distance(ad::Var phi, ad::Var mu_psi, Kernel kernel, double eps_norm, double eps_sqrt) {
  require_batch(phi.value(), mu_psi.value(), 2, "kernel_distance");
  ad::Var a = ad::normalize_rows(ad::center_rows(phi), eps_norm);
  ad::Var b = ad::normalize_rows(ad::center_rows(mu_psi), eps_norm);
  ad::Var ka = kernel == Kernel::rbf ? ad::rbf_gram(a) : ad::gram(a);
  ad::Var kb = kernel == Kernel::rbf ? ad::rbf_gram(b) : ad::gram(b);
  return ad::frob_distance(ka, kb, static_cast<double>(phi.value().rows()), eps_sqrt);
}

ad::Var aft_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const MuWeights& mu, Kernel kernel,
                        double eps_norm, double eps_sqrt) {
  require_batch(phi.value(), psi.value(), 2, "aft_regularizer");
  return kernel_distance(phi, apply_mu(tape, psi, mu), kernel, eps_norm, eps_sqrt);
}

ad::Var l2_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const MuWeights& mu) {
  require_batch(phi.value(), psi.value(), 1, "l2_regularizer");
  ad::Var target = apply_mu(tape, ad::center_rows(psi), mu);
  if (target.value().cols() != phi.value().cols()) {
    throw DimensionError("l2_regularizer: mu maps psi to " + std::to_string(target.value().cols()) +
                         " dims, phi has " + std::to_string(phi.value().cols()));
  }
  ad::Var residual = ad::sub(ad::center_rows(phi), target);
  return ad::scale(ad::sum_squares(residual), 1.0 / static_cast<double>(phi.value().rows()));
}

ad::Var kd_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const KdTransform& v) {
  require_batch(phi.value(), psi.value(), 1, "kd_regularizer");
  if (v.v.rows() != psi.value().cols() || v.v.cols() != phi.value().cols()) {
    throw DimensionError("kd_regularizer: V " + v.v.shape_string() + " for phi " +
                         phi.value().shape_string() + ", psi " + psi.value().shape_string());
  }
  ad::Var vv = tape.parameter("kd.v", v.v);
  ad::Var prediction = ad::matmul(ad::center_rows(phi), ad::transpose(vv));
  ad::Var residual = ad::sub(prediction, ad::center_rows(psi));
  return ad::scale(ad::sum_squares(residual), 1.0 / static_cast<double>(phi.value().rows()));
}

ad::Var rkd_regularizer(ad::Var phi, ad::Var psi) {
  require_batch(phi.value(), psi.value(), 3, "rkd_regularizer");
  return ad::rkd_loss(ad::center_rows(phi), ad::center_rows(psi));
}

ad::Var ft_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const FtNets& nets, double eps_norm) {
  require_batch(phi.value(), psi.value(), 1, "ft_regularizer");
  if (!nets.pretrained) throw StateError("ft_regularizer: paraphraser has not been pre-trained");
  if (phi.value().cols() != nets.d_phi || psi.value().cols() != nets.d_psi) {
    throw DimensionError("ft_regularizer: nets built for d_phi=" + std::to_string(nets.d_phi) +
                         ", d_psi=" + std::to_string(nets.d_psi));
  }
  const Matrix factor = normalize_rows(nets.encode(center_rows(psi.value())), eps_norm);
  ad::Var h = ad::relu(affine(ad::center_rows(phi), tape.parameter("ft.tr_w0", nets.tr_w0),
                              tape.parameter("ft.tr_b0", nets.tr_b0)));
  ad::Var t = affine(h, tape.parameter("ft.tr_w1", nets.tr_w1), tape.parameter("ft.tr_b1", nets.tr_b1));
  ad::Var residual = ad::sub(ad::normalize_rows(t, eps_norm), tape.constant(factor));
  return ad::scale(ad::sum_squares(residual), 1.0 / static_cast<double>(phi.value().rows()));
}

// ---------------------------------------------------------------------------
// Value-only forms

double aft_regularizer(const Matrix& phi, const Matrix& psi, const MuWeights& mu, Kernel kernel,
                       double eps_norm, double eps_sqrt) {
  ad::Tape tape;
  return aft_regularizer(tape, tape.constant(phi), tape.constant(psi), mu, kernel, eps_norm, eps_sqrt)
      .scalar();
}

double l2_regularizer(const Matrix& phi, const Matrix& psi, const MuWeights& mu) {
  ad::Tape tape;
  return l2_regularizer(tape, tape.constant(phi), tape.constant(psi), mu).scalar();
}

double kd_regularizer(const Matrix& phi, const Matrix& psi, const KdTransform& v) {
  ad::Tape tape;
  return kd_regularizer(tape, tape.constant(phi), tape.constant(psi), v).scalar();
}

double rkd_regularizer(const Matrix& phi, const Matrix& psi) {
  ad::Tape tape;
  return rkd_regularizer(tape.constant(phi), tape.constant(psi)).scalar();
}

double ft_regularizer(const Matrix& phi, const Matrix& psi, const FtNets& nets, double eps_norm) {
  ad::Tape tape;
  return ft_regularizer(tape, tape.constant(phi), tape.constant(psi), nets, eps_norm).scalar();
}

// ---------------------------------------------------------------------------
// Paraphraser pre-training

namespace {

ad::Var reconstruction_loss(ad::Tape& tape, const Matrix& batch, const FtNets& nets) {
  ad::Var x = tape.constant(batch);
  ad::Var code = activate(affine(x, tape.parameter("ft.enc_w", nets.enc_w),
                                 tape.parameter("ft.enc_b", nets.enc_b)),
                          nets.encoder_activation);
  ad::Var recon = affine(code, tape.parameter("ft.dec_w", nets.dec_w), tape.parameter("ft.dec_b", nets.dec_b));
  return ad::scale(ad::sum_squares(ad::sub(recon, x)), 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

double reconstruction_mse(const Matrix& psi, const FtNets& nets) {
  ad::Tape tape;
  return reconstruction_loss(tape, center_rows(psi), nets).scalar();
}

double pretrain_paraphraser(const Matrix& psi_train, FtNets& nets, std::size_t steps, double lr) {
  if (steps == 0) throw UsageError("pretrain_paraphraser: steps must be >= 1");
  if (psi_train.cols() != nets.d_psi) throw DimensionError("pretrain_paraphraser: d_psi mismatch");
  constexpr std::size_t kMaxBatch = 256;
  const Matrix centered = center_rows(psi_train);
  const std::size_t n = centered.rows();
  const std::size_t batch = std::min(n, kMaxBatch);
  Rng rng(derive_seed(nets.seed, 0xF7));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;
  Adam adam;
  for (std::size_t step = 0; step < steps; ++step) {
    if (cursor + batch > n) {
      rng.shuffle(order);
      cursor = 0;
    }
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                 order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
    cursor += batch;
    ad::Tape tape;
    ad::Var loss = reconstruction_loss(tape, select_rows(centered, idx), nets);
    adam.step(nets.paraphraser_trainable(), tape.backward(loss), lr);
  }
  nets.pretrained = true;
  return reconstruction_mse(psi_train, nets);
}

// ---------------------------------------------------------------------------
// Regularizer

Regularizer::Regularizer(const RegularizerSpec& spec, std::size_t d_phi, std::size_t d_psi,
                         std::uint64_t seed)
    : spec_(spec) {
  switch (spec.kind) {
    case RegularizerKind::aft:
      if (spec.mu_mode == MuMode::diagonal) mu_ = MuWeights::diagonal(d_psi);
      else if (spec.mu_mode == MuMode::dense) mu_ = MuWeights::dense_identity(d_psi, d_psi);
      else mu_ = MuWeights::identity(d_psi);
      break;
    case RegularizerKind::l2: mu_ = MuWeights::dense_identity(d_phi, d_psi); break;
    case RegularizerKind::kd: kd_ = KdTransform(d_psi, d_phi, seed); break;
    case RegularizerKind::ft: ft_ = FtNets(d_phi, d_psi, seed); break;
    case RegularizerKind::rkd:
    case RegularizerKind::none: break;
  }
}

ad::Var Regularizer::evaluate(ad::Tape& tape, ad::Var phi, ad::Var psi) const {
  switch (spec_.kind) {
    case RegularizerKind::aft:
      return aft_regularizer(tape, phi, psi, mu_, spec_.kernel, spec_.eps_norm, spec_.eps_sqrt);
    case RegularizerKind::l2: return l2_regularizer(tape, phi, psi, mu_);
    case RegularizerKind::kd: return kd_regularizer(tape, phi, psi, kd_);
    case RegularizerKind::rkd: return rkd_regularizer(phi, psi);
    case RegularizerKind::ft: return ft_regularizer(tape, phi, psi, ft_, spec_.eps_norm);
    case RegularizerKind::none: break;
  }
  throw UsageError("Regularizer::evaluate: no regularizer configured");
}

ParamRefs Regularizer::trainable() {
  switch (spec_.kind) {
    case RegularizerKind::aft:
    case RegularizerKind::l2: return mu_.trainable();
    case RegularizerKind::kd: return kd_.trainable();
    case RegularizerKind::ft: return ft_.translator_trainable();
    case RegularizerKind::rkd:
    case RegularizerKind::none: break;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Names

std::string to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::aft: return "aft";
    case RegularizerKind::l2: return "l2";
    case RegularizerKind::kd: return "kd";
    case RegularizerKind::rkd: return "rkd";
    case RegularizerKind::ft: return "ft";
  }
  return "?";
}

std::string to_string(Kernel kernel) { return kernel == Kernel::rbf ? "rbf" : "linear"; }

std::string to_string(MuMode mode) {
  switch (mode) {
    case MuMode::diagonal: return "diagonal";
    case MuMode::dense: return "dense";
    case MuMode::identity: return "identity";
  }
  return "?";
}

RegularizerKind parse_regularizer_kind(const std::string& name) {
  for (auto k : {RegularizerKind::none, RegularizerKind::aft, RegularizerKind::l2, RegularizerKind::kd,
                 RegularizerKind::rkd, RegularizerKind::ft}) {
    if (to_string(k) == name) return k;
  }
  throw UsageError("unknown regularizer '" + name + "' (valid: none, aft, l2, kd, rkd, ft)");
}

Kernel parse_kernel(const std::string& name) {
  if (name == "linear") return Kernel::linear;
  if (name == "rbf") return Kernel::rbf;
  throw UsageError("unknown kernel '" + name + "' (valid: linear, rbf)");
}

MuMode parse_mu_mode(const std::string& name) {
  for (auto m : {MuMode::diagonal, MuMode::dense, MuMode::identity}) {
    if (to_string(m) == name) return m;
  }
  throw UsageError("unknown mu mode '" + name + "' (valid: diagonal, dense, identity)");
}

}  // namespace aft
