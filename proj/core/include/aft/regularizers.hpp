// SPDX-License-Identifier: Apache-2.0

#pragma once

// Feature-transfer regularizers.
//
// Every regularizer maps a batch of downstream features phi (B x d_phi) and
// frozen pre-trained features psi (B x d_psi) to a non-negative scalar, and
// owns whatever auxiliary parameters it needs (feature weights mu, KD map V,
// factor-transfer translator).
//
// The adaptive feature transfer (AFT) distance follows this pipeline:
//   1. psi <- psi * mu^T
//   2. subtract the mini-batch mean from phi and psi
//   3. scale each row to unit norm
//   4. K_phi = k(phi), K_psi = k(psi), with k linear (x x^T) or RBF
//   5. delta = ||K_phi - K_psi||_F / B
// With diagonal mu = diag(sigmoid(s)) the learned weights select which
// pre-trained dimensions the downstream features must stay in the span of.

#include <cstdint>
#include <string>
#include <vector>

#include "aft/matrix.hpp"
#include "aft/models.hpp"
#include "aft/optim.hpp"
#include "aft/tape.hpp"

namespace aft {

inline constexpr double kDefaultEps = 1e-12;

enum class MuMode { diagonal, dense, identity };
enum class Kernel { linear, rbf };
enum class RegularizerKind { none, aft, l2, kd, rkd, ft };

/// Variational feature weights mu.
struct MuWeights {
  MuMode mode = MuMode::diagonal;
  std::size_t d_psi = 0;
  Matrix s;      // 1 x d_psi, diagonal mode: mu_ii = sigmoid(s_i)
  Matrix dense;  // d_out x d_psi, dense mode

  /// s = 0, so every weight starts at 0.5.
  static MuWeights diagonal(std::size_t d_psi);
  /// Ones on the main diagonal where it exists, zeros elsewhere.
  static MuWeights dense_identity(std::size_t d_out, std::size_t d_psi);
  static MuWeights identity(std::size_t d_psi);

  /// sigmoid(s) for diagonal mode, all ones for identity. Throws in dense mode.
  std::vector<double> effective_diagonal() const;
  /// psi * mu^T.
  Matrix apply(const Matrix& psi) const;
  /// Trainable tensors ("mu.s" or "mu.dense"); empty in identity mode.
  ParamRefs trainable(const std::string& prefix = "mu");
};

/// Registers mu on the tape and records psi * mu^T.
ad::Var apply_mu(ad::Tape& tape, ad::Var psi, const MuWeights& mu, const std::string& prefix = "mu");

/// Learned map V (d_psi x d_phi) for feature distillation.
struct KdTransform {
  Matrix v;

  KdTransform() = default;
  KdTransform(std::size_t d_psi, std::size_t d_phi, std::uint64_t seed);
  ParamRefs trainable(const std::string& prefix = "kd");
};

/// Factor-transfer networks.
///
/// Paraphraser: encoder d_psi -> w (activation), decoder w -> d_psi, with
/// w = ceil(d_psi / 2). Translator: d_phi -> w (ReLU) -> w. Only the
/// translator is trainable once the paraphraser has been pre-trained.
struct FtNets {
  std::size_t d_phi = 0;
  std::size_t d_psi = 0;
  std::size_t width = 0;
  Activation encoder_activation = Activation::relu;
  std::uint64_t seed = 0;
  bool pretrained = false;

  Matrix enc_w, enc_b, dec_w, dec_b;
  Matrix tr_w0, tr_b0, tr_w1, tr_b1;

  FtNets() = default;
  FtNets(std::size_t d_phi, std::size_t d_psi, std::uint64_t seed,
         Activation encoder_activation = Activation::relu);

  Matrix encode(const Matrix& psi) const;
  Matrix reconstruct(const Matrix& psi) const;
  Matrix translate(const Matrix& phi) const;
  ParamRefs paraphraser_trainable(const std::string& prefix = "ft");
  ParamRefs translator_trainable(const std::string& prefix = "ft");
};

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::aft;
  Kernel kernel = Kernel::linear;  // only meaningful for kind == aft
  MuMode mu_mode = MuMode::diagonal;
  double beta = 1.0;
  double eps_norm = kDefaultEps;
  double eps_sqrt = kDefaultEps;
};

// Taped forms. phi is usually a model output; psi a constant.

ad::Var aft_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const MuWeights& mu, Kernel kernel,
                        double eps_norm = kDefaultEps, double eps_sqrt = kDefaultEps);
/// Kernel distance between two already-scaled feature batches (steps 2-5).
ad::Var kernel_distance(ad::Var phi, ad::Var mu_psi, Kernel kernel, double eps_norm, double eps_sqrt);
ad::Var l2_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const MuWeights& mu);
ad::Var kd_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const KdTransform& v);
ad::Var rkd_regularizer(ad::Var phi, ad::Var psi);
ad::Var ft_regularizer(ad::Tape& tape, ad::Var phi, ad::Var psi, const FtNets& nets,
                       double eps_norm = kDefaultEps);

// Value-only forms.

double aft_regularizer(const Matrix& phi, const Matrix& psi, const MuWeights& mu, Kernel kernel,
                       double eps_norm = kDefaultEps, double eps_sqrt = kDefaultEps);
double l2_regularizer(const Matrix& phi, const Matrix& psi, const MuWeights& mu);
double kd_regularizer(const Matrix& phi, const Matrix& psi, const KdTransform& v);
double rkd_regularizer(const Matrix& phi, const Matrix& psi);
double ft_regularizer(const Matrix& phi, const Matrix& psi, const FtNets& nets,
                      double eps_norm = kDefaultEps);

/// Mean squared reconstruction error of the paraphraser on centered psi.
double reconstruction_mse(const Matrix& psi, const FtNets& nets);

/// Trains the paraphraser as an autoencoder on (globally centered) psi_train
/// with Adam, using seeded mini-batches of at most 256 rows, then freezes it.
/// Returns the final full-data reconstruction MSE.
double pretrain_paraphraser(const Matrix& psi_train, FtNets& nets, std::size_t steps, double lr);

/// A configured regularizer plus its auxiliary parameters, as used by the trainer.
class Regularizer {
 public:
  Regularizer() = default;
  Regularizer(const RegularizerSpec& spec, std::size_t d_phi, std::size_t d_psi, std::uint64_t seed);

  const RegularizerSpec& spec() const { return spec_; }
  bool active() const { return spec_.kind != RegularizerKind::none; }

  /// Records delta(phi, psi) on the tape, registering auxiliary parameters.
  ad::Var evaluate(ad::Tape& tape, ad::Var phi, ad::Var psi) const;

  /// Auxiliary tensors updated with the gradient of delta alone.
  ParamRefs trainable();

  const MuWeights& mu() const { return mu_; }
  MuWeights& mu() { return mu_; }
  const KdTransform& kd() const { return kd_; }
  FtNets& ft() { return ft_; }
  const FtNets& ft() const { return ft_; }

 private:
  RegularizerSpec spec_{RegularizerKind::none};
  MuWeights mu_;
  KdTransform kd_;
  FtNets ft_;
};

std::string to_string(RegularizerKind kind);
std::string to_string(Kernel kernel);
std::string to_string(MuMode mode);
RegularizerKind parse_regularizer_kind(const std::string& name);
Kernel parse_kernel(const std::string& name);
MuMode parse_mu_mode(const std::string& name);

}  // namespace aft
