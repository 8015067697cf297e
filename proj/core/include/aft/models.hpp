// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aft/matrix.hpp"
#include "aft/optim.hpp"
#include "aft/tape.hpp"

namespace aft {

enum class Activation { tanh, relu, identity };
enum class ExtractorKind { linear, mlp };

struct ExtractorConfig {
  ExtractorKind kind = ExtractorKind::mlp;
  std::vector<std::size_t> hidden = {64};  // ignored for linear extractors
  std::size_t d_phi = 32;
  Activation activation = Activation::tanh;
};

/// Downstream feature extractor phi_theta.
///
/// Layers compute x * W^T + b with W stored (out x in). An MLP applies the
/// activation after every layer, including the last; a linear extractor is a
/// single affine layer with no activation.
class Extractor {
 public:
  Extractor() = default;
  /// Gaussian init with variance 1 / fan_in, zero biases.
  Extractor(const ExtractorConfig& config, std::size_t d_in, std::uint64_t seed);

  /// Linear extractor initialised to the (truncated) identity map.
  static Extractor linear_identity(std::size_t d_in, std::size_t d_phi);

  const ExtractorConfig& config() const { return config_; }
  std::size_t d_in() const { return d_in_; }
  std::size_t d_phi() const { return config_.d_phi; }
  std::size_t n_layers() const { return weights_.size(); }

  std::vector<Matrix>& weights() { return weights_; }
  std::vector<Matrix>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Matrix>& biases() const { return biases_; }

  ParamRefs trainable(const std::string& prefix = "extractor");
  /// Registers parameters on `tape` and records the forward pass.
  ad::Var forward(ad::Tape& tape, ad::Var x, const std::string& prefix = "extractor") const;
  /// Untaped forward pass.
  Matrix forward(const Matrix& x) const;

 private:
  ExtractorConfig config_;
  std::size_t d_in_ = 0;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
};

/// Linear head producing logits = phi * W^T + b.
struct LinearHead {
  Matrix weight;  // d_out x d_phi
  Matrix bias;    // 1 x d_out

  LinearHead() = default;
  LinearHead(std::size_t d_phi, std::size_t d_out, std::uint64_t seed);

  ParamRefs trainable(const std::string& prefix = "head");
  ad::Var forward(ad::Tape& tape, ad::Var phi, const std::string& prefix = "head") const;
  Matrix forward(const Matrix& phi) const;
};

struct ForwardResult {
  ad::Var phi;
  ad::Var logits;
};

ForwardResult forward(ad::Tape& tape, const Extractor& extractor, const LinearHead& head,
                      ad::Var x);

/// Mean softmax cross-entropy of a logits matrix (untaped).
double cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels);

/// Fraction of rows whose argmax logit equals the label.
double accuracy(const Matrix& logits, std::span<const std::uint32_t> labels);

/// Flattened outer product: out[i * b.size() + j] = a[i] * b[j].
std::vector<double> tensor_product_features(std::span<const double> a, std::span<const double> b);

/// Row-wise tensor product of two feature batches (B x d_a, B x d_b -> B x d_a*d_b).
Matrix tensor_product_features(const Matrix& a, const Matrix& b);

std::string to_string(Activation activation);
std::string to_string(ExtractorKind kind);
/// Throw UsageError listing the valid names.
Activation parse_activation(const std::string& name);
ExtractorKind parse_extractor_kind(const std::string& name);

ad::Var activate(ad::Var x, Activation activation);
Matrix activate(const Matrix& x, Activation activation);

}  // namespace aft
